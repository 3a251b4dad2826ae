"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_results: list[tuple[str, bool, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): test checks one acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        if not rep.passed and not detail:
            detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "failed"
        _results.append((marker.args[0], rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _results:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
