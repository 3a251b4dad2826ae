"""Run configuration, state construction, run reports and traces.

A run is described by a :class:`RunSpec`, usually read from an INI file::

    [run]
    mode = m32            ; m64 or m32
    entry = 0x1000        ; effective address in CS
    stack = 0x80000       ; initial rsp/esp
    max_steps = 1000000
    trace = no
    align_check = no

    [image.main]          ; any number of [image.<name>] sections
    address = 0x1000      ; linear load address
    path = prog.bin       ; raw bytes, relative to the config file

    [segment.ss]          ; optional, one per register (es cs ss ds fs gs)
    base = 0
    limit = 0xffff
    db = 1
    e = 1
    l = 0

Segments not configured are flat (base 0, limit 0xFFFFFFFF, D/B=1; CS has
L=1 in m64).

Trace lines have the form ``<step> <mode> <rip> <hex bytes> <MNEMONIC>
[reg=value ...] [HALT | #XX]``; the register list holds only registers whose
value changed, ``rflags`` included. Register names and widths follow the mode
(``eax=0000002a`` in m32, ``rax=000000000000002a`` in m64).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO

from .isa import RunResult, StepStatus, mnemonic, run, step
from .state import (CS, EFER_LMA, GPR_NAMES32, GPR_NAMES64, MASK32, RSP, SEG_NAMES, ExecConfig,
                    MachineState, SegmentRegister, flat_segment, proc_mode)
from .segmentation import canonical_address_p, segment_base_and_bounds

EXIT_HALTED = 0
EXIT_FAULTED = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3


class ConfigError(ValueError):
    pass


@dataclass
class SegmentSpec:
    base: int = 0
    limit: int = MASK32
    db: bool = True
    e: bool = False
    l: bool = False  # noqa: E741 - the descriptor bit's name


@dataclass
class RunSpec:
    mode: str = "m64"
    images: list[tuple[int, Path]] = field(default_factory=list)
    entry: int = 0
    stack: int = 0
    segments: dict[str, SegmentSpec] = field(default_factory=dict)
    alignment_checking: bool = False
    max_steps: int = 1_000_000
    trace: bool = False


def parse_int(text: str) -> int:
    try:
        return int(text.strip(), 0)
    except ValueError:
        raise ConfigError(f"not an integer: {text!r}") from None


def read_config(path: str | Path) -> RunSpec:
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None

    spec = RunSpec()
    if parser.has_section("run"):
        section = parser["run"]
        spec.mode = section.get("mode", spec.mode)
        spec.entry = parse_int(section.get("entry", "0"))
        spec.stack = parse_int(section.get("stack", "0"))
        spec.max_steps = parse_int(section.get("max_steps", str(spec.max_steps)))
        try:
            spec.trace = section.getboolean("trace", False)
            spec.alignment_checking = section.getboolean("align_check", False)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    for name in parser.sections():
        if name.startswith("image."):
            sec = parser[name]
            if "address" not in sec or "path" not in sec:
                raise ConfigError(f"[{name}] needs address and path")
            spec.images.append((parse_int(sec["address"]), path.parent / sec["path"]))
        elif name.startswith("segment."):
            reg = name.split(".", 1)[1].lower()
            if reg not in SEG_NAMES:
                raise ConfigError(f"unknown segment register {reg!r}")
            sec = parser[name]
            spec.segments[reg] = SegmentSpec(
                base=parse_int(sec.get("base", "0")),
                limit=parse_int(sec.get("limit", hex(MASK32))),
                db=parse_int(sec.get("db", "1")) != 0,
                e=parse_int(sec.get("e", "0")) != 0,
                l=parse_int(sec.get("l", "0")) != 0,
            )
        elif name != "run":
            raise ConfigError(f"unknown section [{name}]")
    return spec


def _segment_register(spec: RunSpec, index: int) -> SegmentRegister:
    name = SEG_NAMES[index]
    long_code = spec.mode == "m64" and index == CS
    if name not in spec.segments:
        return flat_segment(code=index == CS, long=long_code)
    seg = spec.segments[name]
    try:
        return SegmentRegister(base=seg.base, limit=seg.limit, attr_long=seg.l or long_code,
                               attr_default_big=seg.db, attr_expand_down=seg.e,
                               attr_present=True, attr_executable=index == CS)
    except ValueError as exc:
        raise ConfigError(f"segment {name}: {exc}") from None


def build_state(spec: RunSpec) -> MachineState:
    """Validate ``spec`` and construct the initial state with images loaded.

    Raises :class:`ConfigError` before anything executes.
    """
    if spec.mode not in ("m64", "m32"):
        raise ConfigError(f"mode must be m64 or m32, not {spec.mode!r}")
    if spec.max_steps < 0:
        raise ConfigError("max_steps must be non-negative")
    blobs = []
    for addr, path in spec.images:
        try:
            blobs.append((addr, Path(path).read_bytes(), path))
        except OSError as exc:
            raise ConfigError(f"cannot read image {path}: {exc.strerror}") from None
    ordered = sorted(blobs, key=lambda b: b[0])
    for (a1, d1, p1), (a2, _, p2) in zip(ordered, ordered[1:]):
        if a1 + len(d1) > a2:
            raise ConfigError(f"images overlap: {p1} and {p2}")

    state = MachineState(ExecConfig(alignment_checking=spec.alignment_checking,
                                    max_steps=spec.max_steps))
    state.msr_ia32_efer = EFER_LMA if spec.mode == "m64" else 0
    state.segs = [_segment_register(spec, i) for i in range(6)]
    mode = proc_mode(state)
    if spec.mode == "m64":
        if not canonical_address_p(spec.entry):
            raise ConfigError(f"entry {spec.entry:#x} is not canonical")
    else:
        bounds = segment_base_and_bounds(state, mode, CS)
        width = MASK32 if state.segs[CS].attr_default_big else 0xFFFF
        if not (bounds.lower <= spec.entry <= bounds.upper) or spec.entry > width:
            raise ConfigError(f"entry {spec.entry:#x} outside CS bounds "
                              f"[{bounds.lower:#x}, {bounds.upper:#x}]")
    for addr, data, _ in blobs:
        state.load_image(addr, data)
    state.rip = spec.entry
    state.gpr[RSP] = spec.stack
    return state


def _reg_names(mode_tag: str) -> tuple[tuple[str, ...], int]:
    return (GPR_NAMES64, 16) if mode_tag == "m64" else (GPR_NAMES32, 8)


def format_trace_line(index: int, mode_tag: str, rip: int, raw: bytes, mnem: str,
                      changes: list[tuple[str, int]], ending: str = "") -> str:
    digits = 16 if mode_tag == "m64" else 8
    parts = [str(index), mode_tag, f"{rip:0{digits}x}", raw.hex() or "??", mnem]
    parts += [f"{name}={value:0{digits}x}" for name, value in changes]
    if ending:
        parts.append(ending)
    return " ".join(parts)


def _changes(before: tuple, state: MachineState, mode_tag: str) -> list[tuple[str, int]]:
    names, count = _reg_names(mode_tag)
    mask = MASK32 if mode_tag == "m32" else (1 << 64) - 1
    out = []
    for i in range(count):
        if state.gpr[i] != before[i]:
            out.append((names[i], state.gpr[i] & mask))
    if state.rflags != before[16]:
        out.append(("rflags", state.rflags & mask))
    return out


def execute(state: MachineState, max_steps: int, trace: TextIO | None = None) -> RunResult:
    """Step like :func:`x86interp.run`, emitting one trace line per step when ``trace`` is set."""
    if trace is None:
        return run(state, max_steps)
    steps = 0
    while steps < max_steps:
        mode_tag = proc_mode(state).tag
        before = tuple(state.gpr) + (state.rflags,)
        rip = state.rip
        record: list = []
        out = step(state, record)
        raw = bytes(record[0].raw) if record else b""
        mnem = mnemonic(record[0]) if record else "?"
        if out.status is StepStatus.FAULT:
            trace.write(format_trace_line(steps, mode_tag, rip, raw, mnem, [], str(out.fault.kind)) + "\n")
            return RunResult(state, "faulted", steps, out.fault)
        ending = "HALT" if out.status is StepStatus.HALT else ""
        trace.write(format_trace_line(steps, mode_tag, rip, raw, mnem,
                                      _changes(before, state, mode_tag), ending) + "\n")
        steps += 1
        if ending:
            return RunResult(state, "halted", steps)
    return RunResult(state, "step-budget", steps)


def format_report(result: RunResult, mode_tag: str) -> list[str]:
    state = result.state
    names, count = _reg_names(mode_tag)
    digits = 16 if mode_tag == "m64" else 8
    mask = MASK32 if mode_tag == "m32" else (1 << 64) - 1
    lines = [f"reason={result.reason}", f"steps={result.steps}",
             f"rip=0x{state.rip & mask:0{digits}x}", f"rflags=0x{state.rflags & mask:0{digits}x}"]
    lines += [f"{names[i]}=0x{state.gpr[i] & mask:0{digits}x}" for i in range(count)]
    if result.fault is not None:
        f = result.fault
        addr = "" if f.address is None else f" address=0x{f.address:x}"
        lines.append(f"fault={f.kind} reason={f.reason}{addr}")
    return lines


def exit_code(result: RunResult) -> int:
    return {"halted": EXIT_HALTED, "faulted": EXIT_FAULTED}.get(result.reason, EXIT_BUDGET)


def load_and_run(spec: RunSpec, out: TextIO) -> int:
    """Build, run and report; returns the process exit status.

    Configuration errors propagate as :class:`ConfigError` before any step runs.
    """
    state = build_state(spec)
    result = execute(state, spec.max_steps, out if spec.trace else None)
    for line in format_report(result, spec.mode):
        out.write(line + "\n")
    return exit_code(result)


def replay_trace(lines: list[str], gpr: list[int], rflags: int) -> tuple[list[int], int]:
    """Apply the register deltas of trace ``lines`` to an initial register file."""
    gpr = list(gpr)
    index = {name: i for i, name in enumerate(GPR_NAMES64)}
    index.update({name: i for i, name in enumerate(GPR_NAMES32)})
    for line in lines:
        for token in line.split()[5:]:
            if "=" not in token:
                continue
            name, value = token.split("=")
            if name == "rflags":
                rflags = int(value, 16)
            else:
                gpr[index[name]] = int(value, 16)
    return gpr, rflags
