"""Lock-step comparison of the interpreter against :class:`NaiveMachine`."""

from __future__ import annotations

from dataclasses import dataclass

from ..isa import StepStatus, step
from ..state import PAGE_SIZE, MachineState
from .naive import NaiveFault, NaiveMachine


@dataclass
class DualReport:
    equal: bool
    steps: int
    reason: str  # "halted", "faulted", "step-budget" or "diverged"
    divergent_step: int | None = None
    detail: str = ""


def _nonzero_bytes(state: MachineState) -> dict[int, int]:
    out = {}
    for pno, page in state.memory.pages.items():
        if any(page):
            for i, b in enumerate(page):
                if b:
                    out[pno * PAGE_SIZE + i] = b
    return out


def _compare(main: MachineState, naive: NaiveMachine) -> str:
    for i in range(16):
        if main.gpr[i] != naive.regs[i]:
            return f"gpr[{i}] main={main.gpr[i]:#x} naive={naive.regs[i]:#x}"
    if main.rip != naive.rip:
        return f"rip main={main.rip:#x} naive={naive.rip:#x}"
    if main.rflags != naive.flags:
        return f"rflags main={main.rflags:#x} naive={naive.flags:#x}"
    naive_mem = {a: b for a, b in naive.mem.items() if b}
    main_mem = _nonzero_bytes(main)
    if main_mem != naive_mem:
        diff = sorted(set(main_mem.items()) ^ set(naive_mem.items()))
        return f"memory differs at {diff[0][0]:#x}"
    return ""


def dual_interpret(state: MachineState, max_steps: int = 100_000, flag_mutation: int = 0) -> DualReport:
    """Run both interpreters from copies of ``state`` and compare after every step.

    ``flag_mutation`` is XORed into the naive machine's flag results; a nonzero
    value must produce a divergence, which is how the harness checks itself.
    """
    main = state.copy()
    naive = NaiveMachine(state, flag_mutation=flag_mutation)
    for i in range(max_steps):
        out = step(main)
        try:
            naive_status = naive.step()
            naive_fault = None
        except NaiveFault as exc:
            naive_status = "fault"
            naive_fault = exc.kind
        if out.status is StepStatus.FAULT:
            if naive_fault != str(out.fault.kind):
                return DualReport(False, i, "diverged", i,
                                  f"main faulted {out.fault.kind}, naive {naive_fault or 'did not'}")
        elif naive_fault is not None:
            return DualReport(False, i, "diverged", i, f"naive faulted {naive_fault}, main did not")
        elif (out.status is StepStatus.HALT) != (naive_status == "halt"):
            return DualReport(False, i, "diverged", i, "halt disagreement")
        detail = _compare(main, naive)
        if detail:
            return DualReport(False, i, "diverged", i, detail)
        if out.status is StepStatus.FAULT:
            return DualReport(True, i, "faulted")
        if out.status is StepStatus.HALT:
            return DualReport(True, i + 1, "halted")
    return DualReport(True, max_steps, "step-budget")
