"""Mode-aware instruction pointer and stack pointer handling.

In 32-bit mode the pointers are the low 32 or 16 bits of RIP/RSP, selected by
the D bit of CS (instruction pointer) or the B bit of SS (stack pointer).
"""

from __future__ import annotations

from .faults import FaultKind, X86Fault
from .state import CS, MASK16, MASK32, MASK64, MODE64, RSP, SS, MachineState, ProcMode


def read_ip(state: MachineState, mode: ProcMode) -> int:
    if mode is MODE64:
        return state.rip
    return state.rip & (MASK32 if state.segs[CS].attr_default_big else MASK16)


def add_to_ip(state: MachineState, mode: ProcMode, ip: int, delta: int) -> int:
    """Offset an instruction pointer value; the state is consulted only for CS limits."""
    if mode is MODE64:
        new = (ip + delta) & MASK64
        top = new >> 47
        if top != 0 and top != 0x1FFFF:
            raise X86Fault(FaultKind.GP, "non-canonical", new)
        return new
    cs = state.segs[CS]
    new = (ip + delta) & (MASK32 if cs.attr_default_big else MASK16)
    if cs.attr_expand_down:
        if new < cs.limit or new > (MASK32 if cs.attr_default_big else MASK16):
            raise X86Fault(FaultKind.GP, "limit", new)
    elif new > cs.limit:
        raise X86Fault(FaultKind.GP, "limit", new)
    return new


def write_ip(state: MachineState, mode: ProcMode, ip: int) -> None:
    if mode is MODE64:
        state.rip = ip
    elif state.segs[CS].attr_default_big:
        state.rip = (state.rip & 0xFFFFFFFF00000000) | (ip & MASK32)
    else:
        state.rip = (state.rip & 0xFFFFFFFFFFFF0000) | (ip & MASK16)


def read_sp(state: MachineState, mode: ProcMode) -> int:
    if mode is MODE64:
        return state.gpr[RSP]
    return state.gpr[RSP] & (MASK32 if state.segs[SS].attr_default_big else MASK16)


def add_to_sp(state: MachineState, mode: ProcMode, sp: int, delta: int) -> int:
    """Offset a stack pointer value, honoring expand-down stack segments."""
    if mode is MODE64:
        new = (sp + delta) & MASK64
        top = new >> 47
        if top != 0 and top != 0x1FFFF:
            raise X86Fault(FaultKind.SS, "non-canonical", new)
        return new
    ss = state.segs[SS]
    width = MASK32 if ss.attr_default_big else MASK16
    new = (sp + delta) & width
    if ss.attr_expand_down:
        if new < ss.limit:
            raise X86Fault(FaultKind.SS, "limit", new)
    elif new > ss.limit:
        raise X86Fault(FaultKind.SS, "limit", new)
    return new


def write_sp(state: MachineState, mode: ProcMode, sp: int) -> None:
    gpr = state.gpr
    if mode is MODE64:
        gpr[RSP] = sp
    elif state.segs[SS].attr_default_big:
        gpr[RSP] = (gpr[RSP] & 0xFFFFFFFF00000000) | (sp & MASK32)
    else:
        gpr[RSP] = (gpr[RSP] & 0xFFFFFFFFFFFF0000) | (sp & MASK16)
