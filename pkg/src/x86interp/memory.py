"""Layered memory access.

The linear layer reads and writes the flat byte store directly. The effective
layer translates a segment-relative address, applies alignment checking to
data accesses when enabled, and then delegates to the linear layer.
"""

from __future__ import annotations

import enum

from .faults import FaultKind, X86Fault
from .segmentation import ea_to_la
from .state import MachineState, ProcMode


class AccessIntent(enum.Enum):
    READ = "r"
    EXECUTE = "x"
    WRITE = "w"


READ = AccessIntent.READ
EXECUTE = AccessIntent.EXECUTE
WRITE = AccessIntent.WRITE

SUPPORTED_SIZES = (1, 2, 4, 8, 16)


def read_linear(state: MachineState, addr: int, nbytes: int, signed: bool = False) -> int:
    value = state.memory.read(addr, nbytes)
    if signed and value >> (8 * nbytes - 1):
        value -= 1 << (8 * nbytes)
    return value


def write_linear(state: MachineState, addr: int, nbytes: int, value: int) -> None:
    """Little-endian store; negative values are written in two's complement."""
    state.memory.write(addr, nbytes, value)


def alignment_ok(addr: int, nbytes: int, kind: str = "normal") -> bool:
    """Alignment rule for #AC.

    Normal operands align to their own size. A far pointer (``kind="mem-ptr"``,
    offset followed by a 16-bit selector) aligns to the size of its offset part,
    so m16:16, m16:32 and m16:64 align to 2, 4 and 8.
    """
    if kind == "mem-ptr":
        align = nbytes - 2
    elif kind == "normal":
        align = nbytes
    else:
        raise ValueError(f"unknown operand kind {kind!r}")
    return addr & (align - 1) == 0


def read_effective(state: MachineState, mode: ProcMode, seg: int, effective: int, nbytes: int,
                   intent: AccessIntent = READ, signed: bool = False) -> int:
    la = ea_to_la(state, mode, seg, effective, nbytes)
    if intent is READ and state.cfg.alignment_checking and la & (nbytes - 1):
        raise X86Fault(FaultKind.AC, "alignment", effective)
    value = state.memory.read(la, nbytes)
    if signed and value >> (8 * nbytes - 1):
        value -= 1 << (8 * nbytes)
    return value


def write_effective(state: MachineState, mode: ProcMode, seg: int, effective: int, nbytes: int,
                    value: int) -> None:
    la = ea_to_la(state, mode, seg, effective, nbytes)
    if state.cfg.alignment_checking and la & (nbytes - 1):
        raise X86Fault(FaultKind.AC, "alignment", effective)
    state.memory.write(la, nbytes, value)
