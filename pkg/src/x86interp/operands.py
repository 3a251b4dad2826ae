"""Uniform operand access through ModR/M, and segment selection."""

from __future__ import annotations

from typing import NamedTuple, Union

from .decoder import DecodedInstruction, Prefixes, effective_addr
from .memory import READ, AccessIntent, read_effective, write_effective
from .state import FS, GS, MODE64, MachineState, ProcMode, read_gpr, write_gpr


class RegisterLoc(NamedTuple):
    reg: int
    high8: bool = False


class MemoryLoc(NamedTuple):
    seg: int
    effective: int
    nbytes: int


OperandLocation = Union[RegisterLoc, MemoryLoc]


def select_segment_register(mode: ProcMode, prefixes: Prefixes, hint: int) -> int:
    """Apply a segment-override prefix over the addressing-form default.

    In 64-bit mode only FS and GS overrides take effect.
    """
    seg = prefixes.seg
    if seg is not None and (mode is not MODE64 or seg == FS or seg == GS):
        return seg
    return hint


_FULL_REGS = tuple(RegisterLoc(i, False) for i in range(16))
_LEGACY_BYTE_REGS = _FULL_REGS[:4] + tuple(RegisterLoc(i, True) for i in range(4))


def byte_register(index: int, rex_present: bool) -> RegisterLoc:
    """Map a byte-register number: without REX, 4-7 are AH, CH, DH, BH."""
    if rex_present:
        return _FULL_REGS[index]
    return _LEGACY_BYTE_REGS[index]


def register_loc(index: int, nbytes: int, rex_present: bool) -> RegisterLoc:
    if nbytes == 1 and not rex_present:
        return _LEGACY_BYTE_REGS[index]
    return _FULL_REGS[index]


def memory_location(state: MachineState, mode: ProcMode, insn: DecodedInstruction, nbytes: int,
                    next_ip: int) -> tuple[MemoryLoc, int]:
    effective, hint, disp_bytes = effective_addr(state, mode, insn, next_ip)
    seg = select_segment_register(mode, insn.prefixes, hint)
    return MemoryLoc(seg, effective, nbytes), disp_bytes


def operand_from_modrm(state: MachineState, mode: ProcMode, insn: DecodedInstruction, nbytes: int,
                       intent: AccessIntent = READ, next_ip: int = 0) -> tuple[int, OperandLocation, int]:
    """Read the r/m operand; returns (value, location, displacement bytes).

    The location is returned so that a read-modify-write instruction can store
    its result without recomputing the address.
    """
    if insn.mod == 3:
        loc = register_loc(insn.rm, nbytes, insn.prefixes.rex is not None)
        return read_gpr(state, loc.reg, nbytes, loc.high8), loc, 0
    loc, disp_bytes = memory_location(state, mode, insn, nbytes, next_ip)
    value = read_effective(state, mode, loc.seg, loc.effective, nbytes, intent)
    return value, loc, disp_bytes


def operand_to_location(state: MachineState, mode: ProcMode, loc: OperandLocation, nbytes: int,
                        value: int) -> None:
    if type(loc) is RegisterLoc:
        write_gpr(state, loc.reg, nbytes, value, loc.high8)
    else:
        write_effective(state, mode, loc.seg, loc.effective, nbytes, value)


def read_location(state: MachineState, mode: ProcMode, loc: OperandLocation, nbytes: int) -> int:
    if type(loc) is RegisterLoc:
        return read_gpr(state, loc.reg, nbytes, loc.high8)
    return read_effective(state, mode, loc.seg, loc.effective, nbytes)
