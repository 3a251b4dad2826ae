"""Instruction semantics, opcode dispatch and the step/run interpreter loop.

Every semantic function performs all reads and fallible checks first and issues
at most one memory write before touching registers, flags or the instruction
pointer, so a fault always leaves the machine state exactly as it was before
the instruction started.

Flags that the architecture leaves undefined are given fixed values: AF is
cleared by logical operations and shifts, OF after a multi-bit shift uses the
single-bit formula, and CF after an oversized shift is the bit shifted out of
an unbounded-width operand (zero when nothing remains).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .decoder import DecodedInstruction, fetch_decode
from .faults import X86Fault
from .memory import read_effective, write_effective
from .operands import memory_location, operand_from_modrm, operand_to_location, register_loc
from .pointers import add_to_ip, add_to_sp, read_sp, write_ip, write_sp
from .segmentation import ea_to_la
from .state import (AF, CF, CS, MASK16, MASK32, MASK64, MODE64, OF, PAGE_SHIFT, PF, RAX, RCX,
                    RSP, SF, SS, STATUS_FLAGS, ZF, MachineState, ProcMode, proc_mode, read_gpr,
                    write_gpr)

PARITY = tuple(PF if bin(i).count("1") % 2 == 0 else 0 for i in range(256))
SIZE_MASK = {1: 0xFF, 2: MASK16, 4: MASK32, 8: MASK64}
SIGN_BIT = {1: 0x80, 2: 0x8000, 4: 0x80000000, 8: 0x8000000000000000}
NOT_STATUS = ~STATUS_FLAGS & MASK64
NOT_STATUS_KEEP_CF = ~(STATUS_FLAGS & ~CF) & MASK64

ALU_NAMES = ("ADD", "OR", "ADC", "SBB", "AND", "SUB", "XOR", "CMP")
ALU_CMP = 7


class StepStatus(enum.Enum):
    CONTINUE = "continue"
    HALT = "halt"
    FAULT = "fault"


@dataclass(frozen=True)
class StepOutcome:
    status: StepStatus
    fault: X86Fault | None = None
    rip: int | None = None


CONTINUE = StepOutcome(StepStatus.CONTINUE)
HALTED = StepOutcome(StepStatus.HALT)


@dataclass
class RunResult:
    state: MachineState
    reason: str  # "halted", "step-budget" or "faulted"
    steps: int
    fault: X86Fault | None = None


def _sext(value: int, nbytes: int) -> int:
    if value >> (8 * nbytes - 1):
        return value - (1 << (8 * nbytes))
    return value


def _szp(r: int, size: int) -> int:
    flags = PARITY[r & 0xFF]
    if r == 0:
        flags |= ZF
    if r & SIGN_BIT[size]:
        flags |= SF
    return flags


def alu(op: int, a: int, b: int, size: int, rflags: int) -> tuple[int, int]:
    """Compute one of the eight classic ALU operations; returns (result, new status flags)."""
    mask = SIZE_MASK[size]
    sign = SIGN_BIT[size]
    if op == 0 or op == 2:  # ADD, ADC
        carry = rflags & CF if op == 2 else 0
        full = a + b + carry
        r = full & mask
        flags = _szp(r, size) | ((a ^ b ^ r) & AF)
        if full > mask:
            flags |= CF
        if (a ^ r) & (b ^ r) & sign:
            flags |= OF
        return r, flags
    if op == 5 or op == 7 or op == 3:  # SUB, CMP, SBB
        borrow = rflags & CF if op == 3 else 0
        r = (a - b - borrow) & mask
        flags = _szp(r, size) | ((a ^ b ^ r) & AF)
        if a < b + borrow:
            flags |= CF
        if (a ^ b) & (a ^ r) & sign:
            flags |= OF
        return r, flags
    if op == 1:
        r = a | b
    elif op == 4:
        r = a & b
    else:
        r = a ^ b
    return r, _szp(r, size)


def _commit_flags(state: MachineState, flags: int) -> None:
    state.rflags = (state.rflags & NOT_STATUS) | flags


def _branch_target(state: MachineState, mode: ProcMode, ip: int, delta: int, osize: int) -> int:
    target = add_to_ip(state, mode, ip, delta)
    if mode is not MODE64 and osize == 2 and target > MASK16:
        target = add_to_ip(state, mode, target & MASK16, 0)
    return target


def _stack_size(mode: ProcMode, insn: DecodedInstruction) -> int:
    # 64-bit stack operations and near branches always use 8 bytes
    return 8 if mode is MODE64 else insn.opsize


def _push(state: MachineState, mode: ProcMode, value: int, n: int) -> int:
    """Store ``value`` below the stack pointer; returns the new stack pointer (not yet written)."""
    sp = add_to_sp(state, mode, read_sp(state, mode), -n)
    write_effective(state, mode, SS, sp, n, value)
    return sp


# --- semantic functions -----------------------------------------------------------------
# Each takes (state, mode, insn, next_ip) and returns None, or HALTED for HLT.


def op_alu_rm_reg(state, mode, insn, next_ip):
    """00/01/08/09/...: op r/m, reg (and the reverse direction for +2/+3)."""
    opc = insn.opcode
    op = opc >> 3
    size = insn.opsize
    rex = insn.prefixes.rex is not None
    rm_val, loc, _ = operand_from_modrm(state, mode, insn, size, next_ip=next_ip)
    reg_loc = register_loc(insn.reg, size, rex)
    reg_val = read_gpr(state, reg_loc.reg, size, reg_loc.high8)
    if opc & 2:
        a, b, dst = reg_val, rm_val, reg_loc
    else:
        a, b, dst = rm_val, reg_val, loc
    r, flags = alu(op, a, b, size, state.rflags)
    if op != ALU_CMP:
        operand_to_location(state, mode, dst, size, r)
    _commit_flags(state, flags)
    write_ip(state, mode, next_ip)


def op_alu_acc_imm(state, mode, insn, next_ip):
    """04/05/0C/0D/...: op AL/rAX, imm."""
    op = insn.opcode >> 3
    size = insn.opsize
    imm = insn.immediate
    if size == 8:
        imm = _sext(imm, 4) & MASK64
    a = read_gpr(state, RAX, size)
    r, flags = alu(op, a, imm, size, state.rflags)
    if op != ALU_CMP:
        write_gpr(state, RAX, size, r)
    _commit_flags(state, flags)
    write_ip(state, mode, next_ip)


def op_alu_group1(state, mode, insn, next_ip):
    """80/81/83: op r/m, imm."""
    size = insn.opsize
    imm = insn.immediate
    if insn.opcode == 0x83 or (size == 8 and insn.imm_size == 4):
        imm = _sext(imm, insn.imm_size) & SIZE_MASK[size]
    op = insn.reg & 7
    a, loc, _ = operand_from_modrm(state, mode, insn, size, next_ip=next_ip)
    r, flags = alu(op, a, imm, size, state.rflags)
    if op != ALU_CMP:
        operand_to_location(state, mode, loc, size, r)
    _commit_flags(state, flags)
    write_ip(state, mode, next_ip)


def op_test_rm_reg(state, mode, insn, next_ip):
    size = insn.opsize
    a, _, _ = operand_from_modrm(state, mode, insn, size, next_ip=next_ip)
    reg_loc = register_loc(insn.reg, size, insn.prefixes.rex is not None)
    b = read_gpr(state, reg_loc.reg, size, reg_loc.high8)
    _commit_flags(state, _szp(a & b, size))
    write_ip(state, mode, next_ip)


def op_test_acc_imm(state, mode, insn, next_ip):
    size = insn.opsize
    imm = insn.immediate
    if size == 8:
        imm = _sext(imm, 4) & MASK64
    _commit_flags(state, _szp(read_gpr(state, RAX, size) & imm, size))
    write_ip(state, mode, next_ip)


def _inc_dec_flags(old_flags: int, a: int, r: int, size: int, dec: bool) -> int:
    flags = _szp(r, size) | ((a ^ 1 ^ r) & AF) | (old_flags & CF)
    sign = SIGN_BIT[size]
    if dec:
        if a == sign:
            flags |= OF
    elif r == sign:
        flags |= OF
    return flags


def op_inc_dec_reg(state, mode, insn, next_ip):
    """40-4F outside 64-bit mode."""
    size = insn.opsize
    reg = insn.opcode & 7
    dec = bool(insn.opcode & 8)
    a = read_gpr(state, reg, size)
    r = (a - 1 if dec else a + 1) & SIZE_MASK[size]
    write_gpr(state, reg, size, r)
    state.rflags = (state.rflags & NOT_STATUS_KEEP_CF) | _inc_dec_flags(state.rflags, a, r, size, dec)
    write_ip(state, mode, next_ip)


def _inc_dec_rm(state, mode, insn, next_ip, size):
    dec = insn.reg & 7 == 1
    a, loc, _ = operand_from_modrm(state, mode, insn, size, next_ip=next_ip)
    r = (a - 1 if dec else a + 1) & SIZE_MASK[size]
    operand_to_location(state, mode, loc, size, r)
    state.rflags = (state.rflags & NOT_STATUS_KEEP_CF) | _inc_dec_flags(state.rflags, a, r, size, dec)
    write_ip(state, mode, next_ip)


def op_group4(state, mode, insn, next_ip):
    """FE /0 /1: INC/DEC r/m8."""
    _inc_dec_rm(state, mode, insn, next_ip, 1)


def op_group5(state, mode, insn, next_ip):
    """FF: INC, DEC, near CALL, near JMP, PUSH."""
    sub = insn.reg & 7
    if sub <= 1:
        _inc_dec_rm(state, mode, insn, next_ip, insn.opsize)
        return
    n = _stack_size(mode, insn)
    value, _, _ = operand_from_modrm(state, mode, insn, n, next_ip=next_ip)
    if sub == 6:
        sp = _push(state, mode, value, n)
        write_sp(state, mode, sp)
        write_ip(state, mode, next_ip)
        return
    target = add_to_ip(state, mode, value, 0)
    if sub == 2:
        sp = _push(state, mode, next_ip, n)
        write_sp(state, mode, sp)
    write_ip(state, mode, target)


def op_push_reg(state, mode, insn, next_ip):
    n = _stack_size(mode, insn)
    reg = (insn.opcode & 7) | ((insn.prefixes.rex or 0) & 1) << 3
    sp = _push(state, mode, read_gpr(state, reg, n), n)
    write_sp(state, mode, sp)
    write_ip(state, mode, next_ip)


def op_pop_reg(state, mode, insn, next_ip):
    n = _stack_size(mode, insn)
    reg = (insn.opcode & 7) | ((insn.prefixes.rex or 0) & 1) << 3
    sp = read_sp(state, mode)
    value = read_effective(state, mode, SS, sp, n)
    new_sp = add_to_sp(state, mode, sp, n)
    write_sp(state, mode, new_sp)
    write_gpr(state, reg, n, value)
    write_ip(state, mode, next_ip)


def op_pop_rm(state, mode, insn, next_ip):
    """8F /0. A memory destination is addressed with the already-incremented stack pointer."""
    n = _stack_size(mode, insn)
    sp = read_sp(state, mode)
    value = read_effective(state, mode, SS, sp, n)
    new_sp = add_to_sp(state, mode, sp, n)
    if insn.mod == 3:
        write_sp(state, mode, new_sp)
        write_gpr(state, insn.rm, n, value)
    else:
        saved = state.gpr[RSP]
        write_sp(state, mode, new_sp)
        try:
            loc, _ = memory_location(state, mode, insn, n, next_ip)
        finally:
            state.gpr[RSP] = saved
        write_effective(state, mode, loc.seg, loc.effective, n, value)
        write_sp(state, mode, new_sp)
    write_ip(state, mode, next_ip)


def op_push_imm(state, mode, insn, next_ip):
    n = _stack_size(mode, insn)
    value = _sext(insn.immediate, insn.imm_size) & SIZE_MASK[n]
    sp = _push(state, mode, value, n)
    write_sp(state, mode, sp)
    write_ip(state, mode, next_ip)


def op_call_rel(state, mode, insn, next_ip):
    n = _stack_size(mode, insn)
    target = _branch_target(state, mode, next_ip, _sext(insn.immediate, insn.imm_size), n)
    sp = _push(state, mode, next_ip, n)
    write_sp(state, mode, sp)
    write_ip(state, mode, target)


def op_ret(state, mode, insn, next_ip):
    n = _stack_size(mode, insn)
    sp = read_sp(state, mode)
    value = read_effective(state, mode, SS, sp, n)
    release = n + (insn.immediate if insn.opcode == 0xC2 else 0)
    new_sp = add_to_sp(state, mode, sp, release)
    target = add_to_ip(state, mode, value, 0)
    write_sp(state, mode, new_sp)
    write_ip(state, mode, target)


def op_jmp_rel(state, mode, insn, next_ip):
    n = _stack_size(mode, insn)
    target = _branch_target(state, mode, next_ip, _sext(insn.immediate, insn.imm_size), n)
    write_ip(state, mode, target)


def condition(cc: int, rflags: int) -> bool:
    """Evaluate condition code ``cc`` (0-15) against rflags."""
    base = cc >> 1
    if base == 0:
        t = rflags & OF
    elif base == 1:
        t = rflags & CF
    elif base == 2:
        t = rflags & ZF
    elif base == 3:
        t = rflags & (CF | ZF)
    elif base == 4:
        t = rflags & SF
    elif base == 5:
        t = rflags & PF
    elif base == 6:
        t = bool(rflags & SF) != bool(rflags & OF)
    else:
        t = (rflags & ZF) or (bool(rflags & SF) != bool(rflags & OF))
    return (not t) if cc & 1 else bool(t)


def op_jcc(state, mode, insn, next_ip):
    if condition(insn.opcode & 0xF, state.rflags):
        n = _stack_size(mode, insn)
        next_ip = _branch_target(state, mode, next_ip, _sext(insn.immediate, insn.imm_size), n)
    write_ip(state, mode, next_ip)


def op_mov_rm_reg(state, mode, insn, next_ip):
    """88/89: MOV r/m, reg."""
    size = insn.opsize
    reg_loc = register_loc(insn.reg, size, insn.prefixes.rex is not None)
    value = read_gpr(state, reg_loc.reg, size, reg_loc.high8)
    if insn.mod == 3:
        loc = register_loc(insn.rm, size, insn.prefixes.rex is not None)
    else:
        loc, _ = memory_location(state, mode, insn, size, next_ip)
    operand_to_location(state, mode, loc, size, value)
    write_ip(state, mode, next_ip)


def op_mov_reg_rm(state, mode, insn, next_ip):
    """8A/8B: MOV reg, r/m."""
    size = insn.opsize
    value, _, _ = operand_from_modrm(state, mode, insn, size, next_ip=next_ip)
    reg_loc = register_loc(insn.reg, size, insn.prefixes.rex is not None)
    write_gpr(state, reg_loc.reg, size, value, reg_loc.high8)
    write_ip(state, mode, next_ip)


def op_mov_reg_imm(state, mode, insn, next_ip):
    """B0-BF."""
    size = insn.opsize
    reg = (insn.opcode & 7) | ((insn.prefixes.rex or 0) & 1) << 3
    loc = register_loc(reg, size, insn.prefixes.rex is not None)
    write_gpr(state, loc.reg, size, insn.immediate, loc.high8)
    write_ip(state, mode, next_ip)


def op_mov_rm_imm(state, mode, insn, next_ip):
    """C6/C7 /0."""
    size = insn.opsize
    value = insn.immediate
    if size == 8:
        value = _sext(value, 4) & MASK64
    if insn.mod == 3:
        loc = register_loc(insn.rm, size, insn.prefixes.rex is not None)
    else:
        loc, _ = memory_location(state, mode, insn, size, next_ip)
    operand_to_location(state, mode, loc, size, value)
    write_ip(state, mode, next_ip)


def op_lea(state, mode, insn, next_ip):
    size = insn.opsize
    loc, _ = memory_location(state, mode, insn, size, next_ip)
    write_gpr(state, insn.reg, size, loc.effective & SIZE_MASK[size])
    write_ip(state, mode, next_ip)


def op_xchg_rm_reg(state, mode, insn, next_ip):
    """86/87."""
    size = insn.opsize
    a, loc, _ = operand_from_modrm(state, mode, insn, size, next_ip=next_ip)
    reg_loc = register_loc(insn.reg, size, insn.prefixes.rex is not None)
    b = read_gpr(state, reg_loc.reg, size, reg_loc.high8)
    operand_to_location(state, mode, loc, size, b)
    write_gpr(state, reg_loc.reg, size, a, reg_loc.high8)
    write_ip(state, mode, next_ip)


def op_xchg_acc(state, mode, insn, next_ip):
    """90-97; 90 without REX.B is NOP."""
    reg = (insn.opcode & 7) | ((insn.prefixes.rex or 0) & 1) << 3
    if reg != RAX:
        size = insn.opsize
        a = read_gpr(state, RAX, size)
        b = read_gpr(state, reg, size)
        write_gpr(state, RAX, size, b)
        write_gpr(state, reg, size, a)
    write_ip(state, mode, next_ip)


def op_movx(state, mode, insn, next_ip):
    """0F B6/B7 (MOVZX) and 0F BE/BF (MOVSX)."""
    src_size = 1 if insn.opcode & 1 == 0 else 2
    size = insn.opsize
    value, _, _ = operand_from_modrm(state, mode, insn, src_size, next_ip=next_ip)
    if insn.opcode & 8:
        value = _sext(value, src_size) & SIZE_MASK[size]
    write_gpr(state, insn.reg, size, value)
    write_ip(state, mode, next_ip)


def shift(kind: int, a: int, count: int, size: int, rflags: int) -> tuple[int, int]:
    """SHL (4 or 6), SHR (5), SAR (7) with a pre-masked nonzero count; returns (result, flags)."""
    bits = 8 * size
    mask = SIZE_MASK[size]
    sign = SIGN_BIT[size]
    if kind == 5:
        r = a >> count
        cf = (a >> (count - 1)) & 1
        of = a & sign
    elif kind == 7:
        sa = a - (1 << bits) if a & sign else a
        r = (sa >> count) & mask
        cf = (sa >> (count - 1)) & 1
        of = 0
    else:
        wide = a << count
        r = wide & mask
        cf = (wide >> bits) & 1
        of = bool(r & sign) != bool(cf)
    flags = _szp(r, size)
    if cf:
        flags |= CF
    if of:
        flags |= OF
    return r, flags


def op_shift(state, mode, insn, next_ip):
    """C0/C1 (imm8), D0/D1 (by 1), D3 (by CL)."""
    size = insn.opsize
    opc = insn.opcode
    if opc <= 0xC1:
        count = insn.immediate
    elif opc == 0xD3:
        count = state.gpr[RCX] & 0xFF
    else:
        count = 1
    count &= 0x3F if size == 8 else 0x1F
    a, loc, _ = operand_from_modrm(state, mode, insn, size, next_ip=next_ip)
    if count:
        r, flags = shift(insn.reg & 7, a, count, size, state.rflags)
        operand_to_location(state, mode, loc, size, r)
        _commit_flags(state, flags)
    write_ip(state, mode, next_ip)


def op_nop(state, mode, insn, next_ip):
    write_ip(state, mode, next_ip)


def op_hlt(state, mode, insn, next_ip):
    write_ip(state, mode, next_ip)
    return HALTED


def _build_dispatch():
    table = {}
    for base in range(0x00, 0x40, 8):
        for k in range(4):
            table[base + k] = op_alu_rm_reg
        table[base + 4] = op_alu_acc_imm
        table[base + 5] = op_alu_acc_imm
    for op in range(0x40, 0x50):
        table[op] = op_inc_dec_reg
    for op in range(0x50, 0x58):
        table[op] = op_push_reg
    for op in range(0x58, 0x60):
        table[op] = op_pop_reg
    table[0x68] = table[0x6A] = op_push_imm
    for op in range(0x70, 0x80):
        table[op] = op_jcc
    for op in range(0x0F80, 0x0F90):
        table[op] = op_jcc
    table[0x80] = table[0x81] = table[0x83] = op_alu_group1
    table[0x84] = table[0x85] = op_test_rm_reg
    table[0x86] = table[0x87] = op_xchg_rm_reg
    table[0x88] = table[0x89] = op_mov_rm_reg
    table[0x8A] = table[0x8B] = op_mov_reg_rm
    table[0x8D] = op_lea
    table[0x8F] = op_pop_rm
    for op in range(0x90, 0x98):
        table[op] = op_xchg_acc
    table[0xA8] = table[0xA9] = op_test_acc_imm
    for op in range(0xB0, 0xC0):
        table[op] = op_mov_reg_imm
    table[0xC0] = table[0xC1] = table[0xD0] = table[0xD1] = table[0xD3] = op_shift
    table[0xC2] = table[0xC3] = op_ret
    table[0xC6] = table[0xC7] = op_mov_rm_imm
    table[0xE8] = op_call_rel
    table[0xE9] = table[0xEB] = op_jmp_rel
    table[0xF4] = op_hlt
    table[0xFE] = op_group4
    table[0xFF] = op_group5
    for op in (0x0FB6, 0x0FB7, 0x0FBE, 0x0FBF):
        table[op] = op_movx
    return table


DISPATCH = _build_dispatch()

CC_NAMES = ("O", "NO", "B", "AE", "E", "NE", "BE", "A", "S", "NS", "P", "NP", "L", "GE", "LE", "G")


def mnemonic(insn: DecodedInstruction) -> str:
    """Short mnemonic tag for traces."""
    opc = insn.opcode
    if opc < 0x40 and opc & 7 < 6:
        return ALU_NAMES[opc >> 3]
    if 0x40 <= opc <= 0x4F:
        return "DEC" if opc & 8 else "INC"
    if 0x50 <= opc <= 0x57 or opc in (0x68, 0x6A):
        return "PUSH"
    if 0x58 <= opc <= 0x5F or opc == 0x8F:
        return "POP"
    if 0x70 <= opc <= 0x7F or 0x0F80 <= opc <= 0x0F8F:
        return "J" + CC_NAMES[opc & 0xF]
    if opc in (0x80, 0x81, 0x83):
        return ALU_NAMES[insn.reg & 7]
    if opc in (0x84, 0x85, 0xA8, 0xA9):
        return "TEST"
    if opc in (0x86, 0x87):
        return "XCHG"
    if 0x90 <= opc <= 0x97:
        rex_b = (insn.prefixes.rex or 0) & 1
        return "NOP" if opc == 0x90 and not rex_b else "XCHG"
    if opc in (0x88, 0x89, 0x8A, 0x8B, 0xC6, 0xC7) or 0xB0 <= opc <= 0xBF:
        return "MOV"
    if opc == 0x8D:
        return "LEA"
    if opc in (0xC0, 0xC1, 0xD0, 0xD1, 0xD3):
        return ("SHL", "SHR", "SHL", "SAR")[(insn.reg & 7) - 4]
    if opc in (0xC2, 0xC3):
        return "RET"
    if opc == 0xE8:
        return "CALL"
    if opc in (0xE9, 0xEB):
        return "JMP"
    if opc == 0xF4:
        return "HLT"
    if opc == 0xFE:
        return "DEC" if insn.reg & 7 else "INC"
    if opc == 0xFF:
        return ("INC", "DEC", "CALL", "?", "JMP", "?", "PUSH", "?")[insn.reg & 7]
    if opc in (0x0FB6, 0x0FB7):
        return "MOVZX"
    if opc in (0x0FBE, 0x0FBF):
        return "MOVSX"
    return "?"


def _decode_cached(state: MachineState, mode: ProcMode, ip: int) -> DecodedInstruction:
    """Memoised :func:`fetch_decode`.

    Entries are keyed by instruction pointer and valid only for the CS
    descriptor object and mode they were decoded under; stores into a page that
    holds cached code drop the whole cache.
    """
    mem = state.memory
    icache = mem.icache
    owner = icache.get(None)
    cs = state.segs[CS]
    if owner is None or owner[0] is not cs or owner[1] is not mode:
        mem.flush_icache()
        icache[None] = (cs, mode)
    insn = icache.get(ip)
    if insn is None:
        insn = fetch_decode(state, mode)
        la = ea_to_la(state, mode, CS, ip, 1)
        mem.code_pages.add(la >> PAGE_SHIFT)
        mem.code_pages.add(((la + insn.length - 1) & MASK64) >> PAGE_SHIFT)
        icache[ip] = insn
    return insn


def step(state: MachineState, record: list | None = None) -> StepOutcome:
    """Execute one instruction.

    The processor mode is read once and passed down. On a fault the state is
    unchanged and the outcome carries the fault and the faulting RIP. When
    ``record`` is given, the decoded instruction (if decoding succeeded) is
    appended to it.
    """
    mode = proc_mode(state)
    try:
        if mode is MODE64:
            start = state.rip
            insn = _decode_cached(state, mode, start)
            next_ip = (start + insn.length) & MASK64
        else:
            width = MASK32 if state.segs[CS].attr_default_big else MASK16
            start = state.rip & width
            insn = _decode_cached(state, mode, start)
            next_ip = (start + insn.length) & width
        if record is not None:
            record.append(insn)
        result = DISPATCH[insn.opcode](state, mode, insn, next_ip)
    except X86Fault as fault:
        return StepOutcome(StepStatus.FAULT, fault, state.rip)
    return HALTED if result is HALTED else CONTINUE


def run(state: MachineState, max_steps: int | None = None) -> RunResult:
    """Step until HLT, a fault, or ``max_steps`` (default ``state.cfg.max_steps``).

    ``steps`` counts completed instructions; HLT counts, a faulting one does not.
    """
    if max_steps is None:
        max_steps = state.cfg.max_steps
    steps = 0
    while steps < max_steps:
        out = step(state)
        if out is CONTINUE:
            steps += 1
            continue
        if out is HALTED:
            return RunResult(state, "halted", steps + 1)
        return RunResult(state, "faulted", steps, out.fault)
    return RunResult(state, "step-budget", steps)
