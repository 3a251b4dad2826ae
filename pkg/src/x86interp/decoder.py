"""Instruction fetch and decode, plus effective-address computation.

Decoding is state-independent apart from the mode, the CS default-size bit and
the instruction bytes themselves: displacement and immediate values are stored
in the decoded instruction and register contents are only consulted later,
when an effective address is computed for execution.
"""

from __future__ import annotations

from .faults import FaultKind, X86Fault
from .memory import EXECUTE, read_effective
from .pointers import add_to_ip, read_ip
from .state import (CS, DS, ES, FS, GS, MASK16, MASK32, MASK64, MODE64, SS, MachineState,
                    ProcMode)

MAX_LENGTH = 15

SEG_OVERRIDE = {0x26: ES, 0x2E: CS, 0x36: SS, 0x3E: DS, 0x64: FS, 0x65: GS}
LEGACY_PREFIXES = frozenset((0xF0, 0xF2, 0xF3, 0x66, 0x67, *SEG_OVERRIDE))

# immediate kinds
I_NONE, I_B, I_W, I_Z, I_V, I_REL8, I_RELZ = range(7)


class Prefixes:
    __slots__ = ("lock", "rep", "seg", "opsize", "addrsize", "rex")

    def __init__(self, lock=False, rep=None, seg=None, opsize=False, addrsize=False, rex=None):
        self.lock = lock
        self.rep = rep          # None, "rep" or "repne"
        self.seg = seg          # segment-override register index or None
        self.opsize = opsize    # 0x66 seen
        self.addrsize = addrsize  # 0x67 seen
        self.rex = rex          # low nibble WRXB of the effective REX byte, or None

    @property
    def rex_w(self) -> bool:
        return self.rex is not None and bool(self.rex & 8)

    def _key(self):
        return (self.lock, self.rep, self.seg, self.opsize, self.addrsize, self.rex)

    def __eq__(self, other):
        return isinstance(other, Prefixes) and self._key() == other._key()

    def __repr__(self):
        return "Prefixes(" + ", ".join(f"{k}={getattr(self, k)!r}" for k in self.__slots__) + ")"


class DecodedInstruction:
    """One decoded instruction.

    ``reg`` and ``rm`` are REX-extended register numbers; ``sib_index`` and
    ``sib_base`` likewise. ``opcode`` is the one-byte opcode, or ``0x0F00 | b``
    for the two-byte map. ``opsize``/``asize`` are the operand and address sizes
    in bytes as selected by the prefixes (without any default-64 promotion).
    """

    __slots__ = ("prefixes", "opcode", "modrm", "mod", "reg", "rm", "sib", "sib_scale",
                 "sib_index", "sib_base", "displacement", "disp_size", "immediate", "imm_size",
                 "length", "raw", "opsize", "asize")

    def __init__(self):
        self.prefixes = None
        self.opcode = 0
        self.modrm = None
        self.mod = self.reg = self.rm = 0
        self.sib = None
        self.sib_scale = self.sib_index = self.sib_base = 0
        self.displacement = 0
        self.disp_size = 0
        self.immediate = 0
        self.imm_size = 0
        self.length = 0
        self.raw = b""
        self.opsize = 4
        self.asize = 4

    def _key(self):
        return tuple(getattr(self, k) for k in self.__slots__)

    def __eq__(self, other):
        return isinstance(other, DecodedInstruction) and self._key() == other._key()

    def __repr__(self):
        return (f"DecodedInstruction(opcode={self.opcode:#x}, raw={self.raw.hex()}, "
                f"length={self.length})")


def _build_tables():
    one = {}
    # (has_modrm, imm_kind, byte_op)
    for base in range(0x00, 0x40, 8):
        one[base + 0] = (True, I_NONE, True)
        one[base + 1] = (True, I_NONE, False)
        one[base + 2] = (True, I_NONE, True)
        one[base + 3] = (True, I_NONE, False)
        one[base + 4] = (False, I_B, True)
        one[base + 5] = (False, I_Z, False)
    for op in range(0x50, 0x60):
        one[op] = (False, I_NONE, False)
    one[0x68] = (False, I_Z, False)
    one[0x6A] = (False, I_B, False)
    for op in range(0x70, 0x80):
        one[op] = (False, I_REL8, False)
    one[0x80] = (True, I_B, True)
    one[0x81] = (True, I_Z, False)
    one[0x83] = (True, I_B, False)
    for op in (0x84, 0x86, 0x88, 0x8A):
        one[op] = (True, I_NONE, True)
    for op in (0x85, 0x87, 0x89, 0x8B, 0x8D, 0x8F):
        one[op] = (True, I_NONE, False)
    for op in range(0x90, 0x98):
        one[op] = (False, I_NONE, False)
    one[0xA8] = (False, I_B, True)
    one[0xA9] = (False, I_Z, False)
    for op in range(0xB0, 0xB8):
        one[op] = (False, I_B, True)
    for op in range(0xB8, 0xC0):
        one[op] = (False, I_V, False)
    one[0xC0] = (True, I_B, True)
    one[0xC1] = (True, I_B, False)
    one[0xC2] = (False, I_W, False)
    one[0xC3] = (False, I_NONE, False)
    one[0xC6] = (True, I_B, True)
    one[0xC7] = (True, I_Z, False)
    one[0xD0] = (True, I_NONE, True)
    one[0xD1] = (True, I_NONE, False)
    one[0xD3] = (True, I_NONE, False)
    one[0xE8] = (False, I_RELZ, False)
    one[0xE9] = (False, I_RELZ, False)
    one[0xEB] = (False, I_REL8, False)
    one[0xF4] = (False, I_NONE, False)
    one[0xFE] = (True, I_NONE, True)
    one[0xFF] = (True, I_NONE, False)
    # 0x40-0x4F (INC/DEC) exist only outside 64-bit mode; handled in fetch_decode
    inc_dec = (False, I_NONE, False)

    two = {}
    for op in range(0x80, 0x90):
        two[op] = (False, I_RELZ, False)
    # MOVZX/MOVSX: operand size is the destination's; the handler picks the source width
    for op in (0xB6, 0xB7, 0xBE, 0xBF):
        two[op] = (True, I_NONE, False)
    return one, two, inc_dec


ONE_BYTE, TWO_BYTE, INC_DEC_ENTRY = _build_tables()

# ModR/M.reg values accepted for group opcodes
GROUP_REGS = {
    0xC0: (4, 5, 6, 7), 0xC1: (4, 5, 6, 7), 0xD0: (4, 5, 6, 7), 0xD1: (4, 5, 6, 7),
    0xD3: (4, 5, 6, 7), 0xC6: (0,), 0xC7: (0,), 0x8F: (0,), 0xFE: (0, 1),
    0xFF: (0, 1, 2, 4, 6),
}


def select_operand_size(state: MachineState, mode: ProcMode, prefixes: Prefixes,
                        default64: bool = False, byte_op: bool = False) -> int:
    if byte_op:
        return 1
    if mode is MODE64:
        if prefixes.rex is not None and prefixes.rex & 8:
            return 8
        if prefixes.opsize:
            return 2
        return 8 if default64 else 4
    if state.segs[CS].attr_default_big:
        return 2 if prefixes.opsize else 4
    return 4 if prefixes.opsize else 2


def select_address_size(state: MachineState, mode: ProcMode, prefixes: Prefixes) -> int:
    if mode is MODE64:
        return 4 if prefixes.addrsize else 8
    if state.segs[CS].attr_default_big:
        return 2 if prefixes.addrsize else 4
    return 4 if prefixes.addrsize else 2


def displacement_size(asize: int, mod: int, rm: int, sib_base: int = 0) -> int:
    """Displacement bytes implied by ModR/M (and SIB base), low three bits only."""
    if mod == 1:
        return 1
    if asize == 2:
        if mod == 2 or (mod == 0 and rm == 6):
            return 2
        return 0
    if mod == 2:
        return 4
    if mod == 0 and (rm == 5 or (rm == 4 and sib_base == 5)):
        return 4
    return 0


def fetch_decode(state: MachineState, mode: ProcMode) -> DecodedInstruction:
    """Fetch and decode the instruction at the current instruction pointer.

    Every byte is read through the CS segment with execute intent; the cursor
    advances with :func:`add_to_ip`, so each consumed byte is limit-checked.
    """
    start = read_ip(state, mode)
    pos = start
    raw = bytearray()

    def fetch(n: int = 1) -> int:
        nonlocal pos
        value = 0
        for i in range(n):
            count = len(raw)
            if count >= MAX_LENGTH:
                raise X86Fault(FaultKind.GP, "length", start)
            if count:
                pos = add_to_ip(state, mode, pos, 1)
            b = read_effective(state, mode, CS, pos, 1, EXECUTE)
            raw.append(b)
            value |= b << (8 * i)
        return value

    insn = DecodedInstruction()
    lock = False
    rep = None
    seg = None
    opsize = False
    addrsize = False
    rex = None
    is64 = mode is MODE64
    while True:
        b = fetch()
        if b in LEGACY_PREFIXES:
            rex = None  # a REX byte only counts immediately before the opcode
            if b == 0xF0:
                lock = True
            elif b == 0xF3:
                rep = "rep"
            elif b == 0xF2:
                rep = "repne"
            elif b == 0x66:
                opsize = True
            elif b == 0x67:
                addrsize = True
            else:
                seg = SEG_OVERRIDE[b]
            continue
        if is64 and 0x40 <= b <= 0x4F:
            rex = b & 0xF
            continue
        break

    prefixes = Prefixes(lock, rep, seg, opsize, addrsize, rex)
    insn.prefixes = prefixes
    if b == 0x0F:
        b2 = fetch()
        opcode = 0x0F00 | b2
        entry = TWO_BYTE.get(b2)
    else:
        opcode = b
        if 0x40 <= b <= 0x4F:
            entry = INC_DEC_ENTRY
        else:
            entry = ONE_BYTE.get(b)
    insn.opcode = opcode
    if entry is None:
        raise X86Fault(FaultKind.UD, "opcode", start)
    has_modrm, imm_kind, byte_op = entry

    osize = select_operand_size(state, mode, prefixes, byte_op=byte_op)
    asize = select_address_size(state, mode, prefixes)
    insn.opsize = osize
    insn.asize = asize

    if has_modrm:
        m = fetch()
        insn.modrm = m
        mod = m >> 6
        reg = (m >> 3) & 7
        rm = m & 7
        insn.mod = mod
        allowed = GROUP_REGS.get(opcode)
        if allowed is not None and reg not in allowed:
            raise X86Fault(FaultKind.UD, "opcode", start)
        if opcode == 0x8D and mod == 3:
            raise X86Fault(FaultKind.UD, "opcode", start)
        rex_bits = rex or 0
        insn.reg = reg | ((rex_bits & 4) << 1)
        insn.rm = rm | ((rex_bits & 1) << 3)
        sib_base_low = 0
        if mod != 3 and asize != 2 and rm == 4:
            s = fetch()
            insn.sib = s
            insn.sib_scale = s >> 6
            insn.sib_index = ((s >> 3) & 7) | ((rex_bits & 2) << 2)
            sib_base_low = s & 7
            insn.sib_base = sib_base_low | ((rex_bits & 1) << 3)
        if mod != 3:
            dsize = displacement_size(asize, mod, rm, sib_base_low)
            if dsize:
                d = fetch(dsize)
                if d >> (8 * dsize - 1):
                    d -= 1 << (8 * dsize)
                insn.displacement = d
                insn.disp_size = dsize

    if imm_kind != I_NONE:
        if imm_kind == I_B or imm_kind == I_REL8:
            isize = 1
        elif imm_kind == I_W:
            isize = 2
        elif imm_kind == I_V:
            isize = osize
        elif imm_kind == I_RELZ:
            isize = 4 if is64 or osize == 4 else 2
        else:
            isize = 2 if osize == 2 else 4
        insn.immediate = fetch(isize)
        insn.imm_size = isize
    if lock:
        raise X86Fault(FaultKind.UD, "lock", start)
    insn.length = len(raw)
    insn.raw = bytes(raw)
    return insn


def effective_addr_16(state: MachineState, mod: int, rm: int, displacement: int) -> tuple[int, int, int]:
    """16-bit addressing forms; returns (effective, default segment, displacement bytes)."""
    g = state.gpr
    bx, bp, si, di = g[3], g[5], g[6], g[7]
    if rm == 0:
        base, hint = bx + si, DS
    elif rm == 1:
        base, hint = bx + di, DS
    elif rm == 2:
        base, hint = bp + si, SS
    elif rm == 3:
        base, hint = bp + di, SS
    elif rm == 4:
        base, hint = si, DS
    elif rm == 5:
        base, hint = di, DS
    elif rm == 6:
        if mod == 0:
            return displacement & MASK16, DS, 2
        base, hint = bp, SS
    else:
        base, hint = bx, DS
    disp_bytes = 1 if mod == 1 else 2 if mod == 2 else 0
    return (base + displacement) & MASK16, hint, disp_bytes


def effective_addr_32_64(state: MachineState, asize: int, mod: int, rm: int, displacement: int,
                         sib: tuple[int, int, int] | None = None,
                         next_ip: int | None = None) -> tuple[int, int, int]:
    """32/64-bit addressing forms, REX-extended register numbers.

    ``sib`` is (scale, index, base) when rm selects a SIB byte. With mod=0 and
    rm=5 the form is disp32 when ``asize`` is 4 in 32-bit mode and relative to
    ``next_ip`` in 64-bit mode; callers signal 64-bit mode by passing a
    non-``None`` ``next_ip``.
    """
    g = state.gpr
    mask = MASK64 if asize == 8 else MASK32
    low = rm & 7
    hint = DS
    if mod == 0 and low == 5:
        if next_ip is None:
            return displacement & mask, DS, 4
        return (next_ip + displacement) & mask, DS, 4
    if low == 4:
        scale, index, base = sib
        if index == 4:
            ea = 0
        else:
            ea = (g[index] & mask) << scale
        if mod == 0 and base & 7 == 5:
            ea += displacement
        else:
            ea += g[base] & mask
            if base == 4 or base == 5:
                hint = SS
            ea += displacement
    else:
        ea = (g[rm] & mask) + displacement
        if rm == 4 or rm == 5:
            hint = SS
    disp_bytes = 1 if mod == 1 else 4 if mod == 2 else (4 if low == 4 and mod == 0 and sib[2] & 7 == 5 else 0)
    return ea & mask, hint, disp_bytes


def effective_addr(state: MachineState, mode: ProcMode, insn: DecodedInstruction,
                   next_ip: int) -> tuple[int, int, int]:
    if insn.asize == 2:
        return effective_addr_16(state, insn.mod, insn.rm & 7, insn.displacement)
    sib = (insn.sib_scale, insn.sib_index, insn.sib_base) if insn.sib is not None else None
    return effective_addr_32_64(state, insn.asize, insn.mod, insn.rm, insn.displacement, sib,
                                next_ip if mode is MODE64 else None)
