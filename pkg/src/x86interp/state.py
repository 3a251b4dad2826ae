"""Application-level machine state and register accessors."""

from __future__ import annotations

import enum
from array import array
from dataclasses import dataclass, replace

MASK8 = 0xFF
MASK16 = 0xFFFF
MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF

# segment register indices
ES, CS, SS, DS, FS, GS = range(6)
SEG_NAMES = ("es", "cs", "ss", "ds", "fs", "gs")

# general-purpose register indices, standard encoding order
RAX, RCX, RDX, RBX, RSP, RBP, RSI, RDI = range(8)
R8, R9, R10, R11, R12, R13, R14, R15 = range(8, 16)

GPR_NAMES64 = ("rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
               "r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15")
GPR_NAMES32 = ("eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi")

# rflags bits
CF = 1 << 0
PF = 1 << 2
AF = 1 << 4
ZF = 1 << 6
SF = 1 << 7
DF = 1 << 10
OF = 1 << 11
AC = 1 << 18
STATUS_FLAGS = CF | PF | AF | ZF | SF | OF
RFLAGS_FIXED1 = 1 << 1

EFER_LMA = 1 << 10

PAGE_SHIFT = 12
PAGE_SIZE = 1 << PAGE_SHIFT
PAGE_MASK = PAGE_SIZE - 1


class ProcMode(enum.Enum):
    MODE64 = 64
    MODE32 = 32

    @property
    def tag(self) -> str:
        return "m64" if self is ProcMode.MODE64 else "m32"


MODE64 = ProcMode.MODE64
MODE32 = ProcMode.MODE32


@dataclass(frozen=True)
class SegmentRegister:
    """Visible selector plus the cached descriptor fields.

    ``limit`` is byte-granular: any page granularity has already been applied.
    Instances are immutable; use :func:`dataclasses.replace` to derive a new one.
    """

    selector: int = 0
    base: int = 0
    limit: int = 0
    attr_long: bool = False
    attr_default_big: bool = False
    attr_expand_down: bool = False
    attr_present: bool = False
    attr_executable: bool = False

    def __post_init__(self):
        if not 0 <= self.selector <= MASK16:
            raise ValueError(f"selector out of range: {self.selector:#x}")
        if not 0 <= self.base <= MASK64:
            raise ValueError(f"base out of range: {self.base:#x}")
        if not 0 <= self.limit <= MASK32:
            raise ValueError(f"limit out of range: {self.limit:#x}")

    @classmethod
    def from_descriptor(cls, base: int, raw_limit: int, granular: bool = False, **attrs) -> SegmentRegister:
        """Build a register from descriptor fields, resolving the G bit into a byte limit."""
        if not 0 <= raw_limit <= 0xFFFFF:
            raise ValueError(f"descriptor limit is 20 bits: {raw_limit:#x}")
        limit = (raw_limit << 12) | 0xFFF if granular else raw_limit
        return cls(base=base, limit=limit, **attrs)


def flat_segment(code: bool = False, long: bool = False, big: bool = True) -> SegmentRegister:
    """Identity segment: base 0, limit 4 GiB - 1."""
    return SegmentRegister(
        base=0,
        limit=MASK32,
        attr_long=long,
        attr_default_big=big and not long,
        attr_present=True,
        attr_executable=code,
    )


@dataclass
class ExecConfig:
    alignment_checking: bool = False
    max_steps: int = 1_000_000


class SparseMemory:
    """Byte store over the 64-bit linear address space, allocated in 4 KiB pages.

    Reads of addresses never written return zero and never allocate. Stores to
    pages holding cached decoded instructions drop the decode cache.
    """

    __slots__ = ("pages", "icache", "code_pages")

    def __init__(self):
        self.pages: dict[int, bytearray] = {}
        self.icache: dict = {}
        self.code_pages: set[int] = set()

    def read(self, addr: int, n: int) -> int:
        off = addr & PAGE_MASK
        if off + n <= PAGE_SIZE:
            page = self.pages.get(addr >> PAGE_SHIFT)
            if page is None:
                return 0
            return int.from_bytes(page[off:off + n], "little")
        return int.from_bytes(self.read_bytes(addr, n), "little")

    def read_bytes(self, addr: int, n: int) -> bytes:
        out = bytearray()
        while n:
            off = addr & PAGE_MASK
            chunk = min(n, PAGE_SIZE - off)
            page = self.pages.get(addr >> PAGE_SHIFT)
            out += page[off:off + chunk] if page is not None else bytes(chunk)
            addr = (addr + chunk) & MASK64
            n -= chunk
        return bytes(out)

    def write(self, addr: int, n: int, value: int) -> None:
        self.write_bytes(addr, (value & ((1 << (8 * n)) - 1)).to_bytes(n, "little"))

    def write_bytes(self, addr: int, data: bytes) -> None:
        pos = 0
        n = len(data)
        while pos < n:
            off = addr & PAGE_MASK
            chunk = min(n - pos, PAGE_SIZE - off)
            pno = addr >> PAGE_SHIFT
            page = self.pages.get(pno)
            if page is None:
                page = self.pages[pno] = bytearray(PAGE_SIZE)
            page[off:off + chunk] = data[pos:pos + chunk]
            if pno in self.code_pages:
                self.flush_icache()
            addr = (addr + chunk) & MASK64
            pos += chunk

    def flush_icache(self) -> None:
        self.icache.clear()
        self.code_pages.clear()

    def snapshot(self) -> dict[int, bytes]:
        """Nonzero pages only, so an all-zero page equals an absent one."""
        return {pno: bytes(p) for pno, p in self.pages.items() if any(p)}

    def copy(self) -> SparseMemory:
        other = SparseMemory()
        other.pages = {pno: bytearray(p) for pno, p in self.pages.items()}
        return other


class MachineState:
    """Registers, segment caches, MSRs, flat memory and execution config.

    Register storage is fixed-width: ``gpr`` is an ``array('Q')`` so an
    out-of-range store raises instead of silently widening. The scalar registers
    are plain ints that every writer masks; :meth:`check_widths` verifies them.
    """

    __slots__ = ("gpr", "rip", "rflags", "segs", "msr_ia32_efer", "msr_fs_base",
                 "msr_gs_base", "memory", "cfg")

    def __init__(self, cfg: ExecConfig | None = None):
        self.gpr = array("Q", bytes(16 * 8))
        self.rip = 0
        self.rflags = RFLAGS_FIXED1
        self.segs = [SegmentRegister() for _ in range(6)]
        self.msr_ia32_efer = 0
        self.msr_fs_base = 0
        self.msr_gs_base = 0
        self.memory = SparseMemory()
        self.cfg = cfg if cfg is not None else ExecConfig()

    def check_widths(self) -> None:
        """Raise OverflowError if a scalar register has left its 64-bit range."""
        for name in ("rip", "rflags", "msr_ia32_efer", "msr_fs_base", "msr_gs_base"):
            value = getattr(self, name)
            if not 0 <= value <= MASK64:
                raise OverflowError(f"{name} out of 64-bit range: {value:#x}")

    def copy(self) -> MachineState:
        other = MachineState(replace(self.cfg))
        other.gpr = array("Q", self.gpr)
        other.rip = self.rip
        other.rflags = self.rflags
        other.segs = list(self.segs)
        other.msr_ia32_efer = self.msr_ia32_efer
        other.msr_fs_base = self.msr_fs_base
        other.msr_gs_base = self.msr_gs_base
        other.memory = self.memory.copy()
        return other

    def snapshot(self) -> tuple:
        """Value for bit-for-bit state comparison (the decode cache is excluded)."""
        return (tuple(self.gpr), self.rip, self.rflags, tuple(self.segs), self.msr_ia32_efer,
                self.msr_fs_base, self.msr_gs_base, self.memory.snapshot())

    def load_image(self, addr: int, data: bytes) -> None:
        self.memory.write_bytes(addr, data)


def proc_mode(state: MachineState) -> ProcMode:
    if state.msr_ia32_efer & EFER_LMA and state.segs[CS].attr_long:
        return MODE64
    return MODE32


def read_gpr(state: MachineState, reg: int, size: int, high8: bool = False) -> int:
    value = state.gpr[reg]
    if high8:
        return (value >> 8) & MASK8
    if size == 8:
        return value
    return value & ((1 << (8 * size)) - 1)


def write_gpr(state: MachineState, reg: int, size: int, value: int, high8: bool = False) -> None:
    """Store into a register slice.

    4-byte stores zero-extend into the full register; 1- and 2-byte stores merge.
    """
    gpr = state.gpr
    if high8:
        gpr[reg] = (gpr[reg] & ~0xFF00 & MASK64) | ((value & MASK8) << 8)
    elif size == 8:
        gpr[reg] = value & MASK64
    elif size == 4:
        gpr[reg] = value & MASK32
    elif size == 2:
        gpr[reg] = (gpr[reg] & 0xFFFFFFFFFFFF0000) | (value & MASK16)
    else:
        gpr[reg] = (gpr[reg] & 0xFFFFFFFFFFFFFF00) | (value & MASK8)


def flat_state(mode: ProcMode | str = MODE64, *, big: bool = True, cfg: ExecConfig | None = None) -> MachineState:
    """A state with identity segments configured for ``mode``.

    In 32-bit mode ``big`` selects the CS/SS default size (D/B bit).
    """
    if isinstance(mode, str):
        mode = MODE64 if mode == "m64" else MODE32
    state = MachineState(cfg)
    long = mode is MODE64
    state.msr_ia32_efer = EFER_LMA if long else 0
    for i in range(6):
        state.segs[i] = flat_segment(code=(i == CS), long=long and i == CS, big=big)
    return state
