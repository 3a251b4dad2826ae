"""Hand-assembled fixture programs and a helper to stage them in a flat state."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

from ..faults import FaultKind
from ..state import CS, DS, ES, RSP, SS, ExecConfig, MachineState, flat_state

CODE_BASE = 0x1000
STACK_TOP = 0x80000


def fib_m64(n: int) -> bytes:
    """Loop form of fib(n), result in RAX.

    mov ecx,n / xor eax,eax / mov edx,1 /
    L: lea rbx,[rax+rdx] / mov rax,rdx / mov rdx,rbx / dec ecx / jnz L / hlt
    """
    return (b"\xB9" + struct.pack("<I", n) + b"\x31\xC0" + b"\xBA\x01\x00\x00\x00"
            + b"\x48\x8D\x1C\x10" + b"\x48\x89\xD0" + b"\x48\x89\xDA" + b"\xFF\xC9"
            + b"\x75\xF2" + b"\xF4")


def fib_m32(n: int) -> bytes:
    """Same loop for 32-bit mode, result in EAX; uses the one-byte DEC ECX (0x49)."""
    return (b"\xB9" + struct.pack("<I", n) + b"\x31\xC0" + b"\xBA\x01\x00\x00\x00"
            + b"\x8D\x1C\x10" + b"\x89\xD0" + b"\x89\xDA" + b"\x49"
            + b"\x75\xF6" + b"\xF4")


def fib_steps(n: int) -> int:
    """Instruction count of the fib loops above for n >= 1."""
    return 3 + 5 * n + 1


def call_sum(n: int) -> bytes:
    """Sum 1..n in EAX through a called helper; identical bytes in both modes.

    mov ecx,n / xor eax,eax / L: push rcx / call F / pop rcx / dec ecx / jnz L / hlt /
    F: add eax,ecx / ret
    """
    return (b"\xB9" + struct.pack("<I", n) + b"\x31\xC0"
            + b"\x51" + b"\xE8\x06\x00\x00\x00" + b"\x59" + b"\xFF\xC9" + b"\x75\xF5" + b"\xF4"
            + b"\x01\xC8" + b"\xC3")


def counting_loop(iterations: int) -> bytes:
    """Register-only 64-bit loop of 3 instructions per iteration.

    mov ecx,n / L: add rax,rcx / dec rcx / jnz L / hlt
    """
    return (b"\xB9" + struct.pack("<I", iterations) + b"\x48\x01\xC8" + b"\x48\xFF\xC9"
            + b"\x75\xF8" + b"\xF4")


ALIASING_WITNESS = bytes([0x40, 0x90, 0xF4])


def staged(code: bytes, mode: str = "m64", *, big: bool = True, cfg: ExecConfig | None = None,
           base: int = CODE_BASE, stack_top: int = STACK_TOP) -> MachineState:
    """Flat state with ``code`` at ``base``, rip at its first byte and the stack at ``stack_top``."""
    state = flat_state(mode, big=big, cfg=cfg)
    state.load_image(base, code)
    state.rip = base
    state.gpr[RSP] = stack_top
    return state


@dataclass
class FaultCase:
    name: str
    state: MachineState
    expected: FaultKind
    steps_before: int  # instructions that complete before the faulting one


def _with_segment(state: MachineState, seg: int, **fields) -> MachineState:
    state.segs[seg] = replace(state.segs[seg], **fields)
    return state


def fault_corpus() -> list[FaultCase]:
    """Programs that fault on a known instruction with a known fault class."""
    mov_eax_5 = b"\xB8\x05\x00\x00\x00"
    cases = [
        FaultCase("ds-limit-load", _with_segment(
            staged(mov_eax_5 + b"\x8B\x1D\x00\x20\x00\x00", "m32"), DS, limit=0x1FFF), FaultKind.GP, 1),
        FaultCase("ds-limit-store-last-byte", _with_segment(
            staged(mov_eax_5 + b"\x89\x05\xFE\x1F\x00\x00", "m32"), DS, limit=0x1FFF), FaultKind.GP, 1),
        FaultCase("rmw-add-past-limit", _with_segment(
            staged(mov_eax_5 + b"\x01\x05\xFD\x1F\x00\x00", "m32"), DS, limit=0x1FFF), FaultKind.GP, 1),
        FaultCase("es-override-limit", _with_segment(
            staged(mov_eax_5 + b"\x26\x89\x05\x00\x10\x00\x00", "m32"), ES, limit=0xFFF), FaultKind.GP, 1),
        FaultCase("push-below-expand-down-stack", _with_segment(
            staged(mov_eax_5 + b"\x50", "m32", stack_top=0x1002), SS, limit=0x1000, attr_expand_down=True),
            FaultKind.SS, 1),
        FaultCase("call-with-faulting-push", _with_segment(
            staged(mov_eax_5 + b"\xE8\x00\x00\x00\x00", "m32", stack_top=0x1002), SS, limit=0x1000,
            attr_expand_down=True), FaultKind.SS, 1),
        FaultCase("pop-above-stack-limit", _with_segment(
            staged(mov_eax_5 + b"\x5B", "m32", stack_top=0xFFE), SS, limit=0xFFF), FaultKind.SS, 1),
        FaultCase("pop-to-faulting-memory", _with_segment(
            staged(mov_eax_5 + b"\x50" + b"\x8F\x05\x00\x30\x00\x00", "m32"), DS, limit=0x1FFF),
            FaultKind.GP, 2),
        FaultCase("xchg-memory-past-limit", _with_segment(
            staged(mov_eax_5 + b"\x87\x05\x00\x30\x00\x00", "m32"), DS, limit=0x1FFF), FaultKind.GP, 1),
        FaultCase("jmp-past-cs-limit", _with_segment(
            staged(mov_eax_5 + b"\xE9\x00\x10\x00\x00", "m32"), CS, limit=0x1FFF), FaultKind.GP, 1),
        FaultCase("fetch-crosses-cs-limit", _with_segment(
            staged(mov_eax_5 + b"\xB8\x01\x00\x00\x00", "m32"), CS, limit=0x1007), FaultKind.GP, 1),
        FaultCase("jmp-non-canonical", staged(
            b"\x48\xB8\x00\x00\x00\x00\x00\x80\x00\x00" + b"\xFF\xE0", "m64"), FaultKind.GP, 1),
        FaultCase("ret-to-non-canonical", staged(
            b"\x48\xB8\x00\x00\x00\x00\x00\x80\x00\x00" + b"\x50" + b"\xC3", "m64"), FaultKind.GP, 2),
        FaultCase("store-non-canonical", staged(
            b"\x48\xB8\x00\x00\x00\x00\x00\x80\x00\x00" + b"\x89\x18", "m64"), FaultKind.GP, 1),
        FaultCase("stack-non-canonical", staged(b"\x31\xC0" + b"\x50", "m64", stack_top=0x0000800000000004),
                  FaultKind.SS, 1),
        FaultCase("ud2", staged(mov_eax_5 + b"\x0F\x0B", "m64"), FaultKind.UD, 1),
        FaultCase("unimplemented-opcode", staged(mov_eax_5 + b"\xCC", "m32"), FaultKind.UD, 1),
        FaultCase("lock-prefix", staged(mov_eax_5 + b"\xF0\x01\x05\x00\x20\x00\x00", "m32"), FaultKind.UD, 1),
        FaultCase("invalid-group-reg", staged(mov_eax_5 + b"\xFF\xF8", "m64"), FaultKind.UD, 1),
        FaultCase("rex-before-unimplemented", staged(mov_eax_5 + b"\x48\xD2\xE0", "m64"), FaultKind.UD, 1),
        FaultCase("prefix-run-past-15", staged(mov_eax_5 + b"\x66" * 15 + b"\x90", "m64"), FaultKind.GP, 1),
        FaultCase("misaligned-load", staged(
            mov_eax_5 + b"\x8B\x1D\x02\x20\x00\x00", "m32", cfg=ExecConfig(alignment_checking=True)),
            FaultKind.AC, 1),
        FaultCase("misaligned-rmw", staged(
            mov_eax_5 + b"\x48\x01\x04\x25\x04\x20\x00\x00", "m64", cfg=ExecConfig(alignment_checking=True)),
            FaultKind.AC, 1),
        FaultCase("misaligned-push", staged(
            mov_eax_5 + b"\x50", "m64", stack_top=0x8002, cfg=ExecConfig(alignment_checking=True)),
            FaultKind.AC, 1),
    ]
    return cases
