from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from x86interp.decoder import Prefixes, fetch_decode
from x86interp.faults import FaultKind, X86Fault
from x86interp.memory import read_linear
from x86interp.operands import (MemoryLoc, RegisterLoc, byte_register, operand_from_modrm,
                                operand_to_location, select_segment_register)
from x86interp.state import CS, DS, ES, FS, MODE32, MODE64, SS, flat_state

BASE = 0x1000


def staged_insn(code: bytes, mode: str = "m32"):
    s = flat_state(mode)
    s.load_image(BASE, code)
    s.rip = BASE
    pm = MODE64 if mode == "m64" else MODE32
    insn = fetch_decode(s, pm)
    return s, pm, insn, BASE + insn.length


def test_select_segment_register():
    assert select_segment_register(MODE32, Prefixes(seg=ES), DS) == ES
    assert select_segment_register(MODE64, Prefixes(seg=SS), DS) == DS
    assert select_segment_register(MODE64, Prefixes(seg=FS), DS) == FS
    assert select_segment_register(MODE32, Prefixes(), SS) == SS


def test_bp_based_16_bit_defaults_to_ss():
    s, pm, insn, nip = staged_insn(b"\x67\x8B\x03")  # mov eax,[bp+di]
    _, loc, _ = operand_from_modrm(s, pm, insn, 4, next_ip=nip)
    assert loc.seg == SS


def test_register_direct():
    s, pm, insn, nip = staged_insn(b"\x01\xC1")  # add ecx, eax
    s.gpr[1] = 0x55
    assert operand_from_modrm(s, pm, insn, 4, next_ip=nip) == (0x55, RegisterLoc(1), 0)


def test_memory_operand_through_ds_base():
    s, pm, insn, nip = staged_insn(b"\x8A\x05\x00\x01\x00\x00")  # mov al,[0x100]
    s.segs[DS] = replace(s.segs[DS], base=0x1000)
    s.load_image(0x1100, b"\x42")
    assert operand_from_modrm(s, pm, insn, 1, next_ip=nip) == (0x42, MemoryLoc(DS, 0x100, 1), 4)


def test_memory_operand_limit_fault():
    s, pm, insn, nip = staged_insn(b"\x8B\x05\x00\x01\x00\x00")
    s.segs[DS] = replace(s.segs[DS], limit=0xFF)
    with pytest.raises(X86Fault) as e:
        operand_from_modrm(s, pm, insn, 4, next_ip=nip)
    assert e.value.kind is FaultKind.GP


def test_operand_to_location():
    s = flat_state("m64")
    s.gpr[0] = 0xFFFFFFFFFFFFFFFF
    operand_to_location(s, MODE64, RegisterLoc(0), 4, 7)
    assert s.gpr[0] == 7
    operand_to_location(s, MODE64, MemoryLoc(DS, 0x2000, 2), 2, 0xBEEF)
    assert read_linear(s, 0x2000, 2) == 0xBEEF


def test_memory_write_past_limit_is_atomic():
    s = flat_state("m32")
    s.segs[DS] = replace(s.segs[DS], limit=0x1000)
    before = s.snapshot()
    with pytest.raises(X86Fault):
        operand_to_location(s, MODE32, MemoryLoc(DS, 0xFFF, 4), 4, 0x12345678)
    assert s.snapshot() == before


def test_byte_registers_without_and_with_rex():
    assert byte_register(4, False) == RegisterLoc(0, True)  # AH
    assert byte_register(4, True) == RegisterLoc(4, False)  # SPL


@given(code=st.sampled_from([b"\x8B\x03", b"\x8B\x44\x8B\x10", b"\x8B\x81\x00\x01\x00\x00", b"\x8B\xC2",
                             b"\x8A\xE3", b"\x8B\x04\x24"]),
       regs=st.lists(st.integers(0, 0xFFFF), min_size=8, max_size=8),
       mode=st.sampled_from(["m32", "m64"]))
def test_read_then_write_back_is_a_no_op(code, regs, mode):
    s, pm, insn, nip = staged_insn(code, mode)
    for i, v in enumerate(regs):
        s.gpr[i] = v
    s.load_image(0x30000, bytes(range(256)))
    before = s.snapshot()
    value, loc, _ = operand_from_modrm(s, pm, insn, 4, next_ip=nip)
    operand_to_location(s, pm, loc, 4, value)
    assert s.snapshot() == before


@given(disp=st.integers(0, 0x7FFF0000), n=st.sampled_from([1, 2, 4, 8]))
def test_mode64_memory_operand_reads_linear_bytes(disp, n):
    s, pm, insn, nip = staged_insn(b"\x8B\x04\x25" + disp.to_bytes(4, "little"), "m64")
    s.load_image(disp, bytes(range(1, 9)))
    value, loc, _ = operand_from_modrm(s, pm, insn, n, next_ip=nip)
    assert value == read_linear(s, disp, n)
    assert loc.seg != CS
