from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from x86interp.decoder import (DecodedInstruction, Prefixes, effective_addr_16, effective_addr_32_64,
                               fetch_decode, select_address_size, select_operand_size)
from x86interp.faults import FaultKind, X86Fault
from x86interp.state import DS, MODE32, MODE64, SS, flat_state
from x86interp.testkit.oracles import SIZE_TABLE

BASE = 0x1000


def decode(code: bytes, mode: str = "m64", big: bool = True) -> DecodedInstruction:
    s = flat_state(mode, big=big)
    s.load_image(BASE, code)
    s.rip = BASE
    return fetch_decode(s, MODE64 if mode == "m64" else MODE32)


def test_mode32_40_is_inc():
    insn = decode(b"\x40", "m32")
    assert insn.opcode == 0x40 and insn.length == 1


def test_mode64_40_is_rex_prefix():
    insn = decode(b"\x40\x90", "m64")
    assert insn.opcode == 0x90 and insn.prefixes.rex == 0 and insn.length == 2


def test_rex_w_add():
    insn = decode(b"\x48\x01\xD8", "m64")
    assert insn.opcode == 0x01 and insn.prefixes.rex_w
    assert (insn.mod, insn.reg, insn.rm, insn.length) == (3, 3, 0, 3)


def test_rex_extends_register_fields():
    insn = decode(b"\x4D\x01\xC8", "m64")  # add r8, r9
    assert (insn.reg, insn.rm) == (9, 8)


def test_rex_before_legacy_prefix_is_dropped():
    insn = decode(b"\x48\x66\x01\xD8", "m64")
    assert insn.prefixes.rex is None and insn.opsize == 2


def test_last_segment_override_wins():
    assert decode(b"\x26\x36\x8B\x00", "m32").prefixes.seg == SS


def test_too_many_prefixes_is_gp():
    with pytest.raises(X86Fault) as e:
        decode(b"\x66" * 16, "m64")
    assert e.value.kind is FaultKind.GP and e.value.reason == "length"


def test_fifteen_byte_instruction_is_accepted():
    # 2 prefixes + REX + C7 /0 + ModR/M + SIB + disp32 + imm32 = 14 bytes
    code = b"\x66\x67" + b"\x48\xC7\x84\x24" + b"\x00\x01\x00\x00" + b"\x2A\x00\x00\x00"
    assert decode(code, "m64").length == 14
    assert decode(b"\x3E" + code, "m64").length == 15
    with pytest.raises(X86Fault):
        decode(b"\x3E\x3E" + code, "m64")


@pytest.mark.parametrize("code,mode", [(b"\x0F\x0B", "m64"), (b"\xD2\xE0", "m32"), (b"\x82\xC0\x01", "m32"),
                                       (b"\xC6\xC8\x01", "m32"), (b"\x8D\xC0", "m64")])
def test_unimplemented_or_invalid_is_ud(code, mode):
    with pytest.raises(X86Fault) as e:
        decode(code + b"\x00" * 8, mode)
    assert e.value.kind is FaultKind.UD


def test_lock_is_ud():
    with pytest.raises(X86Fault) as e:
        decode(b"\xF0\x01\x00", "m32")
    assert e.value.kind is FaultKind.UD and e.value.reason == "lock"


@pytest.mark.parametrize("code,mode,big,imm,length", [
    (b"\xB8\x2A\x00\x00\x00", "m32", True, 0x2A, 5),
    (b"\x66\xB8\x2A\x00", "m32", True, 0x2A, 4),
    (b"\xB8\x2A\x00", "m32", False, 0x2A, 3),
    (b"\x48\xB8" + bytes(range(1, 9)), "m64", True, 0x0807060504030201, 10),
    (b"\x48\x05\xFF\xFF\xFF\xFF", "m64", True, 0xFFFFFFFF, 6),
    (b"\xE8\x10\x00", "m32", False, 0x10, 3),
    (b"\x66\xE8\x10\x00\x00\x00", "m64", True, 0x10, 6),  # rel32 regardless of 0x66 in 64-bit mode
    (b"\xC2\x08\x00", "m64", True, 8, 3),
])
def test_immediate_sizes(code, mode, big, imm, length):
    insn = decode(code, mode, big)
    assert insn.immediate == imm and insn.length == length


def test_displacement_and_sib_lengths():
    assert decode(b"\x8B\x04\x25\x78\x56\x34\x12", "m64").displacement == 0x12345678
    assert decode(b"\x8B\x44\x24\xFC", "m32").displacement == -4
    assert decode(b"\x8B\x05\x00\x10\x00\x00", "m32").length == 6
    assert decode(b"\x67\x8B\x06\x34\x12", "m32").length == 5  # 16-bit [disp16]


def test_decode_is_state_independent_of_registers():
    s = flat_state("m64")
    s.load_image(BASE, b"\x8B\x44\x24\x08")
    s.rip = BASE
    a = fetch_decode(s, MODE64)
    s.gpr[4] = 0xDEAD
    assert fetch_decode(s, MODE64) == a


def test_fetch_past_cs_limit_faults():
    s = flat_state("m32")
    s.segs[1] = replace(s.segs[1], limit=BASE + 1)
    s.load_image(BASE, b"\xB8\x01\x00\x00\x00")
    s.rip = BASE
    with pytest.raises(X86Fault) as e:
        fetch_decode(s, MODE32)
    assert e.value.kind is FaultKind.GP


def test_aliasing_witness_instruction_counts():
    assert decode(b"\x40\x90", "m32").length == 1
    assert decode(b"\x40\x90", "m64").length == 2


@settings(max_examples=300)
@given(data=st.binary(min_size=1, max_size=20), mode=st.sampled_from(["m32", "m64"]))
def test_decode_determinism_and_length_honesty(data, mode):
    try:
        first = decode(data, mode)
    except X86Fault as fault:
        with pytest.raises(X86Fault) as again:
            decode(data, mode)
        assert again.value == fault
        return
    assert 1 <= first.length <= 15
    assert decode(data, mode) == first
    # the consumed bytes alone decode to the same instruction
    assert decode(bytes(first.raw), mode) == first


# -- size selection -------------------------------------------------------------------------

@pytest.mark.parametrize("row", sorted(SIZE_TABLE))
def test_size_selection_table(row):
    mode, cs_d, p66, p67, rex_w = row
    s = flat_state(mode, big=bool(cs_d))
    if mode == "m64":
            s.segs[1] = replace(s.segs[1], attr_default_big=bool(cs_d))
    pm = MODE64 if mode == "m64" else MODE32
    pre = Prefixes(opsize=bool(p66), addrsize=bool(p67), rex=8 if rex_w else None)
    assert (select_operand_size(s, pm, pre), select_address_size(s, pm, pre)) == SIZE_TABLE[row]


def test_operand_size_default64_and_byte_op():
    s = flat_state("m64")
    assert select_operand_size(s, MODE64, Prefixes(), default64=True) == 8
    assert select_operand_size(s, MODE64, Prefixes(rex=8), byte_op=True) == 1


# -- effective addresses --------------------------------------------------------------------

def test_ea16_examples():
    s = flat_state("m32")
    assert effective_addr_16(s, 0, 6, 0x1234) == (0x1234, DS, 2)
    s.gpr[3] = 0x0100
    assert effective_addr_16(s, 1, 7, -2)[:2] == (0x00FE, DS)
    s.gpr[5], s.gpr[6] = 0x10, 0x20
    assert effective_addr_16(s, 2, 2, 0x30)[:2] == (0x60, SS)


def test_ea32_64_examples():
    s = flat_state("m32")
    assert effective_addr_32_64(s, 4, 0, 5, 0xDEAD0000 - (1 << 32))[0] == 0xDEAD0000
    s64 = flat_state("m64")
    assert effective_addr_32_64(s64, 8, 0, 5, 0x10, next_ip=0x401000)[0] == 0x401010
    s.gpr[0], s.gpr[1] = 5, 3
    assert effective_addr_32_64(s, 4, 1, 4, 4, sib=(2, 1, 0))[0] == 0x15


@given(regs=st.lists(st.integers(0, (1 << 64) - 1), min_size=16, max_size=16),
       mod=st.integers(0, 2), rm=st.integers(0, 7), disp=st.integers(-(1 << 15), (1 << 15) - 1))
def test_ea16_below_2_16(regs, mod, rm, disp):
    s = flat_state("m32")
    for i, v in enumerate(regs):
        s.gpr[i] = v
    assert 0 <= effective_addr_16(s, mod, rm, disp)[0] < 1 << 16


@given(regs=st.lists(st.integers(0, (1 << 64) - 1), min_size=16, max_size=16),
       mod=st.integers(0, 2), rm=st.integers(0, 15), disp=st.integers(-(1 << 31), (1 << 31) - 1),
       sib=st.tuples(st.integers(0, 3), st.integers(0, 15), st.integers(0, 15)))
def test_ea32_below_2_32(regs, mod, rm, disp, sib):
    s = flat_state("m64")
    for i, v in enumerate(regs):
        s.gpr[i] = v
    eff = effective_addr_32_64(s, 4, mod, rm, disp, sib=sib if rm & 7 == 4 else None, next_ip=0x1000)[0]
    assert 0 <= eff < 1 << 32
