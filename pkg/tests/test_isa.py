import random

import pytest
from hypothesis import given, settings, strategies as st

import x86interp.isa as isa
from x86interp.isa import StepStatus, alu, run, shift, step
from x86interp.state import AF, CF, OF, PF, RSP, SF, ZF
from x86interp.testkit import dual_interpret
from x86interp.testkit.programs import (ALIASING_WITNESS, CODE_BASE, call_sum, fault_corpus, fib_m32,
                                        fib_m64, fib_steps, staged)


def test_inc_rax():
    s = staged(b"\x48\xFF\xC0\xF4")
    s.gpr[0] = 1
    s.rflags |= CF
    assert step(s).status is StepStatus.CONTINUE
    assert s.gpr[0] == 2 and s.rip == CODE_BASE + 3
    assert s.rflags & CF  # INC leaves CF alone
    assert not s.rflags & (ZF | SF | OF | AF | PF)


def test_inc_eax_wraps_in_32_bit_mode():
    s = staged(b"\x40\xF4", "m32")
    s.gpr[0] = 0xFFFFFFFF
    step(s)
    assert s.gpr[0] == 0 and s.rflags & ZF and s.rflags & AF and not s.rflags & CF


def test_hlt_halts_and_advances():
    s = staged(b"\xF4")
    assert step(s).status is StepStatus.HALT and s.rip == CODE_BASE + 1


def test_run_budget_and_single_hlt():
    s = staged(b"\xF4")
    r = run(s, 0)
    assert (r.reason, r.steps) == ("step-budget", 0) and s.rip == CODE_BASE
    r = run(s, 10)
    assert (r.reason, r.steps) == ("halted", 1)


@pytest.mark.parametrize("n,expected", [(1, 1), (2, 1), (10, 55), (30, 832040)])
def test_fib_both_modes(n, expected):
    for mode, prog in (("m64", fib_m64), ("m32", fib_m32)):
        r = run(staged(prog(n), mode))
        assert r.reason == "halted" and r.state.gpr[0] == expected and r.steps == fib_steps(n)


def test_push_sizes():
    s = staged(b"\x50\xF4", "m32")
    s.gpr[0] = 0x11223344
    step(s)
    assert s.gpr[RSP] == 0x80000 - 4 and s.memory.read(0x80000 - 4, 4) == 0x11223344

    s = staged(b"\x66\x50\xF4", "m64")
    step(s)
    assert s.gpr[RSP] == 0x80000 - 8


def test_push_pop_16_bit_operand_in_32_bit_mode():
    s = staged(b"\x66\x50\x66\x5B\xF4", "m32")
    s.gpr[0] = 0xAABBCCDD
    s.gpr[3] = 0x11110000
    run(s)
    assert s.gpr[3] == 0x1111CCDD and s.gpr[RSP] == 0x80000


def test_call_ret_imm_releases_arguments():
    # push 7 / call f / hlt / f: ret 8
    s = staged(b"\x6A\x07\xE8\x01\x00\x00\x00\xF4\xC2\x08\x00")
    r = run(s)
    assert r.reason == "halted" and s.gpr[RSP] == 0x80000 + 8 - 8


def test_jcc_not_taken_and_taken():
    # xor eax,eax / jz +1 / hlt / inc eax(FF C0) / hlt: taken, skips the first hlt
    r = run(staged(b"\x31\xC0\x74\x01\xF4\xFF\xC0\xF4"))
    assert r.state.gpr[0] == 1 and r.steps == 4
    # same with jnz: falls through to the first hlt
    r = run(staged(b"\x31\xC0\x75\x01\xF4\xFF\xC0\xF4"))
    assert r.steps == 3 and r.state.rip == CODE_BASE + 5


def test_jmp_16_bit_operand_truncates_target():
    s = staged(b"\x66\xE9\x00\x00", "m32", base=0xFFF0)
    s.load_image(0xFFF0, b"\x66\xE9\x10\x00")
    step(s)
    assert s.rip == (0xFFF4 + 0x10) & 0xFFFF


def test_mov_writes_and_zero_extension():
    s = staged(b"\xB8\x2A\x00\x00\x00\xF4")
    s.gpr[0] = 0xFFFFFFFFFFFFFFFF
    step(s)
    assert s.gpr[0] == 0x2A
    s = staged(b"\xB4\x12\xF4")  # mov ah,0x12
    step(s)
    assert s.gpr[0] == 0x1200
    s = staged(b"\x40\xB4\x12\xF4")  # mov spl,0x12 with REX
    s.gpr[4] = 0x100
    step(s)
    assert s.gpr[4] == 0x112


def test_movsx_movzx():
    s = staged(b"\x48\x0F\xBE\xC1\x0F\xB7\xD1\xF4")
    s.gpr[1] = 0x1280
    run(s)
    assert s.gpr[0] == 0xFFFFFFFFFFFFFF80 and s.gpr[2] == 0x1280


def test_lea_uses_no_memory():
    s = staged(b"\x8D\x44\x8B\x10\xF4", "m32")
    s.gpr[3], s.gpr[1] = 0x100, 2
    step(s)
    assert s.gpr[0] == 0x118 and s.memory.pages.keys() == {1}


def test_xchg_and_nop():
    s = staged(b"\x87\xD8\x90\xF4")
    s.gpr[0], s.gpr[3] = 1, 2
    run(s)
    assert (s.gpr[0], s.gpr[3]) == (2, 1)
    s = staged(b"\x41\x90\xF4")  # xchg eax,r8d: not a NOP with REX.B
    s.gpr[8] = 5
    run(s)
    assert s.gpr[0] == 5


def test_alu_flags():
    r, f = alu(0, 0x7F, 1, 1, 2)  # add
    assert r == 0x80 and f & OF and f & SF and f & AF and not f & CF
    r, f = alu(5, 0, 1, 4, 2)  # sub
    assert r == 0xFFFFFFFF and f & CF and f & SF and not f & OF
    r, f = alu(2, 0xFF, 0, 1, 2 | CF)  # adc with carry in
    assert r == 0 and f & CF and f & ZF
    r, f = alu(3, 0, 0, 2, 2 | CF)  # sbb with borrow in
    assert r == 0xFFFF and f & CF
    r, f = alu(4, 0xF0, 0x0F, 1, 2 | CF | OF | AF)  # and clears CF, OF, AF
    assert r == 0 and f & ZF and f & PF and not f & (CF | OF | AF)


def test_cmp_does_not_write():
    s = staged(b"\x39\xD8\xF4")
    s.gpr[0], s.gpr[3] = 3, 5
    step(s)
    assert s.gpr[0] == 3 and s.rflags & CF


def test_shift_flags():
    r, f = shift(4, 0x81, 1, 1, 2)  # shl
    assert r == 0x02 and f & CF and f & OF
    r, f = shift(5, 0x81, 1, 1, 2)  # shr: OF = original MSB
    assert r == 0x40 and f & CF and f & OF
    r, f = shift(7, 0x80, 3, 1, 2)  # sar keeps the sign
    assert r == 0xF0 and not f & CF and not f & OF


def test_zero_count_shift_changes_nothing():
    s = staged(b"\xD3\xE0\xF4")  # shl eax,cl with cl=0x20 masks to 0
    s.gpr[0], s.gpr[1] = 0xFFFFFFFF00000001, 0x20
    s.rflags = 2 | CF | ZF
    step(s)
    assert s.gpr[0] == 0xFFFFFFFF00000001 and s.rflags == 2 | CF | ZF


def test_group1_sign_extends_imm8():
    s = staged(b"\x48\x83\xC0\xFF\xF4")
    s.gpr[0] = 1
    step(s)
    assert s.gpr[0] == 0 and s.rflags & CF


def test_aliasing_witness():
    r32 = run(staged(ALIASING_WITNESS, "m32"))
    r64 = run(staged(ALIASING_WITNESS, "m64"))
    assert (r32.reason, r32.steps, r32.state.gpr[0]) == ("halted", 3, 1)
    assert (r64.reason, r64.steps, r64.state.gpr[0]) == ("halted", 2, 0)


def test_proc_mode_read_once_per_step(monkeypatch):
    calls = 0
    real = isa.proc_mode

    def counting(state):
        nonlocal calls
        calls += 1
        return real(state)

    monkeypatch.setattr(isa, "proc_mode", counting)
    for mode, prog in (("m64", fib_m64(10)), ("m32", fib_m32(10)), ("m64", call_sum(5))):
        calls = 0
        r = run(staged(prog, mode))
        assert calls == r.steps


@pytest.mark.parametrize("case", fault_corpus(), ids=lambda c: c.name)
def test_fault_atomicity(case):
    s = case.state
    for _ in range(case.steps_before):
        assert step(s).status is StepStatus.CONTINUE
    before = s.snapshot()
    out = step(s)
    assert out.status is StepStatus.FAULT and out.fault.kind is case.expected
    assert out.rip == s.rip
    assert s.snapshot() == before


def test_self_modifying_store_invalidates_decoded_code():
    # mov byte [rip+1], 0x41 rewrites the next instruction's immediate before it runs
    s = staged(b"\xC6\x05\x01\x00\x00\x00\x41" + b"\xB0\x00" + b"\xF4")
    r = run(s)
    assert r.reason == "halted" and s.gpr[0] & 0xFF == 0x41


def test_code_rewritten_between_runs():
    s = staged(b"\xB0\x01\xF4")
    run(s)
    s.load_image(CODE_BASE, b"\xB0\x02\xF4")
    s.rip = CODE_BASE
    run(s)
    assert s.gpr[0] & 0xFF == 2


# -- mode-differential corpus: shared opcodes, no REX, addresses below 2^16 --------------------

DIFFERENTIAL_CORPUS = [
    # mov eax,imm / mov ebx,eax / shl ebx,4 / shr ebx,1 / sub eax,ebx / movzx ecx,al / movsx edx,ax
    b"\xB8\x78\x56\x34\x12\x89\xC3\xC1\xE3\x04\xD1\xEB\x29\xD8\x0F\xB6\xC8\x0F\xBF\xD0\xF4",
    # sum 10..1 in a dec/jnz loop
    b"\xB9\x0A\x00\x00\x00\x31\xC0\x01\xC8\xFF\xC9\x75\xFA\xF4",
    call_sum(12),
    # memory traffic through ebx=0x3000 at several widths, including xchg and a high-byte load
    b"\xBB\x00\x30\x00\x00\xC7\x03\xEF\xBE\xAD\xDE\x8B\x0B\x66\x8B\x53\x02\x86\x43\x01\x8A\x23\xF4",
    # signed overflow, sbb, test
    b"\xB8\xFF\xFF\xFF\x7F\x83\xC0\x01\x19\xDB\xA9\x00\x00\x00\x80\xF4",
    # push imm32 / pop eax / push imm8 / pop ebx
    b"\x68\x34\x12\x00\x00\x58\x6A\xFF\x5B\xF4",
]


@pytest.mark.parametrize("prog", DIFFERENTIAL_CORPUS)
def test_mode_differential(prog):
    r32 = run(staged(prog, "m32", stack_top=0x8000), 10_000)
    r64 = run(staged(prog, "m64", stack_top=0x8000), 10_000)
    assert r32.reason == r64.reason == "halted"
    assert r32.steps == r64.steps
    for i in range(8):
        if i != RSP:
            assert r32.state.gpr[i] & 0xFFFFFFFF == r64.state.gpr[i] & 0xFFFFFFFF, i
    assert r32.state.rflags == r64.state.rflags


# -- differential against the naive interpreter --------------------------------------------

@pytest.mark.parametrize("mode", ["m32", "m64"])
@pytest.mark.parametrize("prog", ["fib", "call_sum"])
def test_dual_programs(mode, prog):
    code = {"fib": fib_m64 if mode == "m64" else fib_m32, "call_sum": call_sum}[prog](10)
    report = dual_interpret(staged(code, mode))
    assert report.equal and report.reason == "halted"


OPCODE_POOL = ([o for base in range(0, 0x40, 8) for o in range(base, base + 6)]
               + list(range(0x50, 0x60)) + [0x68, 0x6A] + list(range(0x70, 0x80))
               + [0x80, 0x81, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8A, 0x8B, 0x8D, 0x8F]
               + list(range(0x90, 0x98)) + [0xA8, 0xA9] + list(range(0xB0, 0xC0))
               + [0xC0, 0xC1, 0xC2, 0xC3, 0xC6, 0xC7, 0xD0, 0xD1, 0xD3, 0xE8, 0xE9, 0xEB, 0xF4, 0xFE, 0xFF])
REG_VALUES = [0, 1, 0x7F, 0x80, 0xFF, 0x8000, 0xFFFF, 0x7FFFFFFF, 0x80000000, 0xFFFFFFFF]


@settings(max_examples=400, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), mode=st.sampled_from(["m32", "m64"]))
def test_single_instructions_match_naive(seed, mode):
    rng = random.Random(seed)
    code = bytearray(rng.choice([b"", b"\x66", b"\x67", b"\x26", b"\x36", b"\x64"]))
    if mode == "m64" and rng.random() < 0.5:
        code.append(0x40 | rng.randrange(16))
    if rng.random() < 0.15:
        code += bytes([0x0F, rng.choice([0xB6, 0xB7, 0xBE, 0xBF, 0x84, 0x8E])])
    else:
        code.append(rng.choice(OPCODE_POOL))
    code += rng.randbytes(10)
    s = staged(bytes(code) + b"\xF4", mode, big=rng.random() < 0.8)
    for i in range(16 if mode == "m64" else 8):
        if i != RSP:
            s.gpr[i] = rng.choice(REG_VALUES + [CODE_BASE + rng.randrange(0x100), rng.getrandbits(32)])
    s.rflags = 2 | (rng.getrandbits(12) & 0x8D5)
    s.load_image(0x2000, rng.randbytes(64))
    report = dual_interpret(s, max_steps=1)
    assert report.equal, report.detail
