"""Random-byte decoder fuzzing."""

from __future__ import annotations

import hashlib
import random
from collections import Counter
from dataclasses import dataclass, field

from ..decoder import MAX_LENGTH, fetch_decode
from ..faults import X86Fault
from ..state import MODE64, flat_state, proc_mode

FUZZ_BASE = 0x1000
MAX_INPUT = 20
RECHECK_EVERY = 16


@dataclass
class FuzzReport:
    mode: str
    count: int
    decoded: int = 0
    faults: Counter = field(default_factory=Counter)
    crashes: list = field(default_factory=list)
    over_length: int = 0
    nondeterministic: int = 0
    max_length: int = 0
    digest: str = ""

    @property
    def ok(self) -> bool:
        return not self.crashes and not self.over_length and not self.nondeterministic


def _outcome(state, mode):
    try:
        insn = fetch_decode(state, mode)
    except X86Fault as fault:
        return ("fault", str(fault.kind), fault.reason), None
    except Exception as exc:  # anything else is a decoder crash
        return ("crash", type(exc).__name__, str(exc)), None
    return ("ok", insn.length, bytes(insn.raw), insn.opcode, insn.immediate, insn.displacement), insn


def decode_fuzz(seed: int, count: int, mode: str = "m64", big: bool = True) -> FuzzReport:
    """Decode ``count`` random strings of 1..20 bytes placed at a fixed address.

    Bytes after the string read as zero. Every 16th string is decoded a
    second time to check the result is repeatable; the report digest covers all
    outcomes, so equal seeds must yield equal reports.
    """
    rng = random.Random(seed)
    state = flat_state(mode, big=big)
    state.rip = FUZZ_BASE
    pmode = proc_mode(state)
    mem = state.memory
    report = FuzzReport(mode if pmode is MODE64 or big else "m32/16", count)
    h = hashlib.sha256()
    blank = bytes(MAX_INPUT)
    for i in range(count):
        data = rng.randbytes(rng.randint(1, MAX_INPUT))
        mem.write_bytes(FUZZ_BASE, data + blank[len(data):])
        result, insn = _outcome(state, pmode)
        h.update(repr(result).encode())
        kind = result[0]
        if kind == "crash":
            report.crashes.append((data.hex(), result[1], result[2]))
        elif kind == "fault":
            report.faults[result[1]] += 1
        else:
            report.decoded += 1
            if insn.length > MAX_LENGTH:
                report.over_length += 1
            report.max_length = max(report.max_length, insn.length)
        if i % RECHECK_EVERY == 0 and _outcome(state, pmode)[0] != result:
            report.nondeterministic += 1
    report.digest = h.hexdigest()
    return report
