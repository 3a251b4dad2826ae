"""Segment base/bounds lookup and effective-to-linear address translation."""

from __future__ import annotations

from typing import NamedTuple

from .faults import FaultKind, X86Fault
from .state import FS, GS, MASK32, MASK64, MODE64, SS, MachineState, ProcMode


class LogicalAddress(NamedTuple):
    seg: int
    effective: int


class SegmentBounds(NamedTuple):
    base: int
    lower: int
    upper: int


def segment_base_and_bounds(state: MachineState, mode: ProcMode, seg: int) -> SegmentBounds:
    if mode is MODE64:
        if seg == FS:
            return SegmentBounds(state.msr_fs_base, 0, 0)
        if seg == GS:
            return SegmentBounds(state.msr_gs_base, 0, 0)
        return SegmentBounds(0, 0, 0)
    desc = state.segs[seg]
    if desc.attr_expand_down:
        return SegmentBounds(desc.base, desc.limit, MASK32 if desc.attr_default_big else 0xFFFF)
    return SegmentBounds(desc.base, 0, desc.limit)


def canonical_address_p(addr: int) -> bool:
    top = addr >> 47
    return top == 0 or top == 0x1FFFF


def _segment_fault(seg: int, reason: str, effective: int) -> X86Fault:
    return X86Fault(FaultKind.SS if seg == SS else FaultKind.GP, reason, effective)


def ea_to_la(state: MachineState, mode: ProcMode, seg: int, effective: int, nbytes: int) -> int:
    """Translate ``seg:effective`` to a linear address for an ``nbytes`` access.

    Both the first and the last byte of the span are checked; a span may not
    wrap around the end of a 32-bit segment.
    """
    if mode is MODE64:
        if seg == FS:
            la = (state.msr_fs_base + effective) & MASK64
        elif seg == GS:
            la = (state.msr_gs_base + effective) & MASK64
        else:
            la = effective
        top = la >> 47
        if top != 0 and top != 0x1FFFF:
            raise _segment_fault(seg, "non-canonical", effective)
        top = ((la + nbytes - 1) & MASK64) >> 47
        if top != 0 and top != 0x1FFFF:
            raise _segment_fault(seg, "non-canonical", effective)
        return la
    desc = state.segs[seg]
    last = effective + nbytes - 1
    if desc.attr_expand_down:
        upper = MASK32 if desc.attr_default_big else 0xFFFF
        if effective < desc.limit or last > upper:
            raise _segment_fault(seg, "limit", effective)
    elif last > desc.limit:
        raise _segment_fault(seg, "limit", effective)
    return (desc.base + effective) & MASK32
