"""Architectural faults raised by every fallible operation."""

from __future__ import annotations

import enum


class FaultKind(enum.Enum):
    UD = "#UD"
    GP = "#GP"
    SS = "#SS"
    AC = "#AC"

    def __str__(self) -> str:
        return self.value


class X86Fault(Exception):
    """An architectural exception condition.

    ``reason`` is a short machine-readable tag (``"limit"``, ``"non-canonical"``,
    ``"alignment"``, ``"length"``, ``"opcode"``, ``"lock"``); ``address`` is the
    offending effective address when one exists.
    """

    def __init__(self, kind: FaultKind, reason: str, address: int | None = None):
        self.kind = kind
        self.reason = reason
        self.address = address
        detail = f"{kind} ({reason})"
        if address is not None:
            detail += f" at {address:#x}"
        super().__init__(detail)

    def __eq__(self, other):
        if not isinstance(other, X86Fault):
            return NotImplemented
        return (self.kind, self.reason, self.address) == (other.kind, other.reason, other.address)

    def __hash__(self):
        return hash((self.kind, self.reason, self.address))
