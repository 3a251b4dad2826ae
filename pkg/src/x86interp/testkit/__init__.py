"""Independent oracles, a naive second interpreter, and test harnesses."""

from .dual import DualReport, dual_interpret
from .fuzz import FuzzReport, decode_fuzz
from .naive import NaiveFault, NaiveMachine
from .oracles import Descriptor, ea_to_la_byte_oracle

__all__ = [
    "Descriptor", "DualReport", "FuzzReport", "NaiveFault", "NaiveMachine",
    "decode_fuzz", "dual_interpret", "ea_to_la_byte_oracle",
]
