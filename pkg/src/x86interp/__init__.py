"""Application-level x86 interpreter for 64-bit and 32-bit (protected/compatibility) mode."""

from .faults import FaultKind, X86Fault
from .isa import RunResult, StepOutcome, StepStatus, run, step
from .state import (CS, DS, ES, FS, GS, MODE32, MODE64, SS, ExecConfig, MachineState, ProcMode,
                    SegmentRegister, flat_segment, flat_state, proc_mode, read_gpr, write_gpr)

__all__ = [
    "CS", "DS", "ES", "FS", "GS", "SS", "MODE32", "MODE64",
    "ExecConfig", "FaultKind", "MachineState", "ProcMode", "RunResult", "SegmentRegister",
    "StepOutcome", "StepStatus", "X86Fault",
    "flat_segment", "flat_state", "proc_mode", "read_gpr", "run", "step", "write_gpr",
]
