"""Simulator and verification harness for open-system Carnot cycles."""

from .errors import (
    BoundaryMismatchError,
    ClosureError,
    ConfigError,
    DomainError,
    EmptySpeciesError,
    IntegratorError,
    InvariantViolation,
    RefinementError,
    RosterError,
    StepSizeError,
    ThermoError,
)
from .fluid import (
    DEFAULT_STANDARD_STATE,
    SPEC_A,
    SpeciesSpec,
    StandardState,
    SystemState,
    specific_convected_entropy,
)
from .transfer import CanonicalPath, work_state_function, reciprocity_check
from .cycles import (
    CycleKind,
    CycleLedger,
    CycleSpec,
    SegmentKind,
    SegmentSpec,
    build_cycle,
    carnot_residual,
    concatenate,
    reverse_cycle,
    run_cycle,
    virtual_work,
)

__version__ = "0.1.0"
