"""Exception types shared across the package."""


class ThermoError(Exception):
    """Base class for every error raised by opencarnot."""


class DomainError(ThermoError, ValueError):
    """A state or argument left the physically admissible domain."""


class RosterError(ThermoError, KeyError):
    """Species index or label not present in the roster."""

    def __str__(self) -> str:
        return Exception.__str__(self)


class EmptySpeciesError(DomainError):
    """Extraction requested for a species with zero mass in the system."""


class InvariantViolation(ThermoError):
    """Two routes that must agree did not, beyond tolerance."""


class IntegratorError(ThermoError):
    """ODE or quadrature did not converge."""


class ClosureError(ThermoError):
    """A cycle failed to return to its starting state."""


class BoundaryMismatchError(ThermoError):
    """Declared shared legs of concatenated cycles do not match."""


class StepSizeError(ThermoError, ValueError):
    """Finite-difference step too small to be resolved in floating point."""


class RefinementError(ThermoError):
    """Staircase construction could not be built for the requested N."""


class ConfigError(ThermoError):
    """Invalid experiment configuration."""
