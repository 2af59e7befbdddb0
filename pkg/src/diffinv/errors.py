"""Exception hierarchy for diffinv."""


class DiffinvError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(DiffinvError, ValueError):
    """A point lies outside the state space (or an ordering is violated)."""


class RangeError(DiffinvError, ValueError):
    """A value lies outside the range of a monotone map or a clock."""


class BoundaryError(DiffinvError, ValueError):
    """A boundary with an infinite scale limit was used as a finite level."""


class QuadratureFailure(DiffinvError, ArithmeticError):
    """Numerical integration did not converge."""


class DegenerateSystem(DiffinvError, ArithmeticError):
    """The linear system defining a Moebius inversion is singular."""


class NoSolution(DiffinvError, ValueError):
    """A mean (geometric/arithmetic) does not exist for the given data."""


class BoundaryTypeError(DiffinvError, TypeError):
    """An operation is undefined for the diffusion's boundary type."""


class ConfigError(DiffinvError, ValueError):
    """Invalid simulation or experiment configuration."""


class CoefficientError(DiffinvError, ArithmeticError):
    """A coefficient evaluated to a non-finite value at a visited state."""


class SampleError(DiffinvError, ValueError):
    """A statistical routine got too few samples."""


class InsufficientSurvivors(SampleError):
    """Too few paths are alive at a probe time."""


class RejectionStarvation(SampleError):
    """The rejection filter accepted too small a fraction of paths."""


class TruncationError(DiffinvError, RuntimeError):
    """Too many paths failed the tail-negligibility rule for A_infinity."""


class UnknownEntry(DiffinvError, KeyError):
    """No catalog entry with that name."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown catalog entry"


class ParamError(DiffinvError, ValueError):
    """Invalid catalog parameters."""


class ExpressionError(ConfigError):
    """An expression string failed to parse."""
