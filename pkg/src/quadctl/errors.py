"""Exception hierarchy.

Every error carries a stable ``name`` so the CLI can report it in a
machine-readable ``"error"`` field.
"""


class QuadctlError(Exception):
    """Base class for all package errors."""

    #: CLI exit status for this error family
    exit_code = 2

    @property
    def name(self):
        return type(self).__name__


class InputError(QuadctlError, ValueError):
    """Malformed or inconsistent input (schema-level)."""


class SchemaError(InputError):
    """Input document does not match the command's schema."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class SingularMass(InputError):
    pass


class NotPositiveDefinite(InputError):
    pass


class MissingSprings(InputError):
    pass


class NegativeSpring(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class NoVelocityBlock(InputError):
    pass


class NonUnitMasses(InputError):
    pass


class SingularR(InputError):
    pass


class KappaTooSmall(InputError):
    pass


class MissingParameter(InputError):
    pass


class NumericalError(QuadctlError, ArithmeticError):
    """Numerical failure of an otherwise valid problem."""

    exit_code = 3


class SingularL(NumericalError):
    pass


class StepOverflow(NumericalError):
    pass


class ZeroFinalState(NumericalError):
    pass


class SingularV(NumericalError):
    """The Mobius denominator lost rank along the trajectory.

    ``trace`` holds the partial trace up to (and including) the offending
    grid point when available.
    """

    def __init__(self, message, t=None, trace=None):
        super().__init__(message)
        self.t = t
        self.trace = trace


class LegendreViolated(NumericalError):
    pass
