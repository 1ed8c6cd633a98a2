"""Exception hierarchy shared across the package.

Errors fall into three CLI-visible groups: configuration problems
(exit code 3), safety or feasibility failures (exit code 2), and
programming errors that should simply propagate.
"""


class OgdBzcError(Exception):
    """Base class for all package errors."""


class ConfigError(OgdBzcError):
    """Malformed or inconsistent run configuration."""


class GeometryError(OgdBzcError):
    """Invalid geometric construction or unsupported operation."""


class DimensionMismatchError(GeometryError):
    """Vector or matrix dimensions do not match the set."""


class EmptySetError(GeometryError):
    """Operation requires a nonempty set."""


class EnumerationTooLargeError(GeometryError):
    """Exact vertex enumeration would exceed the supported size."""


class UnstableSystemError(OgdBzcError):
    """Closed-loop matrix has spectral radius at or above one."""


class DisturbanceBoundError(OgdBzcError):
    """A disturbance exceeds the modeled bound."""


class ModelMismatchError(OgdBzcError):
    """Recovered disturbance lies outside the modeled disturbance set."""


class LiftOutsideConstraintError(OgdBzcError):
    """A lifted linear policy violates the weight decay constraints."""


class EmptyBufferWindowError(OgdBzcError):
    """Buffer-shrunk safety sets are empty; no policy can be certified."""


class SeedInfeasibleError(OgdBzcError):
    """The lifted reference policy is not a member of the safe policy set."""


class ParameterWindowError(OgdBzcError):
    """The admissible buffer window for the requested schedule is empty."""


class SafetyViolationError(OgdBzcError):
    """A state or input left its safety set during a run."""


class DiagnosticBoundError(OgdBzcError):
    """An empirical quantity exceeded its closed-form theoretical ceiling."""


class ProtocolError(OgdBzcError):
    """Online protocol ordering was violated (cost read before control)."""
