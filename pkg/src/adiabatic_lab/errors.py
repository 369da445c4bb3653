"""Exception types shared across the package."""


class AdiabaticLabError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(AdiabaticLabError, ValueError):
    """A time or other argument lies outside its admissible range."""


class EvaluationError(AdiabaticLabError):
    """An operator family produced a malformed or non-finite matrix."""


class MissingDerivativeError(AdiabaticLabError):
    """An analytic derivative was requested from a family that has none."""


class ParameterError(AdiabaticLabError, ValueError):
    """A model builder received an invalid parameter."""


class ModelError(AdiabaticLabError):
    """A model cannot be constructed from the supplied ingredients."""


class GapViolationError(AdiabaticLabError):
    """The contour passes through, or too close to, the spectrum.

    ``eigenvalue`` and ``distance`` identify the offending eigenvalue and its
    distance to the contour, when known.
    """

    def __init__(self, msg, eigenvalue=None, distance=None):
        super().__init__(msg)
        self.eigenvalue = eigenvalue
        self.distance = distance


class IntegratorError(AdiabaticLabError):
    """Propagation failed, e.g. because a generator sample was not Hermitian."""


class FrameError(AdiabaticLabError):
    """A unitary fails the intertwining precondition of a frame computation."""


class NotApplicableError(AdiabaticLabError):
    """The operation needs structure the model lacks (e.g. a rank-one projector)."""


class GridMismatchError(AdiabaticLabError):
    """Two traces do not share a time grid or coupling parameter."""


class SweepError(AdiabaticLabError):
    """An epsilon sweep cannot produce a slope (too few valid points)."""


class ConfigError(AdiabaticLabError):
    """A run configuration could not be parsed or validated."""

    def __init__(self, msg, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {msg}" if where else msg)
        self.line = line
        self.key = key


class RegularityWarning(UserWarning):
    """Contour and finite-difference derivatives disagree beyond tolerance."""
