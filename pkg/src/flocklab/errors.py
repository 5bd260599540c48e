"""Exception types shared across the package."""


class FlockLabError(Exception):
    """Base class for all package-specific failures."""


class QuadratureError(FlockLabError):
    """Adaptive integration failed to reach the requested tolerance."""


class BracketError(FlockLabError):
    """A root bracket could not be established or validated."""


class GeometryError(FlockLabError, ValueError):
    """Grid geometry inconsistent with the requested operation."""


class SupportMismatchError(FlockLabError):
    """Density has mass where the reference underflows to zero."""


class PositivityError(FlockLabError):
    """Time stepping produced a cell value below the positivity floor.

    Carries ``time``, ``step``, ``cell`` and ``value`` attributes plus a
    ``state`` snapshot of the offending density values.
    """

    def __init__(self, message, *, time=None, step=None, cell=None,
                 value=None, state=None):
        super().__init__(message)
        self.time = time
        self.step = step
        self.cell = cell
        self.value = value
        self.state = state


class MassConservationError(FlockLabError):
    """Total mass drifted beyond the conservation tolerance."""


class IndefiniteMetricError(FlockLabError):
    """The quadratic form used as a metric has a negative direction.

    For the isotropic reference below the critical noise this is the
    expected signature of linear instability; the ``witness_overlap``
    attribute reports the alignment of the negative direction with the
    first velocity coordinate.
    """

    def __init__(self, message, *, min_eigenvalue=None, witness_overlap=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
        self.witness_overlap = witness_overlap


class ConvergenceError(FlockLabError):
    """An iterative procedure exhausted its budget without converging."""
