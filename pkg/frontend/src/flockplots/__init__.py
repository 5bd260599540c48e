"""Figure generation for flocklab CSV output.

The solver CLI writes delimited tables; this package turns them into
figures and reports zero-crossing locations back to the caller.  It
never recomputes model quantities: the CSV schema is the only contract
between the two packages.
"""

from .figures import (
    KINDS,
    MissingColumnError,
    PlotDataError,
    PlotSpec,
    RenderSummary,
    build,
    render,
)

__all__ = [
    "KINDS",
    "MissingColumnError",
    "PlotDataError",
    "PlotSpec",
    "RenderSummary",
    "build",
    "render",
]
