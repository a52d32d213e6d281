"""Static-figure rendering for the simulator's CSV/JSON outputs.

Consumes only the files ``bklcone simulate`` writes; never imports the
simulator or recomputes dynamics.
"""

from .render import (
    KINDS,
    EmptyInputError,
    MissingColumnsError,
    PlotError,
    PlotSpec,
    RenderResult,
    SpecError,
    render,
)

__version__ = "0.1.0"

__all__ = [
    "KINDS",
    "PlotSpec",
    "RenderResult",
    "PlotError",
    "SpecError",
    "EmptyInputError",
    "MissingColumnsError",
    "render",
    "__version__",
]
