"""Figure rendering for moistsw sweep outputs."""

from .io import FigureInputError, read_field_dump, read_summary, read_table
from .render import KINDS, PlotSpec, render

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "KINDS",
    "PlotSpec",
    "render",
    "FigureInputError",
    "read_table",
    "read_summary",
    "read_field_dump",
]
