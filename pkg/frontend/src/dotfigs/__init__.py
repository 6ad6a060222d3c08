"""dotfigs: publication-style figures from dotscatter sweep CSVs."""

from .data import ChannelTable, EntropyTable, SchemaError, read_channels_csv, read_entropy_csv
from .figspec import FigureSpec, FigureSpecError, LAYOUTS
from .render import RenderResult, render

__all__ = [
    "ChannelTable",
    "EntropyTable",
    "SchemaError",
    "read_channels_csv",
    "read_entropy_csv",
    "FigureSpec",
    "FigureSpecError",
    "LAYOUTS",
    "RenderResult",
    "render",
]
