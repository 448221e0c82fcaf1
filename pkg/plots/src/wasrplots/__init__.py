from .render import FIGURE_KINDS, CsvFormatError, EmptyInputError, FigureSpec, load_series, render

__all__ = [
    "FIGURE_KINDS",
    "CsvFormatError",
    "EmptyInputError",
    "FigureSpec",
    "load_series",
    "render",
]
