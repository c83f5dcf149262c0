"""CSV-to-figure rendering for experiment outputs."""

from .figures import KINDS, FigureSpec, compare, render

__all__ = ["KINDS", "FigureSpec", "compare", "render"]
