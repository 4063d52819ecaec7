"""Figure generation for srkit experiment CSV output."""

from .figspec import FigSpecError, FigureSpec
from .render import RenderInfo, render

__all__ = ["FigSpecError", "FigureSpec", "RenderInfo", "render"]
