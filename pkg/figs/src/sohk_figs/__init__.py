"""Figure rendering for sohk batch outputs: CSV/JSON in, SVG out."""

__version__ = "0.1.0"

from .figures import SPECS, render

__all__ = ["SPECS", "render", "__version__"]
