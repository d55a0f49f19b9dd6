"""Corpus analytics for method adoption in scholarly abstracts."""

__version__ = "0.1.0"

from .errors import ScholarpipeError

__all__ = ["ScholarpipeError", "__version__"]
