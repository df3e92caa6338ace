"""Two-stage sound scene segmentation: event detection, class-conditioned separation."""

from s5sep.errors import InvalidInputError

__version__ = "0.1.0"

__all__ = ["InvalidInputError", "__version__"]
