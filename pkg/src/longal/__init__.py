"""Active learning for change detection in longitudinal volumetric images."""

__version__ = "0.1.0"
