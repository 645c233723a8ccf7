"""CSV stream ingestion and segmentation."""

__version__ = "0.1.0"
