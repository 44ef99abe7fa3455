"""Offline feature extraction: images in, FPFT1 feature files out.

The training simulator consumes feature files only; this package is the
bridge from image datasets to that format, running a pretrained vision
backbone in batches and recording its preprocessing in a sidecar.
"""

from .backbones import BACKBONE_DIMS, Backbone, BackboneError, load_backbone
from .extract import ExtractionError, ExtractionJob, extract
from .fpft_io import write_fpft

__version__ = "0.1.0"

__all__ = [
    "BACKBONE_DIMS",
    "Backbone",
    "BackboneError",
    "ExtractionError",
    "ExtractionJob",
    "extract",
    "load_backbone",
    "write_fpft",
]
