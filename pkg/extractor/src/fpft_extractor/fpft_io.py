"""FPFT1 feature file writer.

Layout (little-endian): magic "FPFT", version u8 = 1, n u32, d u32,
C u32, 3 reserved bytes, then n*d float32 feature values row-major, then
n labels as u16. This mirrors the consumer side exactly; the file is the
only interface between the extractor and the training simulator.
"""

import struct

import numpy as np

MAGIC = b"FPFT"
VERSION = 1
_HEADER = struct.Struct("<4sBIII3x")
MAX_CLASSES = 1 << 16


def write_fpft(path, features: np.ndarray, labels: np.ndarray, num_classes: int) -> None:
    features = np.ascontiguousarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[1] < 1:
        raise ValueError("features must be a non-degenerate (n, d) matrix")
    if labels.shape != (features.shape[0],):
        raise ValueError("labels must match the number of feature rows")
    if not np.isfinite(features).all():
        raise ValueError("features must be finite")
    if num_classes < 1 or num_classes > MAX_CLASSES:
        raise ValueError(f"num_classes must lie in [1, {MAX_CLASSES}]")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError("labels must lie in [0, num_classes)")
    n, d = features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, d, num_classes))
        fh.write(features.astype("<f4", copy=False).tobytes())
        fh.write(labels.astype("<u2").tobytes())
