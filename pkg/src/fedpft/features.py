"""Feature datasets: binary file I/O, normalization, partitioning.

A feature dataset is an (n, d) float32 matrix of embedding coordinates
with integer class labels. Datasets are read and written in the FPFT1
binary format, optionally projected into the unit ball, split across
simulated clients by several non-IID schemes, and generated synthetically
from ground-truth mixtures for testing.
"""

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import gmm
from ._seeding import derive_seed

MAGIC = b"FPFT"
VERSION = 1
# magic(4) version(u8) n(u32) d(u32) C(u32) reserved(3) = 20 bytes
_HEADER = struct.Struct("<4sBIII3x")
_MAX_FILE_CLASSES = 1 << 16  # labels are stored as u16


class FeatureFileError(Exception):
    """Base class for FPFT1 format violations."""


class BadMagicError(FeatureFileError):
    pass


class BadVersionError(FeatureFileError):
    pass


class TruncatedPayloadError(FeatureFileError):
    pass


class TrailingBytesError(FeatureFileError):
    pass


class LabelRangeError(FeatureFileError):
    pass


class NonFiniteError(FeatureFileError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """Immutable (n, d) float32 features with labels in [0, num_classes)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    dataset_id: str = ""

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if feats.shape[1] < 1:
            raise ValueError("feature dimension must be >= 1")
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise ValueError("labels must be a vector with one entry per row")
        if not np.isfinite(feats).all():
            raise ValueError("features must be finite")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def save_features(ds: FeatureDataset, path) -> None:
    """Write a dataset in the FPFT1 format."""
    if ds.num_classes > _MAX_FILE_CLASSES:
        raise ValueError(f"FPFT1 stores u16 labels; num_classes must be <= {_MAX_FILE_CLASSES}")
    header = _HEADER.pack(MAGIC, VERSION, ds.num_samples, ds.dim, ds.num_classes)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(ds.features.astype("<f4", copy=False).tobytes())
        fh.write(ds.labels.astype("<u2").tobytes())


def load_features(path) -> FeatureDataset:
    """Read an FPFT1 file; the dataset id is the file stem.

    Raises a distinct FeatureFileError subclass for each failure mode:
    wrong magic, unsupported version, short or oversized payload, labels
    outside [0, C), and non-finite feature values.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, n, d, c = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise BadVersionError(f"{path}: unsupported version {version}")
    if d < 1:
        raise FeatureFileError(f"{path}: header declares d={d}")
    if c < 1:
        raise FeatureFileError(f"{path}: header declares C={c}")
    expected = _HEADER.size + n * d * 4 + n * 2
    if len(raw) < expected:
        raise TruncatedPayloadError(
            f"{path}: header declares {expected} bytes, file holds {len(raw)}"
        )
    if len(raw) > expected:
        raise TrailingBytesError(f"{path}: {len(raw) - expected} trailing bytes")
    off = _HEADER.size
    feats = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    labels = np.frombuffer(raw, dtype="<u2", count=n, offset=off + n * d * 4)
    if not np.isfinite(feats).all():
        raise NonFiniteError(f"{path}: non-finite feature values")
    if n and labels.max() >= c:
        raise LabelRangeError(f"{path}: label {labels.max()} >= C={c}")
    return FeatureDataset(feats, labels.astype(np.int64), c, dataset_id=Path(path).stem)


def normalize_to_unit_ball(ds: FeatureDataset) -> FeatureDataset:
    """Rescale rows with norm above 1 onto the unit sphere.

    Rows already inside the ball are untouched, and the output is a fixed
    point: rescaled rows are nudged until their recomputed norm is <= 1,
    so applying the operation twice changes nothing.
    """
    if ds.num_samples == 0:
        return ds
    feats = ds.features.astype(np.float64)
    norms = np.linalg.norm(feats, axis=1)
    over = norms > 1.0
    if not over.any():
        return ds
    out = np.array(ds.features, copy=True)
    scaled = (feats[over] / norms[over, None]).astype(np.float32)
    for _ in range(4):
        new_norms = np.linalg.norm(scaled.astype(np.float64), axis=1)
        bad = new_norms > 1.0
        if not bad.any():
            break
        shrink = (1.0 - np.finfo(np.float32).eps) / new_norms[bad, None]
        scaled[bad] = (scaled[bad].astype(np.float64) * shrink).astype(np.float32)
    out[over] = scaled
    return FeatureDataset(out, ds.labels, ds.num_classes, ds.dataset_id)


def class_conditional(ds: FeatureDataset, label: int) -> np.ndarray:
    """Rows of the given class, in their original order."""
    if not 0 <= label < ds.num_classes:
        raise ValueError(f"class {label} out of range [0, {ds.num_classes})")
    return np.array(ds.features[ds.labels == label], copy=True)


@dataclass(frozen=True)
class PartitionSpec:
    """How to split one dataset across simulated clients.

    schemes:
      dirichlet       per class, client shares drawn from Dirichlet(beta)
      disjoint_label  contiguous class blocks of size ceil(C / num_clients)
      explicit        per-sample client ids given in `assignment`
    """

    scheme: str
    num_clients: int
    seed: int = 0
    beta: float | None = None
    assignment: Sequence[int] | None = None

    def __post_init__(self):
        if self.scheme not in ("dirichlet", "disjoint_label", "explicit"):
            raise ValueError(f"unknown partition scheme: {self.scheme!r}")
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if self.scheme == "dirichlet":
            if self.beta is None or self.beta <= 0:
                raise ValueError("dirichlet partitioning needs beta > 0")
        if self.scheme == "explicit" and self.assignment is None:
            raise ValueError("explicit partitioning needs an assignment list")


def partition(ds: FeatureDataset, spec: PartitionSpec) -> list[FeatureDataset]:
    """Split a dataset into disjoint client datasets covering every sample."""
    n, c, k = ds.num_samples, ds.num_classes, spec.num_clients
    groups: list[list[np.ndarray]] = [[] for _ in range(k)]
    if spec.scheme == "dirichlet":
        rng = np.random.default_rng(spec.seed)
        for label in range(c):
            idx = np.flatnonzero(ds.labels == label)
            if idx.size == 0:
                continue
            idx = rng.permutation(idx)
            shares = rng.dirichlet(np.full(k, spec.beta))
            cuts = (np.cumsum(shares)[:-1] * idx.size).astype(np.int64)
            for client, chunk in enumerate(np.split(idx, cuts)):
                groups[client].append(chunk)
    elif spec.scheme == "disjoint_label":
        if k > c:
            raise ValueError("disjoint_label needs num_clients <= num_classes")
        block = math.ceil(c / k)
        for client in range(k):
            lo, hi = client * block, min((client + 1) * block, c)
            groups[client].append(np.flatnonzero((ds.labels >= lo) & (ds.labels < hi)))
    else:
        assignment = np.asarray(spec.assignment, dtype=np.int64)
        if assignment.shape != (n,):
            raise ValueError("assignment must list one client id per sample")
        if n and (assignment.min() < 0 or assignment.max() >= k):
            raise ValueError("assignment ids must lie in [0, num_clients)")
        for client in range(k):
            groups[client].append(np.flatnonzero(assignment == client))
    out = []
    for client in range(k):
        idx = np.sort(np.concatenate(groups[client])) if groups[client] else np.empty(0, np.int64)
        out.append(
            FeatureDataset(
                ds.features[idx],
                ds.labels[idx],
                c,
                dataset_id=f"{ds.dataset_id}#client{client}",
            )
        )
    return out


@dataclass(frozen=True)
class SynthSpec:
    """Ground-truth mixtures for generating a labeled feature dataset."""

    class_gmms: tuple
    samples_per_class: int | Sequence[int]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "class_gmms", tuple(self.class_gmms))
        if len(self.class_gmms) < 1:
            raise ValueError("need at least one class mixture")
        for label, params in enumerate(self.class_gmms):
            if _min_eigenvalue(params) <= 0:
                raise ValueError(f"class {label} ground-truth covariance is not positive definite")
        counts = self._counts()
        if (counts < 0).any():
            raise ValueError("samples_per_class must be >= 0")

    def _counts(self) -> np.ndarray:
        c = len(self.class_gmms)
        if isinstance(self.samples_per_class, (int, np.integer)):
            return np.full(c, int(self.samples_per_class), dtype=np.int64)
        counts = np.asarray(self.samples_per_class, dtype=np.int64)
        if counts.shape != (c,):
            raise ValueError("samples_per_class must be a scalar or one count per class")
        return counts


def _min_eigenvalue(params: gmm.GmmParams) -> float:
    if params.family == gmm.CovarianceFamily.FULL:
        return float(min(np.linalg.eigvalsh(cov).min() for cov in params.covariances))
    return float(params.covariances.min())


def synth_generate(spec: SynthSpec, dataset_id: str = "synth") -> FeatureDataset:
    """Draw the specified number of samples per class from its mixture."""
    counts = spec._counts()
    dim = spec.class_gmms[0].dim
    blocks, labels = [], []
    for label, params in enumerate(spec.class_gmms):
        if params.dim != dim:
            raise ValueError("all class mixtures must share one dimension")
        n = int(counts[label])
        blocks.append(gmm.sample(params, n, seed=derive_seed(spec.seed, "synth", label)))
        labels.append(np.full(n, label, dtype=np.int64))
    feats = np.concatenate(blocks) if blocks else np.empty((0, dim))
    return FeatureDataset(
        feats.astype(np.float32),
        np.concatenate(labels) if labels else np.empty(0, np.int64),
        len(spec.class_gmms),
        dataset_id=dataset_id,
    )


def random_ground_truth(
    num_classes: int,
    dim: int,
    num_components: int,
    family: gmm.CovarianceFamily,
    seed: int,
    mean_scale: float = 3.0,
    cov_scale: float = 1.0,
) -> list[gmm.GmmParams]:
    """Well-conditioned random mixtures, one per class, for simulations."""
    family = gmm.CovarianceFamily(family)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(num_classes):
        k = num_components
        weights = rng.dirichlet(np.full(k, 4.0))
        means = rng.normal(0.0, mean_scale, size=(k, dim))
        if family == gmm.CovarianceFamily.FULL:
            cov = np.empty((k, dim, dim))
            for j in range(k):
                a = rng.standard_normal((dim, dim))
                cov[j] = cov_scale**2 * (0.5 * (a @ a.T) / dim + 0.5 * np.eye(dim))
        elif family == gmm.CovarianceFamily.DIAG:
            cov = cov_scale**2 * rng.uniform(0.5, 1.5, size=(k, dim))
        else:
            cov = cov_scale**2 * rng.uniform(0.5, 1.5, size=k)
        out.append(gmm.GmmParams(family, weights, means, cov))
    return out
