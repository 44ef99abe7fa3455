"""Server-side guarantee on each client's local 0-1 loss.

The local loss of the global head is bounded by

    E_c[ 2*lt - lt^2 + ((1 - lt) / sqrt(2)) * sqrt(H - L) ]

where lt is the head's 0-1 loss on the class's synthetic features, L is
the average log-likelihood the fitted mixture achieved on the real class
features, and H is the expected log-density of the class distribution
under itself (the negative differential entropy). H - L then estimates
the KL divergence between the real class distribution and its mixture
approximation, and the square-root term is its total-variation price.

H is estimated nonparametrically with the Kozachenko-Leonenko k-nearest
neighbor entropy estimator after dequantizing the data with a small
uniform jitter; without dequantization the discrete empirical entropy is
infinite and the bound is vacuous.
"""

import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

from ._seeding import derive_seed
from .classifier import ClassifierHead, predict, zero_one_loss
from .features import FeatureDataset, class_conditional

DEQUANT_HALF_WIDTH = 1e-6


def entropy_term(x, neighbors: int = 4, *, dequant_seed: int = 0) -> float:
    """Expected log-density of the sample's distribution under itself.

    Returns the negative of the Kozachenko-Leonenko differential entropy
    estimate, so that (entropy_term - avg_log_likelihood) estimates a KL
    divergence. Deterministic given the dequantization seed.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("need an (n, d) matrix")
    n, d = x.shape
    if n <= neighbors:
        raise ValueError(f"need more than {neighbors} samples, got {n}")
    rng = np.random.default_rng(dequant_seed)
    jittered = x + rng.uniform(-DEQUANT_HALF_WIDTH, DEQUANT_HALF_WIDTH, size=x.shape)
    tree = cKDTree(jittered)
    dist, _ = tree.query(jittered, k=neighbors + 1)
    radii = dist[:, neighbors]
    if not (radii > 0).all():
        raise ValueError("degenerate data: coincident points after dequantization")
    log_unit_ball = 0.5 * d * np.log(np.pi) - gammaln(0.5 * d + 1.0)
    entropy = (
        digamma(n)
        - digamma(neighbors)
        + log_unit_ball
        + d * float(np.log(radii).mean())
    )
    return -entropy


def local_bound(synthetic_losses, entropy_terms, em_log_likelihoods, class_weights) -> float:
    """Right-hand side of the local-accuracy guarantee (unclamped).

    class_weights must be the class marginal (non-negative, summing to 1).
    Negative KL surrogates are floored at zero with a warning; they can
    only arise from estimator noise.
    """
    lt = np.asarray(synthetic_losses, dtype=np.float64)
    ent = np.asarray(entropy_terms, dtype=np.float64)
    ll = np.asarray(em_log_likelihoods, dtype=np.float64)
    w = np.asarray(class_weights, dtype=np.float64)
    if not (lt.shape == ent.shape == ll.shape == w.shape):
        raise ValueError("all per-class inputs must have matching shapes")
    if lt.size == 0:
        raise ValueError("need at least one class")
    if (lt < 0).any() or (lt > 1).any():
        raise ValueError("synthetic losses must lie in [0, 1]")
    if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("class weights must be non-negative and sum to 1")
    kl = ent - ll
    if (kl < 0).any():
        warnings.warn(
            f"flooring {int((kl < 0).sum())} negative KL surrogate(s) at 0",
            stacklevel=2,
        )
        kl = np.clip(kl, 0.0, None)
    terms = 2.0 * lt - lt**2 + (1.0 - lt) / np.sqrt(2.0) * np.sqrt(kl)
    return float((w * terms).sum())


@dataclass(frozen=True)
class ClassBound:
    """Per-class ingredients of the guarantee."""

    class_id: int
    num_real: int
    weight: float
    synthetic_loss: float
    entropy_term: float
    em_log_likelihood: float
    kl_surrogate: float
    bound_term: float

    def to_dict(self) -> dict:
        return {
            "class": self.class_id,
            "num_real": self.num_real,
            "weight": self.weight,
            "synthetic_loss": self.synthetic_loss,
            "entropy_term": self.entropy_term,
            "em_log_likelihood": self.em_log_likelihood,
            "kl_surrogate": self.kl_surrogate,
            "bound_term": self.bound_term,
        }


@dataclass(frozen=True)
class BoundReport:
    """Evaluated guarantee for one client."""

    per_class: tuple
    bound: float
    bound_clamped: float
    actual_loss: float
    holds: bool
    excluded_classes: tuple

    def to_dict(self) -> dict:
        return {
            "per_class": [cb.to_dict() for cb in self.per_class],
            "bound": self.bound,
            "bound_clamped": self.bound_clamped,
            "actual_loss": self.actual_loss,
            "holds": self.holds,
            "excluded_classes": list(self.excluded_classes),
        }


def verify_bound(
    ds: FeatureDataset,
    synthetic_by_class: Mapping[int, np.ndarray],
    head: ClassifierHead,
    em_ll_by_class: Mapping[int, float],
    *,
    neighbors: int = 4,
    dequant_seed: int = 0,
) -> BoundReport:
    """Evaluate the guarantee from one run's actual artifacts.

    Classes present in the real data but missing a synthetic set, an EM
    log-likelihood, or enough samples for the entropy estimate are
    excluded from the expectation with a warning; the class marginal is
    renormalized over the classes that remain.
    """
    if ds.num_samples == 0:
        raise ValueError("client dataset is empty")
    actual = zero_one_loss(head, ds)
    counts = ds.class_counts()
    rows = []
    excluded = []
    for label in np.flatnonzero(counts):
        label = int(label)
        synth = synthetic_by_class.get(label)
        if synth is None or len(synth) == 0:
            warnings.warn(f"class {label} has no synthetic features; excluded", stacklevel=2)
            excluded.append(label)
            continue
        if label not in em_ll_by_class:
            warnings.warn(f"class {label} has no fit log-likelihood; excluded", stacklevel=2)
            excluded.append(label)
            continue
        real = class_conditional(ds, label)
        if real.shape[0] <= neighbors:
            warnings.warn(
                f"class {label} has {real.shape[0]} samples, too few for the entropy estimate",
                stacklevel=2,
            )
            excluded.append(label)
            continue
        synth = np.asarray(synth, dtype=np.float64)
        synthetic_loss = float((predict(head, synth) != label).mean())
        ent = entropy_term(real, neighbors, dequant_seed=derive_seed(dequant_seed, label))
        ll = float(em_ll_by_class[label])
        rows.append((label, int(counts[label]), synthetic_loss, ent, ll))
    if not rows:
        raise ValueError("no class was estimable; cannot evaluate this bound")
    weights = np.array([r[1] for r in rows], dtype=np.float64)
    weights = weights / weights.sum()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bound = local_bound(
            [r[2] for r in rows], [r[3] for r in rows], [r[4] for r in rows], weights
        )
    per_class = tuple(
        ClassBound(
            class_id=r[0],
            num_real=r[1],
            weight=float(weights[i]),
            synthetic_loss=r[2],
            entropy_term=r[3],
            em_log_likelihood=r[4],
            kl_surrogate=max(0.0, r[3] - r[4]),
            bound_term=2 * r[2] - r[2] ** 2 + (1 - r[2]) / np.sqrt(2) * np.sqrt(max(0.0, r[3] - r[4])),
        )
        for i, r in enumerate(rows)
    )
    return BoundReport(
        per_class=per_class,
        bound=bound,
        bound_clamped=min(1.0, max(0.0, bound)),
        actual_loss=actual,
        holds=bool(actual <= bound + 1e-9),
        excluded_classes=tuple(excluded),
    )
