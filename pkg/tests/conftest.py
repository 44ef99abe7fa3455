import numpy as np
import pytest

import fedpft as fp
from fedpft._seeding import derive_seed


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def make_dataset(seed=0, n=60, d=4, num_classes=3, scale=1.0, dataset_id="ds"):
    r = np.random.default_rng(seed)
    feats = r.normal(0, scale, size=(n, d)).astype(np.float32)
    labels = r.integers(0, num_classes, size=n)
    return fp.FeatureDataset(feats, labels, num_classes, dataset_id=dataset_id)


def synthetic_problem(seed, num_classes=10, dim=16, components=2, family=fp.CovarianceFamily.DIAG,
                      train_per_class=500, test_per_class=200, mean_scale=1.6):
    """Ground-truth federation problem used throughout the pipeline tests."""
    truth = fp.random_ground_truth(
        num_classes, dim, components, family,
        seed=derive_seed(seed, "truth"), mean_scale=mean_scale,
    )
    train = fp.synth_generate(fp.SynthSpec(truth, train_per_class, seed=derive_seed(seed, "train")), "train")
    test = fp.synth_generate(fp.SynthSpec(truth, test_per_class, seed=derive_seed(seed, "test")), "test")
    return truth, train, test
