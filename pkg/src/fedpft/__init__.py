"""One-shot federated learning by parametric transfer of feature mixtures.

Clients fit per-class Gaussian mixtures to pre-extracted feature
embeddings and transmit only the mixture parameters in a compact 16-bit
wire format, optionally under differential privacy. The server samples
synthetic features from the received mixtures and trains a linear
classifier head on them. Includes non-IID partitioning schemes, a
decentralized chain topology, ensemble and averaging baselines,
communication-cost accounting, and a computable guarantee on each
client's local 0-1 loss.
"""

from .bounds import BoundReport, entropy_term, local_bound, verify_bound
from .classifier import (
    ClassifierHead,
    TrainConfig,
    average_heads,
    cross_entropy_and_grad,
    ensemble_predict,
    predict,
    predict_proba,
    train_head,
    zero_one_loss,
)
from .dp import DpConfig, DpReleaseStats, dp_release, noise_sigma, psd_project
from .features import (
    FeatureDataset,
    PartitionSpec,
    SynthSpec,
    class_conditional,
    load_features,
    normalize_to_unit_ball,
    partition,
    random_ground_truth,
    save_features,
    synth_generate,
)
from .gmm import (
    CovarianceFamily,
    EmConfig,
    FitError,
    FitStats,
    GmmError,
    GmmParams,
    avg_log_likelihood,
    em_fit,
    log_pdf,
    sample,
)
from .orchestrator import (
    ExperimentReport,
    RunConfig,
    evaluate,
    run,
    run_centralized,
    run_decentralized_chain,
)
from .protocol import (
    CommReport,
    GmmMessage,
    account,
    decode,
    encode,
    param_count,
    read_message_file,
    write_message_file,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "ClassifierHead",
    "CommReport",
    "CovarianceFamily",
    "DpConfig",
    "DpReleaseStats",
    "EmConfig",
    "ExperimentReport",
    "FeatureDataset",
    "FitError",
    "FitStats",
    "GmmError",
    "GmmMessage",
    "GmmParams",
    "PartitionSpec",
    "RunConfig",
    "SynthSpec",
    "TrainConfig",
    "account",
    "average_heads",
    "avg_log_likelihood",
    "class_conditional",
    "cross_entropy_and_grad",
    "decode",
    "dp_release",
    "em_fit",
    "encode",
    "ensemble_predict",
    "entropy_term",
    "evaluate",
    "load_features",
    "local_bound",
    "log_pdf",
    "noise_sigma",
    "normalize_to_unit_ball",
    "param_count",
    "partition",
    "predict",
    "predict_proba",
    "psd_project",
    "random_ground_truth",
    "read_message_file",
    "run",
    "run_centralized",
    "run_decentralized_chain",
    "sample",
    "save_features",
    "synth_generate",
    "train_head",
    "verify_bound",
    "write_message_file",
    "zero_one_loss",
]
