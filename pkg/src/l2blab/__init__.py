"""Learning-to-bootstrap: meta-learned joint instance and label reweighting for noisy labels."""
__version__ = "0.1.0"

from .datagen import Dataset, gen_blobs, gen_spirals, inject_asymmetric, inject_symmetric, split
from .estimator import L2BClassifier
from .harness import TrainConfig, audit_labels, compare, run_experiment, train
from .numcore import InvalidInputError, make_rng

__all__ = [
    "Dataset",
    "InvalidInputError",
    "L2BClassifier",
    "TrainConfig",
    "audit_labels",
    "compare",
    "gen_blobs",
    "gen_spirals",
    "inject_asymmetric",
    "inject_symmetric",
    "make_rng",
    "run_experiment",
    "split",
    "train",
]
