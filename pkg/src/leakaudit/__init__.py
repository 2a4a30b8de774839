"""leakaudit: measure how much trained image classifiers leak about their data.

Train small CNNs under regularization mechanisms or DP-SGD, attack them
with loss-threshold and posterior-classifier membership inference, and
quantify residual leakage with a PGD-based distance-to-confident metric.
"""

from .attacks import AttackReport, SalemAttacker, advantage, salem_attack, salem_infer, salem_train, yeom_attack, yeom_infer
from .data import Dataset, MiaEvalSet, build_mia_eval_set, load_cifar, load_idx, make_synthetic, write_idx
from .dp import DpConfig, PrivacyReport, clip_gradient, dp_sgd_train, rdp_epsilon
from .dtc import DtcConfig, DtcReport, dtc_report, dtc_score
from .regularizers import RegularizerSpec, distill_targets, perturb_gaussian, random_crop, smooth_labels
from .training import LossStats, TrainConfig, TrainResult, loss_stats, train_model

__version__ = "0.1.0"

__all__ = [
    "AttackReport",
    "Dataset",
    "DpConfig",
    "DtcConfig",
    "DtcReport",
    "LossStats",
    "MiaEvalSet",
    "PrivacyReport",
    "RegularizerSpec",
    "SalemAttacker",
    "TrainConfig",
    "TrainResult",
    "advantage",
    "build_mia_eval_set",
    "clip_gradient",
    "distill_targets",
    "dp_sgd_train",
    "dtc_report",
    "dtc_score",
    "load_cifar",
    "load_idx",
    "loss_stats",
    "make_synthetic",
    "perturb_gaussian",
    "random_crop",
    "rdp_epsilon",
    "salem_attack",
    "salem_infer",
    "salem_train",
    "smooth_labels",
    "train_model",
    "write_idx",
    "yeom_attack",
    "yeom_infer",
]
