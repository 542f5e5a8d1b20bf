"""SKD-SRL: self-knowledge distillation with Siamese representation learning."""

from .augment import AugmentConfig, ViewPair, two_views
from .data import DatasetSplit, SyntheticConfig, generate_synthetic, load_clip_dataset
from .losses import HyperParams, kd_kl_loss, neg_cosine, sim_loss, total_loss
from .model import BranchOutputs, ModelSpec, SKDModel, build_model
from .train import TrainConfig, train_skd_srl
from .evalbench import MechanismSpec, run_comparison, compare_report

__all__ = [
    "AugmentConfig",
    "ViewPair",
    "two_views",
    "DatasetSplit",
    "SyntheticConfig",
    "generate_synthetic",
    "load_clip_dataset",
    "HyperParams",
    "kd_kl_loss",
    "neg_cosine",
    "sim_loss",
    "total_loss",
    "BranchOutputs",
    "ModelSpec",
    "SKDModel",
    "build_model",
    "TrainConfig",
    "train_skd_srl",
    "MechanismSpec",
    "run_comparison",
    "compare_report",
]

__version__ = "0.1.0"
