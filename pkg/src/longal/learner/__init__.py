from .checkpoint import learner_from_bytes, learner_to_bytes, load_learner, save_learner
from .estimator import ChangeDetector, LearnerConfig, global_average
from .losses import focal_loss, focal_loss_torch
from .network import ChangeUNet

__all__ = [
    "ChangeDetector",
    "ChangeUNet",
    "LearnerConfig",
    "focal_loss",
    "focal_loss_torch",
    "global_average",
    "learner_from_bytes",
    "learner_to_bytes",
    "load_learner",
    "save_learner",
]
