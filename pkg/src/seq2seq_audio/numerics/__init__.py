from . import autodiff
from .autodiff import Tensor, backward
from .checkpoint import Checkpoint, CheckpointFormatError
from .gradcheck import grad_check, numeric_gradient
from .optim import AdamState, TrainingDiverged, adam_step, clip_by_global_norm, global_norm
from .params import ParamSet, dense, glorot_init, make_rng

__all__ = [
    "AdamState",
    "Checkpoint",
    "CheckpointFormatError",
    "ParamSet",
    "Tensor",
    "TrainingDiverged",
    "adam_step",
    "autodiff",
    "backward",
    "clip_by_global_norm",
    "dense",
    "glorot_init",
    "global_norm",
    "grad_check",
    "make_rng",
    "numeric_gradient",
]
