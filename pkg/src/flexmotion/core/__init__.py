from .tensor import (Tensor, NumericError, recording, backward, as_tensor,
                     sinusoidal_embedding)
from .params import ParamStore, TensorBag, bag_from, gradients, loss_value
from .optim import AdamW, AdamWState, adamw_step
from .fd import finite_diff_check
from .rng import RngStream
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "Tensor", "NumericError", "recording", "backward", "as_tensor",
    "sinusoidal_embedding", "ParamStore", "TensorBag", "bag_from",
    "gradients", "loss_value", "AdamW", "AdamWState", "adamw_step",
    "finite_diff_check", "RngStream", "CheckpointError", "load_checkpoint",
    "save_checkpoint",
]
