"""Autodiff engine, layers, optimizer, gradient checking, checkpoints."""

from hrrplab.nn.autodiff import Tensor, parameter
from hrrplab.nn.checkpoint import (CheckpointError, load_checkpoint,
                                   restore_parameters, save_checkpoint)
from hrrplab.nn.gradcheck import finite_difference_check
from hrrplab.nn.layers import (FULL_SCALE_CONFIG, ConditionEmbedding, Conv1d,
                               GroupNorm, Linear, Module, NetworkConfig,
                               ResBlock, embed_angles, sinusoidal_embedding)
from hrrplab.nn.optim import Adam, clip_parameters

__all__ = [
    "Adam", "CheckpointError", "ConditionEmbedding", "Conv1d", "FULL_SCALE_CONFIG",
    "GroupNorm", "Linear", "Module", "NetworkConfig", "ResBlock",
    "Tensor", "clip_parameters", "embed_angles", "finite_difference_check",
    "load_checkpoint", "parameter", "restore_parameters", "save_checkpoint",
    "sinusoidal_embedding",
]
