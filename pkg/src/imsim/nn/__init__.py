from .checkpoint import assign_parameters, load_checkpoint, save_checkpoint
from .gradcheck import CorruptedGradient, GradCheckReport, grad_check
from .layers import (BiLstm, Conv1d, Dense, Identity, Lstm, Module, ReLU, Sequential, conv_stack,
                     mlp)
from .losses import cross_entropy_loss, mse_loss
from .optim import AdamState, adam_step, clip_by_global_norm

__all__ = [
    "AdamState", "BiLstm", "Conv1d", "CorruptedGradient", "Dense", "GradCheckReport", "Identity",
    "Lstm", "Module", "ReLU", "Sequential", "adam_step", "assign_parameters",
    "clip_by_global_norm", "conv_stack", "cross_entropy_loss", "grad_check",
    "load_checkpoint", "mlp", "mse_loss", "save_checkpoint",
]
