"""Scalar losses returning ``(value, d value / d input)``."""
from __future__ import annotations

import numpy as np
from scipy.special import log_softmax

from ..errors import ConfigError


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ConfigError(f"mse_loss shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def cross_entropy_loss(logits, labels) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy averaged over every symbol position.

    ``logits`` is [..., Q]; ``labels`` holds integer classes of shape [...].
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.shape[:-1] != labels.shape:
        raise ConfigError(f"labels shape {labels.shape} != logits {logits.shape[:-1]}")
    q = logits.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= q):
        raise ConfigError("class index out of range")
    logp = log_softmax(logits, axis=-1)
    picked = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
    n = labels.size
    grad = np.exp(logp)
    np.put_along_axis(grad, labels[..., None],
                      np.take_along_axis(grad, labels[..., None], axis=-1) - 1.0, axis=-1)
    return float(-picked.mean()), grad / n
