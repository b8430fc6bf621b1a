"""Training configuration and the shared mini-batch loop."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .nn import AdamState, adam_step, clip_by_global_norm
from .seeding import rng_for

SF_GRID = (0.25, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class TrainConfig:
    # read by pydantic when configs are validated: unknown keys are errors
    __pydantic_config__ = {"extra": "forbid"}

    epochs: int = 60
    batch_frames: int = 32
    lr: float = 1e-3
    seed: int = 0
    scale_factor: float = 1.0
    clip_norm: float = 5.0
    holdout: float = 0.2
    oracle_labels: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_frames < 1:
            raise ConfigError("batch_frames must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.scale_factor not in SF_GRID:
            raise ConfigError(f"scale_factor must be one of {SF_GRID}")
        if not 0.0 < self.holdout < 1.0:
            raise ConfigError("holdout must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def split_indices(n: int, holdout: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle, then the last ``holdout`` fraction is held out."""
    if n < 2:
        raise ConfigError("need at least two frames to hold some out")
    perm = rng_for(seed, "split").permutation(n)
    n_test = min(max(1, int(round(n * holdout))), n - 1)
    return np.sort(perm[:n - n_test]), np.sort(perm[n - n_test:])


def run_epochs(net, n_items: int, cfg: TrainConfig,
               step_loss: Callable[[np.ndarray], float],
               on_epoch: Callable[[int], None] | None = None) -> list[float]:
    """Generic Adam loop.

    ``step_loss(batch_indices)`` must run forward + backward for the batch and
    return the loss; gradients are clipped, applied, then cleared. Returns the
    mean training loss per epoch.
    """
    state = AdamState(lr=cfg.lr)
    params = net.parameters()
    losses = []
    for epoch in range(cfg.epochs):
        order = rng_for(cfg.seed, "shuffle", epoch).permutation(n_items)
        total, count = 0.0, 0
        for start in range(0, n_items, cfg.batch_frames):
            idx = order[start:start + cfg.batch_frames]
            net.zero_grad()
            total += step_loss(idx) * idx.size
            count += idx.size
            grads = net.gradients()
            clip_by_global_norm(grads, cfg.clip_norm)
            adam_step(params, grads, state)
        losses.append(total / count)
        if on_epoch is not None:
            on_epoch(epoch)
    return losses
