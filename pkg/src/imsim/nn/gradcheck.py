"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import mse_loss

REL_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst: str
    n_checked: int
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} max_rel_err={self.max_rel_err:.3e} worst={self.worst} "
                f"checked={self.n_checked}")


def rel_err(a, b) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), REL_FLOOR)


def grad_check(network, x, tolerance: float = 1e-4, eps: float = 1e-5,
               seed: int = 0, max_params: int = 10_000,
               check_input: bool = True, per_tensor: int | None = None) -> GradCheckReport:
    """Compare backward() against central differences of an MSE loss.

    The loss is ``mse(network(x), target)`` with a fixed random target. Every
    parameter entry is perturbed (the network must have at most
    ``max_params`` parameters) unless ``per_tensor`` is set, in which case a
    seeded sample of that many entries per tensor is checked instead. The
    input gradient is checked as well.
    """
    params = network.parameters()
    total = sum(p.size for p in params.values())
    if per_tensor is None and total > max_params:
        raise ValueError(f"network has {total} parameters (> {max_params})")
    pick = np.random.default_rng(seed + 1)
    x = np.array(x, dtype=np.float64)
    out = network.forward(x)
    target = np.random.default_rng(seed).standard_normal(out.shape)

    def loss_at(inp):
        return mse_loss(network.forward(inp), target)[0]

    network.zero_grad()
    _, dy = mse_loss(network.forward(x), target)
    dx = network.backward(dy)
    analytic = {k: v.copy() for k, v in network.gradients().items()}

    worst, worst_name, n = 0.0, "", 0
    for name, p in params.items():
        flat = p.reshape(-1)
        if per_tensor is not None and flat.size > per_tensor:
            entries = np.sort(pick.choice(flat.size, per_tensor, replace=False))
        else:
            entries = np.arange(flat.size)
        num = np.empty(entries.size)
        for j, i in enumerate(entries):
            old = flat[i]
            flat[i] = old + eps
            up = loss_at(x)
            flat[i] = old - eps
            down = loss_at(x)
            flat[i] = old
            num[j] = (up - down) / (2 * eps)
        err = rel_err(analytic[name].reshape(-1)[entries], num)
        n += entries.size
        if err.size and err.max() > worst:
            worst, worst_name = float(err.max()), name
    if check_input:
        num = np.empty_like(x)
        xf, nf = x.reshape(-1), num.reshape(-1)
        for i in range(xf.size):
            old = xf[i]
            xf[i] = old + eps
            up = loss_at(x)
            xf[i] = old - eps
            down = loss_at(x)
            xf[i] = old
            nf[i] = (up - down) / (2 * eps)
        err = rel_err(dx, num)
        n += x.size
        if err.size and err.max() > worst:
            worst, worst_name = float(err.max()), "<input>"
    return GradCheckReport(worst, worst_name, n, worst < tolerance)


class CorruptedGradient:
    """Wraps a network and scales one parameter's gradient (negative control)."""

    def __init__(self, network, factor: float = 1.01):
        self.network = network
        self.factor = factor
        self._target = next(iter(network.parameters()))

    def parameters(self):
        return self.network.parameters()

    def zero_grad(self):
        self.network.zero_grad()

    def forward(self, x):
        return self.network.forward(x)

    def backward(self, dy):
        dx = self.network.backward(dy)
        return dx

    def gradients(self):
        g = dict(self.network.gradients())
        g[self._target] = g[self._target] * self.factor
        return g
