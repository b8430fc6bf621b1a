"""Layers with explicit forward caches and hand-written backward passes.

Activations are channels-last: dense layers act on the last axis, ``Conv1d``
and ``Lstm`` take ``[batch, length, channels]``.
"""
from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import ConfigError, StateError


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class Module:
    """Base class. Leaves own ``params``/``grads``; containers list children."""

    params: dict
    grads: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    def children(self) -> Iterable[tuple[str, "Module"]]:
        return ()

    def parameters(self) -> dict[str, np.ndarray]:
        out = {k: v for k, v in self.params.items()}
        for name, child in self.children():
            for k, v in child.parameters().items():
                out[f"{name}.{k}"] = v
        return out

    def gradients(self) -> dict[str, np.ndarray]:
        out = {k: v for k, v in self.grads.items()}
        for name, child in self.children():
            for k, v in child.gradients().items():
                out[f"{name}.{k}"] = v
        return out

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0
        for _, child in self.children():
            child.zero_grad()

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def astype(self, dtype) -> "Module":
        for k in self.params:
            self.params[k] = self.params[k].astype(dtype)
            self.grads[k] = np.zeros_like(self.params[k])
        for _, child in self.children():
            child.astype(dtype)
        return self

    def __call__(self, x):
        return self.forward(x)

    def _need_cache(self, cache):
        if cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        return cache

    def _register(self, **params):
        for k, v in params.items():
            self.params[k] = v
            self.grads[k] = np.zeros_like(v)


class Identity(Module):
    def forward(self, x):
        self._cache = True
        return x

    def backward(self, dy):
        return dy


class Dense(Module):
    """``y = x @ w.T + b`` on the last axis; ``w`` is [out][in]."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self._register(w=glorot_uniform(rng, (n_out, n_in), n_in, n_out),
                       b=np.zeros(n_out))
        self._cache = None

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ConfigError(f"Dense expects last dim {self.n_in}, got {x.shape[-1]}")
        self._cache = x
        return x @ self.params["w"].T + self.params["b"]

    def backward(self, dy):
        x = self._need_cache(self._cache)
        x2 = x.reshape(-1, self.n_in)
        d2 = dy.reshape(-1, self.n_out)
        self.grads["w"] += d2.T @ x2
        self.grads["b"] += d2.sum(axis=0)
        return dy @ self.params["w"]


class Conv1d(Module):
    """Width-2, stride-1 convolution over the length axis.

    ``mode="same"`` left-pads one zero so ``y[t] = k0 x[t-1] + k1 x[t]`` and
    the length is preserved; ``mode="valid"`` gives ``y[t] = k0 x[t] +
    k1 x[t+1]`` with length ``L - 1``. Kernels are stored as [out][in][2].
    """

    width = 2

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, mode: str = "same"):
        super().__init__()
        if mode not in ("same", "valid"):
            raise ConfigError(f"unknown conv mode {mode!r}")
        self.c_in, self.c_out, self.mode = c_in, c_out, mode
        fan_in, fan_out = c_in * self.width, c_out * self.width
        self._register(kernels=glorot_uniform(rng, (c_out, c_in, self.width), fan_in, fan_out),
                       b=np.zeros(c_out))
        self._cache = None

    def _stacked(self):
        k = self.params["kernels"]
        return np.concatenate([k[:, :, 0].T, k[:, :, 1].T], axis=0)  # [2 c_in][c_out]

    def forward(self, x):
        if x.ndim != 3 or x.shape[-1] != self.c_in:
            raise ConfigError(f"Conv1d expects [B, L, {self.c_in}], got {x.shape}")
        if self.mode == "same":
            xp = np.concatenate([np.zeros_like(x[:, :1]), x], axis=1)
        else:
            if x.shape[1] < 2:
                raise ConfigError("valid convolution needs length >= 2")
            xp = x
        x2 = np.concatenate([xp[:, :-1], xp[:, 1:]], axis=-1)
        self._cache = (x2, x.shape)
        return x2 @ self._stacked() + self.params["b"]

    def backward(self, dy):
        x2, shape = self._need_cache(self._cache)
        ci = self.c_in
        gw = x2.reshape(-1, 2 * ci).T @ dy.reshape(-1, self.c_out)  # [2ci][co]
        self.grads["kernels"][:, :, 0] += gw[:ci].T
        self.grads["kernels"][:, :, 1] += gw[ci:].T
        self.grads["b"] += dy.reshape(-1, self.c_out).sum(axis=0)
        dx2 = dy @ self._stacked().T
        lp = dx2.shape[1] + 1
        dxp = np.zeros((shape[0], lp, ci), dtype=dy.dtype)
        dxp[:, :-1] += dx2[..., :ci]
        dxp[:, 1:] += dx2[..., ci:]
        return dxp[:, 1:] if self.mode == "same" else dxp


class ReLU(Module):
    def __init__(self):
        super().__init__()
        self._cache = None

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dy):
        return dy * self._need_cache(self._cache)


class Lstm(Module):
    """Single-layer LSTM over axis 1, returning the full hidden sequence.

    Gate order in the stacked weights is (input, forget, cell, output);
    ``w_ih`` is [4H][D], ``w_hh`` is [4H][H], ``b`` is [4H].
    """

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator,
                 forget_bias: float = 1.0):
        super().__init__()
        self.n_in, self.hidden = n_in, hidden
        s = 1.0 / np.sqrt(hidden)
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = forget_bias
        self._register(w_ih=rng.uniform(-s, s, size=(4 * hidden, n_in)),
                       w_hh=rng.uniform(-s, s, size=(4 * hidden, hidden)),
                       b=b)
        self._cache = None

    def forward(self, x):
        if x.ndim != 3 or x.shape[-1] != self.n_in:
            raise ConfigError(f"Lstm expects [B, T, {self.n_in}], got {x.shape}")
        bsz, steps, _ = x.shape
        hd = self.hidden
        w_hh_t = self.params["w_hh"].T
        zx = x @ self.params["w_ih"].T + self.params["b"]
        gates = np.empty((bsz, steps, 4 * hd), dtype=zx.dtype)
        cs = np.empty((bsz, steps + 1, hd), dtype=zx.dtype)
        hs = np.empty((bsz, steps + 1, hd), dtype=zx.dtype)
        cs[:, 0] = 0.0
        hs[:, 0] = 0.0
        for t in range(steps):
            z = zx[:, t] + hs[:, t] @ w_hh_t
            g = gates[:, t]
            g[:, :2 * hd] = sigmoid(z[:, :2 * hd])
            g[:, 2 * hd:3 * hd] = np.tanh(z[:, 2 * hd:3 * hd])
            g[:, 3 * hd:] = sigmoid(z[:, 3 * hd:])
            cs[:, t + 1] = g[:, hd:2 * hd] * cs[:, t] + g[:, :hd] * g[:, 2 * hd:3 * hd]
            hs[:, t + 1] = g[:, 3 * hd:] * np.tanh(cs[:, t + 1])
        self._cache = (x, gates, cs, hs)
        return hs[:, 1:].copy()

    def backward(self, dy):
        x, gates, cs, hs = self._need_cache(self._cache)
        bsz, steps, _ = x.shape
        hd = self.hidden
        w_hh = self.params["w_hh"]
        dz = np.empty_like(gates)
        dh_next = np.zeros((bsz, hd), dtype=dy.dtype)
        dc_next = np.zeros((bsz, hd), dtype=dy.dtype)
        for t in range(steps - 1, -1, -1):
            g = gates[:, t]
            i, f, gg, o = g[:, :hd], g[:, hd:2 * hd], g[:, 2 * hd:3 * hd], g[:, 3 * hd:]
            tc = np.tanh(cs[:, t + 1])
            dh = dy[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            d = dz[:, t]
            d[:, :hd] = dc * gg * i * (1.0 - i)
            d[:, hd:2 * hd] = dc * cs[:, t] * f * (1.0 - f)
            d[:, 2 * hd:3 * hd] = dc * i * (1.0 - gg * gg)
            d[:, 3 * hd:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = d @ w_hh
        dz2 = dz.reshape(-1, 4 * hd)
        self.grads["w_ih"] += dz2.T @ x.reshape(-1, self.n_in)
        self.grads["w_hh"] += dz2.T @ hs[:, :-1].reshape(-1, hd)
        self.grads["b"] += dz2.sum(axis=0)
        return dz @ self.params["w_ih"]


class BiLstm(Module):
    """Two :class:`Lstm` passes (forward and reversed) concatenated on the
    feature axis; output width ``2 * hidden``."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator,
                 forget_bias: float = 1.0):
        super().__init__()
        self.n_in, self.hidden = n_in, hidden
        self.fwd = Lstm(n_in, hidden, rng, forget_bias)
        self.bwd = Lstm(n_in, hidden, rng, forget_bias)

    def children(self):
        return [("fwd", self.fwd), ("bwd", self.bwd)]

    def forward(self, x):
        a = self.fwd.forward(x)
        b = self.bwd.forward(x[:, ::-1])[:, ::-1]
        return np.concatenate([a, b], axis=-1)

    def backward(self, dy):
        h = self.hidden
        dx = self.fwd.backward(np.ascontiguousarray(dy[..., :h]))
        dx = dx + self.bwd.backward(np.ascontiguousarray(dy[:, ::-1, h:]))[:, ::-1]
        return dx


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        self.layers = list(layers)

    def children(self):
        return [(str(i), layer) for i, layer in enumerate(self.layers)]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


def conv_stack(widths, rng: np.random.Generator, mode: str = "same",
               final_relu: bool = True) -> Sequential:
    """Conv1d layers ``widths[0] -> widths[1] -> ...`` with ReLU in between."""
    layers: list[Module] = []
    for j, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        layers.append(Conv1d(a, b, rng, mode))
        if final_relu or j < len(widths) - 2:
            layers.append(ReLU())
    return Sequential(*layers)


def mlp(widths, rng: np.random.Generator, final_relu: bool = False) -> Sequential:
    layers: list[Module] = []
    for j, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        layers.append(Dense(a, b, rng))
        if final_relu or j < len(widths) - 2:
            layers.append(ReLU())
    return Sequential(*layers)
