"""Gray-mapped square QAM, soft demapping and the bit interleaver."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from ..errors import ConfigError
from ..seeding import rng_for

SUPPORTED_ORDERS = (4, 16, 64)


def bits_per_symbol(order: int) -> int:
    if order not in SUPPORTED_ORDERS:
        raise ConfigError(f"unsupported QAM order {order}; use one of {SUPPORTED_ORDERS}")
    return int(np.log2(order))


def _pam_level(c: np.ndarray) -> np.ndarray:
    """Gray PAM amplitude from bits c[..., 0] (sign) .. c[..., p-1]."""
    s = 1 - 2 * c.astype(np.int64)
    p = c.shape[-1]
    amp = np.ones(c.shape[:-1], dtype=np.int64)
    for j in range(p - 1, 0, -1):
        amp = 2 ** (p - j) - s[..., j] * amp
    return s[..., 0] * amp


@lru_cache(maxsize=None)
def _tables(order: int) -> tuple[np.ndarray, np.ndarray]:
    nb = bits_per_symbol(order)
    labels = ((np.arange(order)[:, None] >> np.arange(nb - 1, -1, -1)) & 1).astype(np.uint8)
    # even bit positions drive I, odd positions drive Q
    i = _pam_level(labels[:, 0::2])
    q = _pam_level(labels[:, 1::2])
    norm = np.sqrt(2.0 * (order - 1) / 3.0)
    points = (i + 1j * q) / norm
    labels.setflags(write=False)
    points.setflags(write=False)
    return points, labels


def constellation(order: int) -> np.ndarray:
    """Points indexed by symbol index (bits read MSB first)."""
    return _tables(order)[0]


def bit_labels(order: int) -> np.ndarray:
    return _tables(order)[1]


def bits_to_indices(bits, order: int) -> np.ndarray:
    nb = bits_per_symbol(order)
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] % nb:
        raise ConfigError(f"bit count {bits.shape[-1]} not divisible by {nb}")
    groups = bits.reshape(*bits.shape[:-1], -1, nb)
    return groups @ (1 << np.arange(nb - 1, -1, -1))


def indices_to_bits(idx, order: int) -> np.ndarray:
    lab = bit_labels(order)[np.asarray(idx)]
    return lab.reshape(*lab.shape[:-2], -1)


def qam_modulate(bits, order: int = 4) -> np.ndarray:
    return constellation(order)[bits_to_indices(bits, order)]


def qam_soft_demod(symbols, noise_var, order: int = 4) -> np.ndarray:
    """Exact per-bit LLRs ``log P(b=0|y) / P(b=1|y)`` under complex AWGN.

    ``noise_var`` may be a scalar or broadcast against ``symbols``.
    """
    pts, lab = _tables(order)
    y = np.asarray(symbols, dtype=complex)
    nv = np.broadcast_to(np.asarray(noise_var, dtype=float), y.shape)
    if np.any(nv <= 0):
        raise ConfigError("noise_var must be positive")
    metric = -np.abs(y[..., None] - pts) ** 2 / nv[..., None]
    return metric_to_llr(metric, order)


def metric_to_llr(metric: np.ndarray, order: int, max_log: bool = False) -> np.ndarray:
    """Per-bit LLRs from per-symbol log-likelihoods ``[..., S, order]``."""
    lab = bit_labels(order)
    nb = lab.shape[1]
    out = np.empty((*metric.shape[:-1], nb))
    for b in range(nb):
        zero, one = metric[..., lab[:, b] == 0], metric[..., lab[:, b] == 1]
        if max_log:
            out[..., b] = zero.max(-1) - one.max(-1)
        else:
            out[..., b] = logsumexp(zero, axis=-1) - logsumexp(one, axis=-1)
    return out.reshape(*metric.shape[:-2], -1)


def hard_indices(symbols, order: int = 4) -> np.ndarray:
    pts = constellation(order)
    return np.argmin(np.abs(np.asarray(symbols)[..., None] - pts), axis=-1)


class Interleaver:
    """A bit permutation: ``interleave(b)[i] = b[perm[i]]``."""

    def __init__(self, perm):
        perm = np.asarray(perm, dtype=np.int64)
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ConfigError("perm must be a permutation of range(n)")
        self.perm = perm
        self.inverse = np.argsort(perm)

    def __len__(self):
        return self.perm.size

    @classmethod
    def identity(cls, n: int) -> "Interleaver":
        return cls(np.arange(n))

    @classmethod
    def from_seed(cls, n: int, seed: int) -> "Interleaver":
        return cls(rng_for(seed, "interleaver").permutation(n))


def interleave(bits, pi: Interleaver) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape[-1] != len(pi):
        raise ConfigError(f"length {bits.shape[-1]} != interleaver size {len(pi)}")
    return bits[..., pi.perm]


def deinterleave(bits, pi: Interleaver) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape[-1] != len(pi):
        raise ConfigError(f"length {bits.shape[-1]} != interleaver size {len(pi)}")
    return bits[..., pi.inverse]
