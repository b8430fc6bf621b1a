"""Linear receive combiners and the pilot-residual covariance estimate."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError

LOADING = 1e-6
COND_LIMIT = 1e12


def mrc_combine(y, h):
    """Matched-filter combining ``h^H y / h^H h`` over the antenna axis (0).

    ``y`` and ``h`` may carry extra trailing axes (e.g. resource elements);
    combining is applied independently along them.
    """
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    if y.shape != h.shape:
        raise ConfigError(f"shape mismatch {y.shape} vs {h.shape}")
    gain = np.sum(np.abs(h) ** 2, axis=0)
    if np.any(gain == 0):
        raise ConfigError("MRC undefined for a zero channel")
    out = np.sum(np.conj(h) * y, axis=0) / gain
    return out[()] if np.ndim(out) == 0 else out


def loaded_covariance(r_uu) -> np.ndarray:
    """Return ``r_uu`` or, if numerically singular, ``r_uu + load * I``."""
    r = np.asarray(r_uu, dtype=complex)
    m = r.shape[-1]
    if np.linalg.cond(r) > COND_LIMIT:
        load = LOADING * max(np.trace(r).real, 1e-300) / m
        r = r + load * np.eye(m)
    return r


def irc_weights(h, r_uu) -> np.ndarray:
    """``w = r_uu^{-1} h`` for ``h`` of shape [m] or [m][S]."""
    return np.linalg.solve(loaded_covariance(r_uu), np.asarray(h, dtype=complex))


def irc_combine(y, h, r_uu):
    """Whitened combining ``w^H y / w^H h`` with ``w = r_uu^{-1} h``."""
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    if y.shape != h.shape or np.shape(r_uu) != (h.shape[0], h.shape[0]):
        raise ConfigError("irc_combine: inconsistent shapes")
    w = irc_weights(h, r_uu)
    den = np.sum(np.conj(w) * h, axis=0)
    if np.any(den == 0):
        raise ConfigError("IRC undefined for a zero channel")
    out = np.sum(np.conj(w) * y, axis=0) / den
    return out[()] if np.ndim(out) == 0 else out


def smooth_channel(h_est, n_taps: int) -> np.ndarray:
    """Delay-domain truncation of a per-RE estimate along the last axis."""
    h_est = np.asarray(h_est, dtype=complex)
    taps = np.fft.ifft(h_est, axis=-1)
    taps[..., n_taps:] = 0
    return np.fft.fft(taps, axis=-1)


def residual_covariance(y_pilot, h_hat, x, block: int) -> np.ndarray:
    """Per-block sample covariance of pilot residuals.

    ``y_pilot``/``h_hat`` are [m][k]; returns [k][m][m] where every RE in a
    block of ``block`` consecutive REs shares the block's estimate.
    """
    u = np.asarray(y_pilot) - np.asarray(h_hat) * x
    m, k = u.shape
    out = np.empty((k, m, m), dtype=complex)
    for start in range(0, k, block):
        seg = u[:, start:start + block]
        out[start:start + block] = (seg @ seg.conj().T) / seg.shape[1]
    return out
