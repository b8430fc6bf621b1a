"""Downlink coded link: frame synthesis and the classical MRC / IRC receivers.

Every frame carries one LDPC codeword on one OFDM data symbol; a second
OFDM symbol carries dense pilots on the same ``k`` resource elements. The BS
precodes a single stream, so the UE sees an effective channel ``g[b][i]``
per receive antenna ``b`` (uniform precoding over the BS array keeps
``E|g|^2 = 1``). Neighbour-cell interference is frozen for the whole link:
the same interferer channels and symbols hit the pilot and the data symbol
of every frame, only its power is scaled to reach a target SINR.
``LinkConfig.interference_coherence`` below one mixes fresh interferer
symbols (same interferer channels) into the data-symbol interference.

Received signals, per UE antenna ``b`` and RE ``i``::

    pilot  y[b][i] = g[b][i] x[i] + I[b][i] + w
    data   r[b][i] = g[b][i] s[i] + I[b][i] + w'
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError
from ..phy import (QPSK_POINTS, CellScenario, InterferenceSet, PilotGrid, complex_noise,
                   make_interference, rayleigh_taps, taps_to_freq, zf_estimate)
from ..seeding import rng_for
from .combining import LOADING, smooth_channel
from .frames import block_errors
from .ldpc import LdpcCode, bp_decode, ldpc_encode
from .modem import (Interleaver, bits_per_symbol, bits_to_indices, constellation,
                    deinterleave, interleave, qam_soft_demod)


@dataclass(frozen=True)
class LinkConfig:
    # read by pydantic when configs are validated: unknown keys are errors
    __pydantic_config__ = {"extra": "forbid"}

    qam_order: int = 4
    n_code: int = 128
    k_info: int = 64
    code_seed: int = 7
    interleaver_seed: int = 11
    est_taps: int = 8
    irc_block: int = 8
    max_iter: int = 25
    min_sum_scale: float = 0.75
    ref_rho: float = 0.99
    interference_coherence: float = 1.0

    def __post_init__(self):
        bits_per_symbol(self.qam_order)
        if self.n_code % bits_per_symbol(self.qam_order):
            raise ConfigError("n_code must be divisible by log2(qam_order)")
        if not 0.0 <= self.ref_rho <= 1.0:
            raise ConfigError("ref_rho must lie in [0, 1]")
        if not 0.0 <= self.interference_coherence <= 1.0:
            raise ConfigError("interference_coherence must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DlBatch:
    """A batch of synthesized downlink frames (leading axis = frame)."""

    info: np.ndarray        # [F][k_info]
    codeword: np.ndarray    # [F][n_code]
    symbol_idx: np.ndarray  # [F][S]
    c_t: np.ndarray         # [F][S] transmitted constellation
    r: np.ndarray           # [F][n][S] received data symbols (C_I per antenna)
    y_pilot: np.ndarray     # [F][n][k]
    h_int_est: np.ndarray   # [F][1][n][k] ZF estimate of the effective channel
    h_ref: np.ndarray       # [F][1][n][k] earlier interference-free estimate
    g: np.ndarray           # [F][n][k] true effective channel
    sinr_db: np.ndarray     # [F]
    noise_var: float

    def __len__(self):
        return self.info.shape[0]


class DlLink:
    """Frozen link components: code, interleaver, pilots and interferers."""

    def __init__(self, scenario: CellScenario, cfg: LinkConfig = LinkConfig(),
                 seed: int | None = None):
        self.scenario = scenario
        self.cfg = cfg
        self.seed = scenario.seed if seed is None else seed
        self.code = LdpcCode.peg(cfg.n_code, cfg.k_info, seed=cfg.code_seed)
        self.interleaver = Interleaver.from_seed(cfg.n_code, cfg.interleaver_seed)
        self.n_sym = cfg.n_code // bits_per_symbol(cfg.qam_order)
        if self.n_sym > scenario.n_re:
            raise ConfigError(f"{self.n_sym} symbols do not fit in {scenario.n_re} REs")
        # one QPSK point repeated: keeps interference and channel separable in
        # the estimate domain (smooth channel, rough interference)
        self.pilot = PilotGrid(np.full(scenario.n_re, QPSK_POINTS[0]))
        # unit total power; scaled per frame to the requested SINR
        self.interference = make_interference(scenario, self.seed, n_rx=scenario.ue_ant,
                                              total_power=1.0)
        self._i_unit = self.interference.aggregate(scenario.ue_ant, scenario.n_re)

    @property
    def noise_var(self) -> float:
        return self.scenario.noise_var

    def interference_power(self, sinr_db) -> np.ndarray:
        p = 10.0 ** (-np.asarray(sinr_db, dtype=float) / 10.0) - self.noise_var
        if np.any(p < 0):
            raise ConfigError("requested SINR exceeds the scenario SNR")
        return p

    def interference_at(self, sinr_db: float) -> InterferenceSet:
        return self.interference.scaled(float(self.interference_power(sinr_db)))

    def effective_channel(self, taps: np.ndarray) -> np.ndarray:
        """[F][m][n][L] delay taps -> [F][n][k] precoded channel."""
        h = taps_to_freq(taps, self.scenario.n_re)
        return h.sum(axis=1) / np.sqrt(self.scenario.bs_ant)

    def channel_pair(self, rng, n_frames: int) -> tuple[np.ndarray, np.ndarray]:
        """Current effective channel and the one seen when the reference was taken.

        The reference channel precedes the current one by a Gauss-Markov step
        of correlation ``cfg.ref_rho``.
        """
        sc = self.scenario
        shape = (n_frames, sc.bs_ant, sc.ue_ant)
        old = rayleigh_taps(rng, shape, sc.n_taps, sc.decay_db)
        fresh = rayleigh_taps(rng, shape, sc.n_taps, sc.decay_db)
        rho = self.cfg.ref_rho
        now = rho * old + np.sqrt(1.0 - rho ** 2) * fresh
        return self.effective_channel(now), self.effective_channel(old)

    def fresh_interference(self, rng, n_frames: int) -> np.ndarray:
        """Unit-power interference with new QPSK symbols per frame, [F][n][k]."""
        out = 0.0
        for src in self.interference.sources:
            x = QPSK_POINTS[rng.integers(0, 4, size=(n_frames, 1, src.x_int.shape[-1]))]
            out = out + np.sqrt(src.power_scale) * src.h_int[None] * x
        return out

    def simulate(self, sinr_db, n_frames: int, seed: int) -> DlBatch:
        """Synthesize ``n_frames`` frames; ``sinr_db`` is a scalar or per-frame array."""
        sc, cfg = self.scenario, self.cfg
        sinr = np.broadcast_to(np.asarray(sinr_db, dtype=float), (n_frames,)).copy()
        amp = np.sqrt(self.interference_power(sinr))[:, None, None]
        rng_bits = rng_for(seed, "bits")
        info = rng_bits.integers(0, 2, size=(n_frames, cfg.k_info)).astype(np.uint8)
        cw = ldpc_encode(info, self.code)
        idx = bits_to_indices(interleave(cw, self.interleaver), cfg.qam_order)
        c_t = constellation(cfg.qam_order)[idx]
        g, g_ref = self.channel_pair(rng_for(seed, "channel"), n_frames)
        interf = amp * self._i_unit[None]
        n, k, s = sc.ue_ant, sc.n_re, self.n_sym
        alpha = cfg.interference_coherence
        i_data = interf[..., :s]
        if alpha < 1.0:
            fresh = self.fresh_interference(rng_for(seed, "interferer-data"), n_frames)
            i_data = alpha * i_data + np.sqrt(1.0 - alpha ** 2) * amp * fresh[..., :s]
        nrng = rng_for(seed, "noise")
        y_p = g * self.pilot.x + interf + complex_noise(nrng, (n_frames, n, k), self.noise_var)
        r = g[..., :s] * c_t[:, None, :] + i_data \
            + complex_noise(nrng, (n_frames, n, s), self.noise_var)
        y_ref = g_ref * self.pilot.x + complex_noise(rng_for(seed, "reference"),
                                                     (n_frames, n, k), self.noise_var)
        h_est = zf_estimate(y_p, self.pilot)[:, None]
        h_ref = zf_estimate(y_ref, self.pilot)[:, None]
        return DlBatch(info, cw, idx, c_t, r, y_p, h_est, h_ref, g, sinr, self.noise_var)

    # classical receivers -------------------------------------------------

    def channel_estimate(self, batch: DlBatch) -> np.ndarray:
        """Delay-domain smoothed ZF estimate of ``g``, [F][n][k]."""
        return smooth_channel(batch.h_int_est[:, 0], self.cfg.est_taps)

    def pilot_residual(self, batch: DlBatch, g_hat: np.ndarray) -> np.ndarray:
        return batch.y_pilot - g_hat * self.pilot.x

    def mrc_symbols(self, batch: DlBatch, g_hat: np.ndarray | None = None):
        """MRC output and its post-combining noise variance, both [F][S].

        Interference plus noise is treated as white: one variance per frame,
        measured from the pilot residuals.
        """
        g_hat = self.channel_estimate(batch) if g_hat is None else g_hat
        s = self.n_sym
        u = self.pilot_residual(batch, g_hat)
        sigma2 = np.mean(np.abs(u) ** 2, axis=(1, 2))[:, None]
        gs = g_hat[..., :s]
        gain = np.sum(np.abs(gs) ** 2, axis=1)
        z = np.sum(np.conj(gs) * batch.r, axis=1) / gain
        return z, sigma2 / gain

    def irc_symbols(self, batch: DlBatch, g_hat: np.ndarray | None = None):
        """IRC output with block-wise pilot-residual covariance, [F][S]."""
        g_hat = self.channel_estimate(batch) if g_hat is None else g_hat
        s, blk = self.n_sym, self.cfg.irc_block
        u = self.pilot_residual(batch, g_hat)
        f, n, k = u.shape
        cov = np.empty((f, k, n, n), dtype=complex)
        for start in range(0, k, blk):
            seg = u[:, :, start:start + blk]
            cov[:, start:start + blk] = (seg @ np.conj(np.swapaxes(seg, 1, 2)) / seg.shape[-1]
                                         )[:, None]
        cov = cov[:, :s]
        trace = np.real(np.trace(cov, axis1=-2, axis2=-1))
        cov = cov + (LOADING * trace / n)[..., None, None] * np.eye(n)
        h = np.moveaxis(g_hat[..., :s], 1, -1)[..., None]        # [F][S][n][1]
        w = np.linalg.solve(cov, h)[..., 0]                      # [F][S][n]
        den = np.real(np.sum(np.conj(w) * h[..., 0], axis=-1))   # h^H R^-1 h
        y = np.moveaxis(batch.r, 1, -1)
        z = np.sum(np.conj(w) * y, axis=-1) / den
        return z, 1.0 / den

    def decode(self, llr_interleaved: np.ndarray, batch: DlBatch) -> np.ndarray:
        """Deinterleave, min-sum decode and return per-frame block-error flags."""
        llr = deinterleave(llr_interleaved, self.interleaver)
        res = bp_decode(llr, self.code, self.cfg.max_iter, self.cfg.min_sum_scale)
        return block_errors(res.bits[:, :self.code.k_info], batch.info, res.converged)

    def classical_errors(self, batch: DlBatch, receiver: str) -> np.ndarray:
        if receiver == "mrc":
            z, nv = self.mrc_symbols(batch)
        elif receiver == "irc":
            z, nv = self.irc_symbols(batch)
        else:
            raise ConfigError(f"unknown classical receiver {receiver!r}")
        llr = qam_soft_demod(z, nv, self.cfg.qam_order)
        return self.decode(llr, batch)
