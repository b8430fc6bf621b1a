"""Link-level signal synthesis: channels, pilots, interference and ZF estimates.

Channel model
-------------
Each (BS antenna, UE antenna) pair gets an ``L``-tap Rayleigh tapped-delay
line whose tap powers decay exponentially (``decay_db`` per tap) and sum to
one. The frequency response on ``k`` tones is the ``k``-point DFT of the tap
vector, so ``E[sum |tap|^2] = E[|h[i]|^2] = 1``.

Received pilot model
--------------------
``y = h * x + sum_s sqrt(p_s) * h_s * x_s + n0`` per resource element, where
``h_s``/``x_s`` are the channel and symbols of interferer ``s`` and ``n0`` is
circular complex Gaussian noise. The ZF estimate is ``y / x``.

Interference is drawn once per dataset and frozen; channels and noise are
fresh for every frame.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, MetricError
from .seeding import rng_for

QPSK_POINTS = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)
DATASET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CellScenario:
    # read by pydantic when configs are validated: unknown keys are errors
    __pydantic_config__ = {"extra": "forbid"}

    n_cells: int = 7
    ues_per_cell: int = 16
    bs_ant: int = 8
    ue_ant: int = 2
    n_re: int = 64
    carrier_sir_db: float = 5.0
    snr_db: float = 15.0
    reuse_factor: int = 1
    seed: int = 0
    n_taps: int = 4
    decay_db: float = 3.0
    shadowing_db: float = 6.0
    # correlation of the clean-estimate channel with the interfered-estimate
    # channel; None stores both estimates from the same realization
    stale_rho: float | None = None

    def __post_init__(self):
        if self.bs_ant < 1 or self.ue_ant < 1:
            raise ConfigError("bs_ant and ue_ant must be >= 1")
        if self.n_re < 2:
            raise ConfigError("n_re must be >= 2")
        if self.n_cells < 1 or self.ues_per_cell < 1:
            raise ConfigError("n_cells and ues_per_cell must be >= 1")
        if self.reuse_factor != 1:
            raise ConfigError("only reuse_factor = 1 is supported")
        if not 1 <= self.n_taps <= self.n_re:
            raise ConfigError("n_taps must lie in [1, n_re]")
        if self.shadowing_db < 0:
            raise ConfigError("shadowing_db must be >= 0")
        if self.stale_rho is not None and not 0.0 <= self.stale_rho <= 1.0:
            raise ConfigError("stale_rho must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.bs_ant, self.ue_ant, self.n_re)

    @property
    def noise_var(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def interference_power(self) -> float:
        return 10.0 ** (-self.carrier_sir_db / 10.0)

    @property
    def sinr_db(self) -> float:
        return -10.0 * np.log10(self.noise_var + self.interference_power)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    delay_taps: np.ndarray

    @property
    def shape(self) -> tuple[int, ...]:
        return self.h.shape


class PilotGrid:
    """Known unit-modulus pilot symbols, one per resource element."""

    def __init__(self, x):
        x = np.asarray(x, dtype=complex).reshape(-1)
        if np.any(np.abs(x) == 0):
            raise ConfigError("pilot symbols must be non-zero")
        if not np.allclose(np.abs(x), 1.0):
            raise ConfigError("pilot symbols must have unit modulus")
        self.x = x
        self.x.setflags(write=False)

    def __len__(self):
        return self.x.size

    @classmethod
    def qpsk(cls, n_re: int, seed: int) -> "PilotGrid":
        idx = rng_for(seed, "pilot").integers(0, 4, size=n_re)
        return cls(QPSK_POINTS[idx])


@dataclass(frozen=True)
class InterferenceSource:
    h_int: np.ndarray  # [n_rx][k]
    x_int: np.ndarray  # [k]
    power_scale: float  # linear power gain; amplitude is its square root

    def __post_init__(self):
        if self.power_scale < 0:
            raise ConfigError("power_scale must be >= 0")
        if self.h_int.shape[-1] != self.x_int.shape[-1]:
            raise ConfigError("h_int and x_int disagree on the RE count")

    def signal(self) -> np.ndarray:
        return np.sqrt(self.power_scale) * self.h_int * self.x_int


@dataclass(frozen=True)
class InterferenceSet:
    sources: tuple[InterferenceSource, ...] = ()

    def __len__(self):
        return len(self.sources)

    def aggregate(self, n_rx: int, n_re: int) -> np.ndarray:
        """Sum of all interferer signals, shape [n_rx][n_re]."""
        total = np.zeros((n_rx, n_re), dtype=complex)
        for src in self.sources:
            if src.h_int.shape != (n_rx, n_re):
                raise ConfigError(
                    f"interferer channel shape {src.h_int.shape} != {(n_rx, n_re)}")
            total += src.signal()
        return total

    def scaled(self, factor: float) -> "InterferenceSet":
        return InterferenceSet(tuple(
            InterferenceSource(s.h_int, s.x_int, s.power_scale * factor)
            for s in self.sources))

    @property
    def total_power(self) -> float:
        return float(sum(s.power_scale for s in self.sources))


@dataclass(frozen=True)
class EstimatePair:
    h_true: ChannelRealization
    h_clean_est: np.ndarray
    h_int_est: np.ndarray
    sinr_db: float
    seed: int

    def __post_init__(self):
        shape = self.h_true.h.shape
        if self.h_clean_est.shape != shape or self.h_int_est.shape != shape:
            raise ConfigError("EstimatePair arrays must share one shape")


def tap_powers(n_taps: int, decay_db: float) -> np.ndarray:
    p = 10.0 ** (-decay_db * np.arange(n_taps) / 10.0)
    return p / p.sum()


def rayleigh_taps(rng: np.random.Generator, shape: Sequence[int], n_taps: int,
                  decay_db: float) -> np.ndarray:
    p = tap_powers(n_taps, decay_db)
    g = rng.standard_normal((*shape, n_taps, 2))
    return np.sqrt(p / 2.0) * (g[..., 0] + 1j * g[..., 1])


def taps_to_freq(taps: np.ndarray, n_re: int) -> np.ndarray:
    return np.fft.fft(taps, n=n_re, axis=-1)


def gen_channel(scenario: CellScenario, seed: int) -> ChannelRealization:
    """Draw one [m][n][k] frequency response."""
    rng = rng_for(seed, "channel")
    taps = rayleigh_taps(rng, (scenario.bs_ant, scenario.ue_ant),
                         scenario.n_taps, scenario.decay_db)
    return ChannelRealization(taps_to_freq(taps, scenario.n_re), taps)


def perturb_channel(ch: ChannelRealization, rho: float, rng: np.random.Generator,
                    decay_db: float) -> ChannelRealization:
    """First-order Gauss-Markov step: rho * h + sqrt(1 - rho^2) * h_new."""
    shape = ch.delay_taps.shape
    fresh = rayleigh_taps(rng, shape[:-1], shape[-1], decay_db)
    taps = rho * ch.delay_taps + np.sqrt(1.0 - rho**2) * fresh
    return ChannelRealization(taps_to_freq(taps, ch.h.shape[-1]), taps)


def complex_noise(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    g = rng.standard_normal((*shape, 2))
    return np.sqrt(var / 2.0) * (g[..., 0] + 1j * g[..., 1])


def make_interference(scenario: CellScenario, seed: int, n_rx: int | None = None,
                      total_power: float | None = None) -> InterferenceSet:
    """One aggregate interferer per neighbour cell.

    Each interferer has its own tapped-delay channel to the ``n_rx`` receive
    antennas and a random QPSK stream. Per-cell powers carry log-normal
    shadowing and are rescaled so their sum equals ``total_power`` (the
    scenario's interference power by default).
    """
    n_rx = scenario.bs_ant if n_rx is None else n_rx
    total = scenario.interference_power if total_power is None else total_power
    n_src = scenario.n_cells - 1
    if n_src == 0 or total == 0:
        return InterferenceSet()
    rng = rng_for(seed, "interference")
    shadow = 10.0 ** (scenario.shadowing_db * rng.standard_normal(n_src) / 10.0)
    powers = total * shadow / shadow.sum()
    sources = []
    for p in powers:
        taps = rayleigh_taps(rng, (n_rx,), scenario.n_taps, scenario.decay_db)
        x_int = QPSK_POINTS[rng.integers(0, 4, size=scenario.n_re)]
        sources.append(InterferenceSource(taps_to_freq(taps, scenario.n_re),
                                          x_int, float(p)))
    return InterferenceSet(tuple(sources))


def synth_received_pilot(h, x: PilotGrid, ints: InterferenceSet, noise_var: float,
                         seed: int) -> np.ndarray:
    """Received pilot grid [m][n][k].

    The interference seen by BS antenna ``a`` is added to every UE-antenna
    estimate on that antenna.
    """
    h = h.h if isinstance(h, ChannelRealization) else np.asarray(h, dtype=complex)
    if h.ndim != 3:
        raise ConfigError(f"channel must be [m][n][k], got shape {h.shape}")
    m, n, k = h.shape
    if len(x) != k:
        raise ConfigError(f"pilot length {len(x)} != {k} resource elements")
    y = h * x.x
    if len(ints):
        y = y + ints.aggregate(m, k)[:, None, :]
    if noise_var > 0:
        y = y + complex_noise(rng_for(seed, "noise"), (m, n, k), noise_var)
    return y


def zf_estimate(y, x: PilotGrid) -> np.ndarray:
    y = np.asarray(y, dtype=complex)
    if y.shape[-1] != len(x):
        raise ConfigError(f"pilot length {len(x)} != {y.shape[-1]}")
    return y / x.x


def nmse(h_est, h_true) -> float:
    h_est = np.asarray(h_est)
    h_true = np.asarray(h_true)
    if h_est.shape != h_true.shape:
        raise ConfigError(f"shape mismatch {h_est.shape} vs {h_true.shape}")
    energy = float(np.sum(np.abs(h_true) ** 2))
    if energy == 0.0:
        raise MetricError("NMSE undefined for a zero-energy reference")
    return float(np.sum(np.abs(h_est - h_true) ** 2)) / energy


def make_frame(scenario: CellScenario, x: PilotGrid, ints: InterferenceSet,
               seed: int, index: int) -> EstimatePair:
    """One dataset record; all randomness keyed on (seed, index)."""
    ch = gen_channel(scenario, _frame_seed(seed, "channel", index))
    nv = scenario.noise_var
    ch_clean = ch
    if scenario.stale_rho is not None:
        ch_clean = perturb_channel(ch, scenario.stale_rho,
                                   rng_for(seed, "stale", index), scenario.decay_db)
    y_clean = synth_received_pilot(ch_clean, x, InterferenceSet(), nv,
                                   _frame_seed(seed, "noise-clean", index))
    y_int = synth_received_pilot(ch, x, ints, nv,
                                 _frame_seed(seed, "noise-int", index))
    sinr = -10.0 * np.log10(nv + ints.total_power) if nv + ints.total_power > 0 \
        else float("inf")
    return EstimatePair(ch, zf_estimate(y_clean, x), zf_estimate(y_int, x),
                        float(sinr), int(seed))


def _frame_seed(seed: int, purpose: str, index: int) -> int:
    return int(rng_for(seed, purpose, index).integers(0, 2**63 - 1))


def dataset_components(scenario: CellScenario, interference_on: bool, seed: int,
                       n_rx: int | None = None) -> tuple[PilotGrid, InterferenceSet]:
    x = PilotGrid.qpsk(scenario.n_re, seed)
    ints = make_interference(scenario, seed, n_rx) if interference_on \
        else InterferenceSet()
    return x, ints


def make_dataset(scenario: CellScenario, n_frames: int, interference_on: bool = True,
                 seed: int | None = None) -> list[EstimatePair]:
    """Paired clean / interfered ZF estimates over ``n_frames`` fresh channels.

    The pilot grid and the interference set are drawn once from ``seed`` and
    reused for every frame.
    """
    if n_frames < 1:
        raise ConfigError("n_frames must be >= 1")
    seed = scenario.seed if seed is None else seed
    x, ints = dataset_components(scenario, interference_on, seed)
    return [make_frame(scenario, x, ints, seed, j) for j in range(n_frames)]


def stack_estimates(pairs: Sequence[EstimatePair]) -> dict[str, np.ndarray]:
    return {
        "h_true": np.stack([p.h_true.h for p in pairs]),
        "h_clean": np.stack([p.h_clean_est for p in pairs]),
        "h_int": np.stack([p.h_int_est for p in pairs]),
    }


def save_dataset(path, pairs: Sequence[EstimatePair], scenario: CellScenario) -> None:
    """Write an ``.npz`` record stream; layout documented in docs/formats.md."""
    if not pairs:
        raise ConfigError("refusing to write an empty dataset")
    m, n, k = pairs[0].h_true.h.shape
    header = {"format_version": DATASET_FORMAT_VERSION, "m": m, "n": n, "k": k,
              "scenario_hash": scenario.digest(), "scenario": scenario.to_dict()}
    arrays = stack_estimates(pairs)
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)),
                 taps=np.stack([p.h_true.delay_taps for p in pairs]),
                 sinr_db=np.array([p.sinr_db for p in pairs]),
                 seed=np.array([p.seed for p in pairs], dtype=np.int64),
                 **arrays)


def load_dataset(path) -> tuple[dict, list[EstimatePair]]:
    path = Path(path)
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format_version") != DATASET_FORMAT_VERSION:
            raise ConfigError(f"unsupported dataset version {header.get('format_version')}")
        pairs = [
            EstimatePair(ChannelRealization(ht, tp), hc, hi, float(s), int(sd))
            for ht, tp, hc, hi, s, sd in zip(z["h_true"], z["taps"], z["h_clean"],
                                             z["h_int"], z["sinr_db"], z["seed"])
        ]
    return header, pairs
