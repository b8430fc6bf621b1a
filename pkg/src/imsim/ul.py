"""Uplink channel-estimate denoising.

The modular network treats every (BS antenna, UE antenna) row of an
interfered estimate as an independent sequence over resource elements:

    [m, n, k] complex --preprocess--> [m*n, k, 2]
    conv(2->16->32->32, width 2)  ->  LSTM over k  ->  dense 64->32->2

The LSTM runs in both directions over the RE axis (32 units each, 64
concatenated) since frequency has no causal order; ``bidirectional=False``
gives a single 64-unit pass.

The monolithic baseline replaces everything with a plain stack of six
width-2 convolutions (16 ... 512 channels) and a linear output convolution.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .nn import BiLstm, Conv1d, Lstm, Module, conv_stack, mlp, mse_loss
from .phy import EstimatePair, nmse, stack_estimates
from .records import MetricsRecord, config_hash
from .seeding import rng_for
from .training import TrainConfig, run_epochs, split_indices

EVAL_CHUNK_ROWS = 2048
EVAL_COLUMNS = ("config", "m", "n", "k", "sir_db", "snr_db", "seed", "nmse_raw", "nmse_rec")


def preprocess(h_i) -> np.ndarray:
    """[m][n][k] complex -> [m*n][k][2] real, antenna pairs as batch rows."""
    h_i = np.asarray(h_i)
    if h_i.ndim != 3:
        raise ConfigError(f"expected [m][n][k], got {h_i.shape}")
    m, n, k = h_i.shape
    flat = h_i.reshape(m * n, k)
    return np.stack([flat.real, flat.imag], axis=-1)


def postprocess(t: np.ndarray, m: int, n: int) -> np.ndarray:
    """Inverse of :func:`preprocess`."""
    if t.shape[0] != m * n or t.shape[-1] != 2:
        raise ConfigError(f"cannot map {t.shape} back onto ({m}, {n}, k)")
    return (t[..., 0] + 1j * t[..., 1]).reshape(m, n, -1)


def _width(base: int, sf: float) -> int:
    return max(1, int(round(base * sf)))


class UlNetwork(Module):
    def __init__(self, scale_factor: float = 1.0, seed: int = 0,
                 conv_widths=(16, 32, 32), hidden: int = 64, recovery_width: int = 32,
                 bidirectional: bool = True):
        super().__init__()
        rng = rng_for(seed, "init")
        cw = [2] + [_width(c, scale_factor) for c in conv_widths]
        hd = _width(hidden, scale_factor)
        rw = _width(recovery_width, scale_factor)
        self.arch = {"kind": "ul", "scale_factor": scale_factor, "seed": seed,
                     "conv_widths": list(conv_widths), "hidden": hidden,
                     "recovery_width": recovery_width, "bidirectional": bidirectional}
        self.extractor = conv_stack(cw, rng)
        if bidirectional:
            hd = 2 * max(1, hd // 2)
            self.refiner = BiLstm(cw[-1], hd // 2, rng)
        else:
            self.refiner = Lstm(cw[-1], hd, rng)
        self.recovery = mlp([hd, rw, 2], rng)

    def children(self):
        return [("extractor", self.extractor), ("refiner", self.refiner),
                ("recovery", self.recovery)]

    def forward(self, x):
        return self.recovery.forward(self.refiner.forward(self.extractor.forward(x)))

    def backward(self, dy):
        return self.extractor.backward(self.refiner.backward(self.recovery.backward(dy)))


class MonolithicNetwork(Module):
    def __init__(self, channels=(16, 32, 64, 128, 256, 512), seed: int = 0,
                 scale_factor: float = 1.0):
        super().__init__()
        rng = rng_for(seed, "init")
        widths = [2] + [_width(c, scale_factor) for c in channels]
        self.arch = {"kind": "monolithic", "channels": list(channels), "seed": seed,
                     "scale_factor": scale_factor}
        self.features = conv_stack(widths, rng)
        self.head = Conv1d(widths[-1], 2, rng)

    def children(self):
        return [("features", self.features), ("head", self.head)]

    def forward(self, x):
        return self.head.forward(self.features.forward(x))

    def backward(self, dy):
        return self.features.backward(self.head.backward(dy))


def build_network(arch: dict) -> Module:
    kind = arch.get("kind")
    if kind == "ul":
        return UlNetwork(arch["scale_factor"], arch["seed"], tuple(arch["conv_widths"]),
                         arch["hidden"], arch["recovery_width"],
                         arch.get("bidirectional", True))
    if kind == "monolithic":
        return MonolithicNetwork(tuple(arch["channels"]), arch["seed"],
                                 arch.get("scale_factor", 1.0))
    raise ConfigError(f"unknown UL architecture {kind!r}")


def predict_rows(net: Module, rows: np.ndarray) -> np.ndarray:
    out = [net.forward(rows[s:s + EVAL_CHUNK_ROWS])
           for s in range(0, rows.shape[0], EVAL_CHUNK_ROWS)]
    return np.concatenate(out, axis=0)


def ul_forward(net: Module, h_i) -> np.ndarray:
    h_i = np.asarray(h_i)
    if h_i.ndim != 3:
        raise ConfigError(f"expected [m][n][k], got {h_i.shape}")
    m, n, _ = h_i.shape
    return postprocess(predict_rows(net, preprocess(h_i)), m, n)


def _rows(stack: np.ndarray) -> np.ndarray:
    """[F][m][n][k] complex -> [F][m*n][k][2]."""
    f, m, n, k = stack.shape
    flat = stack.reshape(f, m * n, k)
    return np.stack([flat.real, flat.imag], axis=-1)


def frame_nmse(rec: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-frame NMSE over [F][...] arrays."""
    axes = tuple(range(1, truth.ndim))
    return np.sum(np.abs(rec - truth) ** 2, axis=axes) / np.sum(np.abs(truth) ** 2, axis=axes)


@dataclass
class UlTrainResult:
    net: Module
    learning_curve: list[float]
    train_loss: list[float]
    train_idx: np.ndarray
    test_idx: np.ndarray
    heldout_nmse_raw: float
    heldout_nmse_rec: float
    wall_clock_s: float
    extra: dict = field(default_factory=dict)

    @property
    def reduction(self) -> float:
        return 1.0 - self.heldout_nmse_rec / self.heldout_nmse_raw


def _fit(net: Module, dataset: Sequence[EstimatePair], cfg: TrainConfig,
         log=None) -> UlTrainResult:
    if len(dataset) == 0:
        raise ConfigError("training dataset is empty")
    t0 = time.perf_counter()
    arrays = stack_estimates(dataset)
    m, n = arrays["h_true"].shape[1:3]
    inputs = _rows(arrays["h_int"])
    labels = _rows(arrays["h_true"] if cfg.oracle_labels else arrays["h_clean"])
    train_idx, test_idx = split_indices(len(dataset), cfg.holdout, cfg.seed)
    x_tr, y_tr = inputs[train_idx], labels[train_idx]
    x_te = inputs[test_idx].reshape(-1, *inputs.shape[2:])
    truth_te = arrays["h_true"][test_idx]
    raw = float(np.mean(frame_nmse(arrays["h_int"][test_idx], truth_te)))

    def heldout():
        out = predict_rows(net, x_te).reshape(len(test_idx), m * n, -1, 2)
        rec = (out[..., 0] + 1j * out[..., 1]).reshape(truth_te.shape)
        return float(np.mean(frame_nmse(rec, truth_te)))

    def step(idx):
        x = x_tr[idx].reshape(-1, *x_tr.shape[2:])
        y = y_tr[idx].reshape(-1, *y_tr.shape[2:])
        loss, grad = mse_loss(net.forward(x), y)
        net.backward(grad)
        return loss

    curve: list[float] = []

    def on_epoch(epoch):
        curve.append(heldout())
        if log is not None:
            log(f"epoch {epoch + 1}/{cfg.epochs} heldout_nmse={curve[-1]:.5f} raw={raw:.5f}")

    losses = run_epochs(net, len(train_idx), cfg, step, on_epoch)
    return UlTrainResult(net, curve, losses, train_idx, test_idx, raw, curve[-1],
                         time.perf_counter() - t0)


def train_ul(dataset: Sequence[EstimatePair], cfg: TrainConfig = TrainConfig(),
             log=None) -> UlTrainResult:
    """Train the modular network with an MSE loss on (real, imag) parts.

    Labels are the clean ZF estimates unless ``cfg.oracle_labels`` selects the
    true channel. The learning curve is the held-out NMSE against the true
    channel after every epoch.
    """
    return _fit(UlNetwork(cfg.scale_factor, cfg.seed), dataset, cfg, log)


def train_monolithic_baseline(dataset: Sequence[EstimatePair],
                              cfg: TrainConfig = TrainConfig(), log=None) -> UlTrainResult:
    return _fit(MonolithicNetwork(seed=cfg.seed, scale_factor=cfg.scale_factor),
                dataset, cfg, log)


def evaluate_ul(net, dataset: Sequence[EstimatePair], experiment_id: str = "eval-ul",
                cfg_hash: str = "", seed: int = 0, label: str = "") -> list[MetricsRecord]:
    """Per-frame NMSE (raw and mitigated) plus aggregate mean/std records.

    ``net`` may be a module or any callable mapping [m][n][k] -> [m][n][k].
    Per-frame records carry the frame index as ``x_value``; aggregates use -1.
    """
    if len(dataset) == 0:
        raise ConfigError("evaluation dataset is empty")
    fwd = (lambda h: ul_forward(net, h)) if isinstance(net, Module) else net
    cfg_hash = cfg_hash or config_hash({"frames": len(dataset), "seed": seed})
    recs, raw_v, rec_v = [], [], []
    for j, pair in enumerate(dataset):
        rec = fwd(pair.h_int_est)
        raw_v.append(nmse(pair.h_int_est, pair.h_true.h))
        rec_v.append(nmse(rec, pair.h_true.h))
        for name, v in (("nmse_raw", raw_v[-1]), ("nmse_rec", rec_v[-1])):
            recs.append(MetricsRecord(experiment_id, cfg_hash, seed, name, float(j), v, 1,
                                      0.0, label))
    for name, vals in (("nmse_raw", raw_v), ("nmse_rec", rec_v)):
        recs.append(MetricsRecord(experiment_id, cfg_hash, seed, f"{name}_mean", -1.0,
                                  float(np.mean(vals)), len(vals), 0.0, label))
        recs.append(MetricsRecord(experiment_id, cfg_hash, seed, f"{name}_std", -1.0,
                                  float(np.std(vals)), len(vals), 0.0, label))
    return recs


def eval_rows(records: Sequence[MetricsRecord], scenario, config: str) -> list[dict]:
    """Per-frame CSV rows (:data:`EVAL_COLUMNS`) from :func:`evaluate_ul` records."""
    by_frame: dict[int, dict] = {}
    for r in records:
        if r.x_value >= 0 and r.metric_name in ("nmse_raw", "nmse_rec"):
            by_frame.setdefault(int(r.x_value), {"seed": r.seed})[r.metric_name] = r.y_value
    m, n, k = scenario.shape
    return [{"config": config, "m": m, "n": n, "k": k, "sir_db": scenario.carrier_sir_db,
             "snr_db": scenario.snr_db, **by_frame[j]} for j in sorted(by_frame)]
