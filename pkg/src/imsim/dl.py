"""Downlink interference mitigation on combined symbols.

The UE combines its receive antennas with MRC (weights from the smoothed
interfered estimate) and hands the network three sequences over the RE axis:

    c   combined data symbol                 v^H r
    a   combined interfered channel estimate v^H h_i    (about 1 + interference)
    b   combined reference estimate          v^H h_ref  (about 1)

with ``v = g_hat / |g_hat|^2``. The network mirrors the estimate-then-remove
structure::

    i_est = fusion(extractor_int(a) - extractor_clean(b))     [k][W]
    f_rec = const_embed(c) - i_est                            [S][W]
    logits = classifier(corrector(f_rec))                     [S][Q]

Symbol ``j`` of a codeword sits on RE ``j``, so ``i_est`` is taken per RE
rather than once per frame: interference after combining changes from RE to
RE with the channel and cannot be removed by a single vector.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from .errors import ConfigError, StateError
from .nn import Dense, Lstm, Module, conv_stack, cross_entropy_loss
from .records import MetricsRecord, config_hash
from .seeding import rng_for, subseed
from .training import TrainConfig, run_epochs, split_indices
from .txrx.combining import smooth_channel
from .txrx.link import DlBatch, DlLink
from .txrx.modem import constellation, metric_to_llr, qam_soft_demod

RECEIVERS = ("nn", "mrc", "irc")
BLER_COLUMNS = ("receiver", "sinr_db", "n_frames", "n_block_errors", "bler", "seed",
                "config_hash")
IN_CHANNELS = 6
EVAL_CHUNK_FRAMES = 500


def _width(base: int, sf: float) -> int:
    return max(1, int(round(base * sf)))


class DlNetwork(Module):
    """Dual extractors, fusion, constellation embedding, LSTM corrector, classifier.

    ``forward`` takes the packed input ``[B][k][6]`` built by :func:`pack_inputs`
    and returns class logits ``[B][k][Q]``; positions past the codeword's
    symbols are padding and should be ignored by the caller.
    """

    def __init__(self, qam_order: int = 4, scale_factor: float = 1.0, seed: int = 0,
                 extractor_widths=(16, 32), hidden: int = 64):
        super().__init__()
        rng = rng_for(seed, "init")
        ew = [2] + [_width(c, scale_factor) for c in extractor_widths]
        width, hd = ew[-1], _width(hidden, scale_factor)
        self.qam_order = qam_order
        self.feature_width = width
        self.arch = {"kind": "dl", "qam_order": qam_order, "scale_factor": scale_factor,
                     "seed": seed, "extractor_widths": list(extractor_widths),
                     "hidden": hidden}
        self.extractor_clean = conv_stack(ew, rng)
        self.extractor_int = conv_stack(ew, rng)
        self.fusion = Dense(width, width, rng)
        self.const_embed = Dense(2, width, rng)
        self.corrector = Lstm(width, hd, rng)
        self.classifier = Dense(hd, qam_order, rng)

    def children(self):
        return [("extractor_clean", self.extractor_clean),
                ("extractor_int", self.extractor_int), ("fusion", self.fusion),
                ("const_embed", self.const_embed), ("corrector", self.corrector),
                ("classifier", self.classifier)]

    def interference(self, a, b):
        return self.fusion.forward(self.extractor_int.forward(a)
                                   - self.extractor_clean.forward(b))

    def forward(self, x):
        if x.ndim != 3 or x.shape[-1] != IN_CHANNELS:
            raise ConfigError(f"DlNetwork expects [B, k, {IN_CHANNELS}], got {x.shape}")
        i_est = self.interference(x[..., 0:2], x[..., 2:4])
        f_rec = self.const_embed.forward(x[..., 4:6]) - i_est
        return self.classifier.forward(self.corrector.forward(f_rec))

    def backward(self, dy):
        d_rec = self.corrector.backward(self.classifier.backward(dy))
        d_c = self.const_embed.backward(d_rec)
        d_diff = self.fusion.backward(-d_rec)
        d_a = self.extractor_int.backward(d_diff)
        d_b = self.extractor_clean.backward(-d_diff)
        return np.concatenate([d_a, d_b, d_c], axis=-1)


def build_dl_network(arch: dict) -> DlNetwork:
    if arch.get("kind") != "dl":
        raise ConfigError(f"not a downlink architecture: {arch.get('kind')!r}")
    return DlNetwork(arch["qam_order"], arch["scale_factor"], arch["seed"],
                     tuple(arch["extractor_widths"]), arch["hidden"])


class ReferenceStore:
    """Interference-free estimates collected earlier for the same UE."""

    POLICIES = ("most_recent", "mean")

    def __init__(self, clean_estimates=(), selection_policy: str = "most_recent"):
        if selection_policy not in self.POLICIES:
            raise ConfigError(f"selection_policy must be one of {self.POLICIES}")
        self.selection_policy = selection_policy
        self.clean_estimates: list[np.ndarray] = []
        for h in clean_estimates:
            self.push(h)

    def __len__(self):
        return len(self.clean_estimates)

    def push(self, h) -> None:
        h = np.asarray(h, dtype=complex)
        if self.clean_estimates and h.shape != self.clean_estimates[0].shape:
            raise ConfigError(f"reference shape {h.shape} != {self.clean_estimates[0].shape}")
        self.clean_estimates.append(h)

    def select(self) -> np.ndarray:
        if not self.clean_estimates:
            raise StateError("reference store is empty")
        if self.selection_policy == "most_recent":
            return self.clean_estimates[-1]
        return np.mean(self.clean_estimates, axis=0)


@dataclass
class InterferenceFeature:
    i_est: np.ndarray  # [k][W]

    def __post_init__(self):
        if not np.all(np.isfinite(self.i_est)):
            raise ConfigError("non-finite interference feature")


@dataclass
class ConstellationOutput:
    logits: np.ndarray  # [..., S, Q]
    llr: np.ndarray     # [..., S * log2 Q], positive favours bit 0


def combine_estimates(h_i, h_ref, est_taps: int):
    """MRC-project interfered and reference estimates onto the smoothed channel.

    ``h_i``/``h_ref`` are ``[..., n, k]`` (a leading BS axis of size one is
    accepted). Returns the combined estimates ``(a, b)`` and the combining gain
    ``|g_hat|^2``, each ``[..., k]``, plus ``g_hat``.
    """
    h_i, h_ref = np.asarray(h_i), np.asarray(h_ref)
    if h_i.shape != h_ref.shape:
        raise ConfigError(f"estimate shapes differ: {h_i.shape} vs {h_ref.shape}")
    if h_i.ndim >= 3 and h_i.shape[-3] == 1:
        h_i, h_ref = h_i[..., 0, :, :], h_ref[..., 0, :, :]
    g_hat = smooth_channel(h_i, est_taps)
    gain = np.sum(np.abs(g_hat) ** 2, axis=-2)
    a = np.sum(np.conj(g_hat) * h_i, axis=-2) / gain
    b = np.sum(np.conj(g_hat) * h_ref, axis=-2) / gain
    return a, b, gain, g_hat


def _ri(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=-1)


def pack_inputs(a, b, c) -> np.ndarray:
    """Combined estimates ``[..., k]`` and symbols ``[..., S]`` -> ``[..., k, 6]``.

    The pilot is divided out of the estimates already; symbols past ``S`` are
    zero padding.
    """
    a, b, c = np.asarray(a), np.asarray(b), np.asarray(c)
    k, s = a.shape[-1], c.shape[-1]
    if s > k:
        raise ConfigError(f"{s} symbols do not fit on {k} REs")
    pad = np.zeros((*c.shape[:-1], k), dtype=complex)
    pad[..., :s] = c
    return np.concatenate([_ri(a), _ri(b), _ri(pad)], axis=-1)


# single-frame operations -----------------------------------------------------

def estimate_interference(net: DlNetwork, h_i, ref: ReferenceStore,
                          est_taps: int = 8) -> InterferenceFeature:
    """Feature-space interference estimate for one frame, ``[k][W]``."""
    h_ref = ref.select()
    a, b, _, _ = combine_estimates(h_i, h_ref, est_taps)
    i_est = net.interference(_ri(a)[None], _ri(b)[None])[0]
    return InterferenceFeature(i_est)


def mitigate_symbols(net: DlNetwork, c_i, i_est) -> np.ndarray:
    """``corrector(const_embed(c_i) - i_est)`` for one frame, ``[S][hidden]``.

    ``i_est`` may be an :class:`InterferenceFeature`, a per-RE array
    ``[>=S][W]`` or a single ``[W]`` vector broadcast over the symbols.
    """
    c_i = np.asarray(c_i)
    if c_i.ndim != 1:
        raise ConfigError(f"expected [S] symbols, got {c_i.shape}")
    s = c_i.shape[0]
    feat = i_est.i_est if isinstance(i_est, InterferenceFeature) else np.asarray(i_est)
    if feat.shape[-1] != net.feature_width:
        raise ConfigError(f"feature width {feat.shape[-1]} != {net.feature_width}")
    if feat.ndim == 2:
        if feat.shape[0] < s:
            raise ConfigError(f"{feat.shape[0]} interference rows for {s} symbols")
        feat = feat[:s]
    f_rec = net.const_embed.forward(_ri(c_i)[None]) - feat
    return net.corrector.forward(f_rec)[0]


def classify_constellation(net: DlNetwork, features, reliability=None) -> ConstellationOutput:
    """Class logits and max-log bit LLRs; ``reliability`` [S] scales the LLRs."""
    logits = net.classifier.forward(np.asarray(features))
    llr = logits_to_llr(logits, net.qam_order, reliability)
    return ConstellationOutput(logits, llr)


def logits_to_llr(logits, order: int, reliability=None) -> np.ndarray:
    """Max-log marginalisation of class scores over the Gray bit labels."""
    logits = np.asarray(logits)
    if reliability is not None:
        logits = logits * np.asarray(reliability)[..., None]
    return metric_to_llr(logits, order, max_log=True)


# batched link path -------------------------------------------------------------

@dataclass
class NnInputs:
    x: np.ndarray       # [F][k][6]
    gain: np.ndarray    # [F][S] combining gain, used as symbol reliability


def link_inputs(link: DlLink, batch: DlBatch) -> NnInputs:
    """Network inputs for every frame of a batch.

    Each frame's reference store holds the single earlier clean estimate of
    its own UE, so ``most_recent`` selection is the batch's ``h_ref``.
    """
    s = link.n_sym
    a, b, gain, g_hat = combine_estimates(batch.h_int_est, batch.h_ref, link.cfg.est_taps)
    c = np.sum(np.conj(g_hat[..., :s]) * batch.r, axis=-2) / gain[..., :s]
    return NnInputs(pack_inputs(a, b, c), gain[..., :s])


def predict_logits(net: DlNetwork, x: np.ndarray, n_sym: int) -> np.ndarray:
    out = [net.forward(x[s:s + EVAL_CHUNK_FRAMES])[:, :n_sym]
           for s in range(0, x.shape[0], EVAL_CHUNK_FRAMES)]
    return np.concatenate(out, axis=0)


def nn_llrs(net: DlNetwork, link: DlLink, batch: DlBatch) -> np.ndarray:
    inp = link_inputs(link, batch)
    return logits_to_llr(predict_logits(net, inp.x, link.n_sym), net.qam_order, inp.gain)


def receiver_errors(receiver: str, link: DlLink, batch: DlBatch,
                    net: DlNetwork | None = None, flip_llr: bool = False) -> np.ndarray:
    """Per-frame block-error flags for one receiver."""
    if receiver == "nn":
        if net is None:
            raise ConfigError("the nn receiver needs a trained network")
        llr = nn_llrs(net, link, batch)
    elif receiver in ("mrc", "irc"):
        z, nv = link.mrc_symbols(batch) if receiver == "mrc" else link.irc_symbols(batch)
        llr = qam_soft_demod(z, nv, link.cfg.qam_order)
    else:
        raise ConfigError(f"unknown receiver {receiver!r}")
    return link.decode(-llr if flip_llr else llr, batch)


# training ---------------------------------------------------------------------

@dataclass
class DlTrainResult:
    net: DlNetwork
    train_loss: list[float]
    heldout_loss: list[float]
    heldout_accuracy: list[float]
    heldout_distance: list[float]
    wall_clock_s: float
    extra: dict = field(default_factory=dict)


def training_batch(link: DlLink, n_frames: int, sinr_range_db, seed: int) -> DlBatch:
    """Frames with SINR drawn uniformly from ``sinr_range_db`` (per frame)."""
    lo, hi = float(min(sinr_range_db)), float(max(sinr_range_db))
    sinr = rng_for(seed, "train-sinr").uniform(lo, hi, size=n_frames)
    return link.simulate(sinr, n_frames, seed)


def symbol_distance(logits: np.ndarray, c_t: np.ndarray, order: int) -> float:
    """Mean Euclidean distance between the posterior-mean point and ``c_t``."""
    mean_pt = softmax(logits, axis=-1) @ constellation(order)
    return float(np.mean(np.abs(mean_pt - c_t)))


def train_dl(link: DlLink, batch: DlBatch, cfg: TrainConfig = TrainConfig(),
             log=None) -> DlTrainResult:
    """Cross-entropy training against the transmitted constellation indices."""
    if len(batch) == 0:
        raise ConfigError("training dataset is empty")
    t0 = time.perf_counter()
    s = link.n_sym
    net = DlNetwork(link.cfg.qam_order, cfg.scale_factor, cfg.seed)
    x = link_inputs(link, batch).x
    labels = batch.symbol_idx
    train_idx, test_idx = split_indices(len(batch), cfg.holdout, cfg.seed)

    def step(idx):
        rows = train_idx[idx]
        logits = net.forward(x[rows])
        loss, grad = cross_entropy_loss(logits[:, :s], labels[rows])
        full = np.zeros_like(logits)
        full[:, :s] = grad
        net.backward(full)
        return loss

    h_loss, h_acc, h_dist = [], [], []

    def on_epoch(epoch):
        logits = predict_logits(net, x[test_idx], s)
        h_loss.append(cross_entropy_loss(logits, labels[test_idx])[0])
        h_acc.append(float(np.mean(np.argmax(logits, -1) == labels[test_idx])))
        h_dist.append(symbol_distance(logits, batch.c_t[test_idx], net.qam_order))
        if log is not None:
            log(f"epoch {epoch + 1}/{cfg.epochs} heldout_ce={h_loss[-1]:.4f} "
                f"acc={h_acc[-1]:.4f} dist={h_dist[-1]:.4f}")

    losses = run_epochs(net, len(train_idx), cfg, step, on_epoch)
    return DlTrainResult(net, losses, h_loss, h_acc, h_dist, time.perf_counter() - t0)


# evaluation -------------------------------------------------------------------

def mc_std(p, n) -> np.ndarray:
    """Binomial standard deviation of a BLER estimate."""
    p = np.asarray(p, dtype=float)
    return np.sqrt(np.maximum(p * (1.0 - p), 0.0) / n)


def evaluate_bler(net: DlNetwork | None, link: DlLink, sinr_grid_db, n_frames: int,
                  seed: int = 0, receivers=RECEIVERS, experiment_id: str = "eval-dl",
                  cfg_hash: str = "") -> list[MetricsRecord]:
    """One ``bler`` record per (receiver, SINR), all receivers on the same frames.

    ``label`` holds the receiver name; ``n_samples`` the frame count.
    """
    if n_frames < 1:
        raise ConfigError("n_frames must be positive")
    cfg_hash = cfg_hash or config_hash({"link": link.cfg, "scenario": link.scenario.to_dict(),
                                        "frames": n_frames})
    recs = []
    for j, sinr in enumerate(sinr_grid_db):
        batch = link.simulate(float(sinr), n_frames, seed=subseed(seed, "sinr-point", j))
        for rx in receivers:
            t0 = time.perf_counter()
            err = receiver_errors(rx, link, batch, net)
            ms = (time.perf_counter() - t0) * 1e3
            recs.append(MetricsRecord(experiment_id, cfg_hash, seed, "bler", float(sinr),
                                      float(err.mean()), n_frames, ms, rx))
    return recs


def bler_rows(records) -> list[dict]:
    """BLER CSV rows, sorted by receiver then SINR."""
    rows = [{"receiver": r.label, "sinr_db": r.x_value, "n_frames": r.n_samples,
             "n_block_errors": int(round(r.y_value * r.n_samples)), "bler": r.y_value,
             "seed": r.seed, "config_hash": r.config_hash}
            for r in records if r.metric_name == "bler"]
    return sorted(rows, key=lambda d: (d["receiver"], d["sinr_db"]))


def bler_curves(records) -> dict[str, tuple[np.ndarray, np.ndarray, int]]:
    """receiver -> (sinr grid, bler, frames per point)."""
    out = {}
    for rx in sorted({r.label for r in records if r.metric_name == "bler"}):
        pts = sorted((r.x_value, r.y_value, r.n_samples) for r in records
                     if r.metric_name == "bler" and r.label == rx)
        arr = np.array(pts)
        out[rx] = (arr[:, 0], arr[:, 1], int(arr[0, 2]))
    return out


def sinr_at_bler(sinr, bler, target: float = 0.01) -> float:
    """SINR where the curve first crosses ``target``, interpolating log10(BLER).

    Returns NaN when the grid never brackets the target.
    """
    sinr, bler = np.asarray(sinr, dtype=float), np.asarray(bler, dtype=float)
    for j in range(len(sinr) - 1):
        b0, b1 = bler[j], bler[j + 1]
        if b0 >= target > b1 or (b0 > target >= b1):
            lo, hi = np.log10(max(b0, 1e-12)), np.log10(max(b1, 1e-12))
            t = (np.log10(target) - lo) / (hi - lo)
            return float(sinr[j] + t * (sinr[j + 1] - sinr[j]))
    return float("nan")


__all__ = [
    "BLER_COLUMNS", "ConstellationOutput", "DlNetwork", "DlTrainResult",
    "InterferenceFeature", "NnInputs", "RECEIVERS", "ReferenceStore",
    "bler_curves", "bler_rows", "build_dl_network", "classify_constellation",
    "combine_estimates", "estimate_interference", "evaluate_bler", "link_inputs",
    "logits_to_llr", "mc_std", "mitigate_symbols", "nn_llrs", "pack_inputs",
    "predict_logits", "receiver_errors", "sinr_at_bler", "symbol_distance", "train_dl",
    "training_batch",
]
