"""Subcommand bodies. Each takes a validated config and an output directory.

Artifacts per subcommand (all inside the output directory):

=========== ==============================================================
gen-data    ul_dataset.npz, dataset.csv
train-ul    ul_modular.ckpt, ul_monolithic.ckpt, fig3.csv, fig10a.csv
eval-ul     fig7.csv, ul_eval.csv (per antenna configuration, per frame NMSE)
train-dl    dl.ckpt, dl_training.csv
eval-dl     fig8b.csv, bler_<m>x<n>.csv per antenna configuration
sweep-sinr  fig8a.csv, bler.csv
sweep-sf    fig9.csv
grad-check  grad_check.csv
timing      fig10b.csv (measured latencies, not reproducible)
=========== ==============================================================

Every figure export also (re)writes ``plot_figures.py``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .. import dl as dlm
from .. import ul as ulm
from ..errors import ConfigError
from ..nn import (BiLstm, Conv1d, CorruptedGradient, Dense, Lstm, ReLU, Sequential,
                  assign_parameters, grad_check, load_checkpoint, save_checkpoint)
from ..phy import CellScenario, load_dataset, make_dataset, nmse, save_dataset
from ..records import MetricsRecord
from ..seeding import rng_for, subseed
from ..txrx.link import DlLink
from .config import ExperimentConfig
from .export import export_plotdata, write_csv, write_records
from .timing import FRAME_BUDGET_US, REFERENCE_FRAME_US, measure_inference

UL_DATASET = "ul_dataset.npz"
UL_CKPT = "ul_modular.ckpt"
MONO_CKPT = "ul_monolithic.ckpt"
DL_CKPT = "dl.ckpt"
GRAD_TOL = 1e-4
PLATEAU_TOL = 0.05


@dataclass
class RunResult:
    records: list[MetricsRecord]
    artifacts: list[Path]
    ok: bool = True
    summary: list[str] = field(default_factory=list)


def _rec(cfg: ExperimentConfig, exp: str, metric: str, x: float, y: float, n: int = 1,
         label: str = "") -> MetricsRecord:
    return MetricsRecord(exp, cfg.digest(), cfg.seed, metric, float(x), float(y), int(n),
                         0.0, label)


def _save_net(path: Path, net, cfg: ExperimentConfig, command: str) -> Path:
    meta = {"arch": net.arch, "config_hash": cfg.digest(), "command": command,
            "seed": cfg.seed}
    save_checkpoint(path, net.parameters(), meta)
    return path


def load_net(path: Path):
    params, meta = load_checkpoint(path)
    arch = meta.get("arch", {})
    net = dlm.build_dl_network(arch) if arch.get("kind") == "dl" else ulm.build_network(arch)
    assign_parameters(net, params)
    return net


def ul_dataset(cfg: ExperimentConfig, out: Path, log) -> list:
    """Reuse ``gen-data`` output when it matches the config, else regenerate."""
    path = out / UL_DATASET
    if path.exists():
        header, pairs = load_dataset(path)
        if header.get("scenario_hash") == cfg.scenario.digest() \
                and len(pairs) == cfg.ul.n_frames:
            log(f"using {path}")
            return pairs
    return make_dataset(cfg.scenario, cfg.ul.n_frames, seed=cfg.seed)


# UL ---------------------------------------------------------------------------

def gen_data(cfg: ExperimentConfig, out: Path, log) -> RunResult:
    pairs = make_dataset(cfg.scenario, cfg.ul.n_frames, seed=cfg.seed)
    save_dataset(out / UL_DATASET, pairs, cfg.scenario)
    recs = []
    for j, p in enumerate(pairs):
        recs.append(_rec(cfg, "dataset", "nmse_raw", j, nmse(p.h_int_est, p.h_true.h)))
        recs.append(_rec(cfg, "dataset", "nmse_clean", j,
                         nmse(p.h_clean_est, p.h_true.h)))
    csv_path = write_records(out / "dataset.csv", recs)
    raw = np.mean([r.y_value for r in recs if r.metric_name == "nmse_raw"])
    return RunResult(recs, [out / UL_DATASET, csv_path],
                     summary=[f"{len(pairs)} frames, mean raw NMSE {raw:.4f}"])


def _curve_records(cfg, res: ulm.UlTrainResult, label: str) -> list[MetricsRecord]:
    recs = [_rec(cfg, "fig10a", "heldout_nmse", e + 1, v, len(res.test_idx), label)
            for e, v in enumerate(res.learning_curve)]
    recs += [_rec(cfg, "fig10a", "train_loss", e + 1, v, len(res.train_idx), label)
             for e, v in enumerate(res.train_loss)]
    return recs


def train_ul_cmd(cfg: ExperimentConfig, out: Path, log) -> RunResult:
    pairs = ul_dataset(cfg, out, log)
    res = ulm.train_ul(pairs, cfg.ul.train, log)
    arts = [_save_net(out / UL_CKPT, res.net, cfg, "train-ul")]
    n_test = len(res.test_idx)
    recs = _curve_records(cfg, res, "modular")
    recs += [_rec(cfg, "fig3", "nmse", 0, res.heldout_nmse_raw, n_test, "raw"),
             _rec(cfg, "fig3", "nmse", 0, res.heldout_nmse_rec, n_test, "modular"),
             _rec(cfg, "fig3", "reduction", 0, res.reduction, n_test, "modular")]
    summary = [f"modular: held-out NMSE {res.heldout_nmse_raw:.4f} -> "
               f"{res.heldout_nmse_rec:.4f} ({100 * res.reduction:.1f}% reduction)"]
    if cfg.ul.baseline:
        mono = ulm.train_monolithic_baseline(pairs, cfg.ul.train, log)
        arts.append(_save_net(out / MONO_CKPT, mono.net, cfg, "train-ul"))
        recs += _curve_records(cfg, mono, "monolithic")
        recs += [_rec(cfg, "fig3", "nmse", 0, mono.heldout_nmse_rec, n_test, "monolithic"),
                 _rec(cfg, "fig3", "reduction", 0, mono.reduction, n_test, "monolithic")]
        summary.append(f"monolithic: held-out NMSE {mono.heldout_nmse_rec:.4f} "
                       f"({100 * mono.reduction:.1f}% reduction)")
    arts += export_plotdata(recs, out)
    return RunResult(recs, arts, summary=summary)


def eval_ul_cmd(cfg: ExperimentConfig, out: Path, log) -> RunResult:
    nets = {"modular": load_net(out / UL_CKPT)}
    if (out / MONO_CKPT).exists():
        nets["monolithic"] = load_net(out / MONO_CKPT)
    if not cfg.sweep.antenna_configs:
        raise ConfigError("sweep.antenna_configs must be nonempty for eval-ul")
    recs, rows, summary = [], [], []
    for j, (m, n) in enumerate(cfg.sweep.antenna_configs):
        sc = replace(cfg.scenario, bs_ant=m, ue_ant=n)
        pairs = make_dataset(sc, cfg.ul.eval_frames, seed=subseed(cfg.seed, "eval-ul", j))
        for name, net in nets.items():
            part = ulm.evaluate_ul(net, pairs, "fig7", cfg.digest(), cfg.seed,
                                   label=f"{m}x{n}/{name}")
            recs += part
            rows += ulm.eval_rows(part, sc, name)
            agg = {r.metric_name: r.y_value for r in part if r.x_value < 0}
            summary.append(f"{m}x{n} {name}: NMSE {agg['nmse_raw_mean']:.4f} -> "
                           f"{agg['nmse_rec_mean']:.4f}")
    arts = [write_csv(out / "ul_eval.csv", ulm.EVAL_COLUMNS, rows)]
    return RunResult(recs, arts + export_plotdata(recs, out), summary=summary)


# DL ---------------------------------------------------------------------------

def _link(cfg: ExperimentConfig, scenario: CellScenario | None = None) -> DlLink:
    return DlLink(scenario or cfg.scenario, cfg.dl.link)


def train_dl_cmd(cfg: ExperimentConfig, out: Path, log) -> RunResult:
    link = _link(cfg)
    batch = dlm.training_batch(link, cfg.dl.n_train_frames, cfg.dl.train_sinr_db,
                               subseed(cfg.seed, "dl-train"))
    res = dlm.train_dl(link, batch, cfg.dl.train, log)
    ckpt = _save_net(out / DL_CKPT, res.net, cfg, "train-dl")
    recs = []
    for name, vals in (("train_ce", res.train_loss), ("heldout_ce", res.heldout_loss),
                       ("heldout_accuracy", res.heldout_accuracy),
                       ("heldout_distance", res.heldout_distance)):
        recs += [_rec(cfg, "dl_training", name, e + 1, v, len(batch), "nn")
                 for e, v in enumerate(vals)]
    csv_path = write_records(out / "dl_training.csv", recs)
    return RunResult(recs, [ckpt, csv_path], summary=[
        f"held-out symbol accuracy {res.heldout_accuracy[-1]:.4f}, "
        f"cross-entropy {res.heldout_loss[-1]:.4f}"])


def _crossings(cfg, recs, exp: str, prefix: str = "") -> tuple[list, list[str]]:
    out, lines = [], []
    for rx, (grid, bler, n) in dlm.bler_curves(recs).items():
        s = dlm.sinr_at_bler(grid, bler, 0.01)
        lines.append(f"{prefix}{rx}: 1% BLER at "
                     + ("(not bracketed by the grid)" if np.isnan(s) else f"{s:.2f} dB"))
        if not np.isnan(s):
            out.append(_rec(cfg, exp, "sinr_at_1pct", -1, s, n, f"{prefix}{rx}"))
    return out, lines


def _require_grid(cfg: ExperimentConfig) -> tuple[float, ...]:
    if not cfg.sweep.sinr_grid_db:
        raise ConfigError("sweep.sinr_grid_db must be nonempty")
    return cfg.sweep.sinr_grid_db


def sweep_sinr_cmd(cfg: ExperimentConfig, out: Path, log) -> RunResult:
    net = load_net(out / DL_CKPT)
    grid = _require_grid(cfg)
    recs = dlm.evaluate_bler(net, _link(cfg), grid, cfg.dl.n_eval_frames,
                             subseed(cfg.seed, "sweep-sinr"), experiment_id="fig8a",
                             cfg_hash=cfg.digest())
    recs = [replace(r, wall_clock_ms=0.0, seed=cfg.seed) for r in recs]
    extra, lines = _crossings(cfg, recs, "fig8a")
    recs += extra
    arts = [write_csv(out / "bler.csv", dlm.BLER_COLUMNS, dlm.bler_rows(recs))]
    return RunResult(recs, arts + export_plotdata(recs, out), summary=lines)


def eval_dl_cmd(cfg: ExperimentConfig, out: Path, log) -> RunResult:
    net = load_net(out / DL_CKPT)
    grid = _require_grid(cfg)
    if not cfg.sweep.antenna_configs:
        raise ConfigError("sweep.antenna_configs must be nonempty for eval-dl")
    recs, arts, lines = [], [], []
    for j, (m, n) in enumerate(cfg.sweep.antenna_configs):
        link = _link(cfg, replace(cfg.scenario, bs_ant=m, ue_ant=n))
        part = dlm.evaluate_bler(net, link, grid, cfg.dl.n_eval_frames,
                                 subseed(cfg.seed, "eval-dl", j), experiment_id="fig8b",
                                 cfg_hash=cfg.digest())
        part = [replace(r, wall_clock_ms=0.0, seed=cfg.seed) for r in part]
        arts.append(write_csv(out / f"bler_{m}x{n}.csv", dlm.BLER_COLUMNS,
                              dlm.bler_rows(part)))
        part = [replace(r, label=f"{m}x{n}/{r.label}") for r in part]
        extra, ln = _crossings(cfg, part, "fig8b")
        recs += part + extra
        lines += ln
    return RunResult(recs, arts + export_plotdata(recs, out), summary=lines)


# sweeps, checks, timing ---------------------------------------------------------

def plateau_sf(sfs, values, tol: float = PLATEAU_TOL) -> float:
    """Smallest SF whose metric is within ``tol`` (relative) of the best one."""
    best = min(values)
    return float(min(sf for sf, v in zip(sfs, values) if v <= best * (1.0 + tol)))


def sweep_sf_cmd(cfg: ExperimentConfig, out: Path, log) -> RunResult:
    sfs = cfg.sweep.sf_grid
    if not sfs:
        raise ConfigError("sweep.sf_grid must be nonempty")
    pairs = make_dataset(cfg.scenario, cfg.sweep.sf_frames,
                         seed=subseed(cfg.seed, "sweep-sf"))
    recs, vals, lines = [], [], []
    for sf in sfs:
        tc = replace(cfg.ul.train, epochs=cfg.sweep.sf_epochs, scale_factor=sf)
        res = ulm.train_ul(pairs, tc, log)
        vals.append(res.heldout_nmse_rec)
        recs.append(_rec(cfg, "fig9", "heldout_nmse", sf, res.heldout_nmse_rec,
                         len(res.test_idx), "ul"))
        recs.append(_rec(cfg, "fig9", "n_params", sf, res.net.n_params(), 1, "ul"))
        lines.append(f"SF {sf}: held-out NMSE {res.heldout_nmse_rec:.5f} "
                     f"({res.net.n_params()} parameters)")
    p = plateau_sf(sfs, vals)
    recs.append(_rec(cfg, "fig9", "plateau_sf", -1, p, len(sfs), "ul"))
    lines.append(f"plateau begins at SF {p} (within {100 * PLATEAU_TOL:.0f}% of best)")
    return RunResult(recs, export_plotdata(recs, out), summary=lines)


def grad_suite(seed: int = 0) -> list[tuple[str, object, np.ndarray, dict]]:
    """(name, network, input, grad_check kwargs) for every layer type and model."""
    rng = rng_for(seed, "grad-suite")

    def x(*shape):
        return rng.standard_normal(shape)

    sample = {"per_tensor": 40}
    cases = [
        ("dense", Dense(3, 4, rng), x(2, 5, 3), {}),
        ("conv1d_same", Conv1d(2, 3, rng, "same"), x(2, 6, 2), {}),
        ("conv1d_valid", Conv1d(2, 3, rng, "valid"), x(2, 6, 2), {}),
        ("relu", Sequential(Dense(3, 5, rng), ReLU(), Dense(5, 2, rng)), x(2, 4, 3), {}),
        ("lstm", Lstm(3, 4, rng), x(2, 5, 3), {}),
        ("bilstm", BiLstm(3, 4, rng), x(2, 5, 3), {}),
        ("ul_network", ulm.UlNetwork(seed=seed), x(2, 8, 2), sample),
        ("monolithic", ulm.MonolithicNetwork(seed=seed), x(2, 8, 2), sample),
        ("dl_network", dlm.DlNetwork(seed=seed), x(2, 8, 6), sample),
    ]
    # zero-initialised biases put ReLU inputs exactly on the kink (e.g. at
    # zero-padded positions); move every case to a generic point
    for _, net, _, _ in cases:
        for v in net.parameters().values():
            v += 0.05 * rng.standard_normal(v.shape)
    return cases


def grad_check_cmd(cfg: ExperimentConfig, out: Path, log) -> RunResult:
    recs, lines, ok = [], [], True
    for j, (name, net, inp, kw) in enumerate(grad_suite(cfg.seed)):
        rep = grad_check(net, inp, tolerance=GRAD_TOL, **kw)
        ok &= rep.passed
        lines.append(f"{name:<14} {rep.line()}")
        recs.append(_rec(cfg, "grad-check", "max_rel_err", j, rep.max_rel_err,
                         rep.n_checked, name))
    control = CorruptedGradient(Dense(3, 4, rng_for(cfg.seed, "grad-control")))
    rep = grad_check(control, rng_for(cfg.seed, "grad-control-x").standard_normal((2, 5, 3)),
                     tolerance=GRAD_TOL, check_input=False)
    ok &= not rep.passed
    lines.append(f"{'control':<14} {rep.line()} (expected FAIL)")
    recs.append(_rec(cfg, "grad-check", "max_rel_err", -1, rep.max_rel_err, rep.n_checked,
                     "negative-control"))
    return RunResult(recs, [write_records(out / "grad_check.csv", recs)], ok, lines)


def timing_cmd(cfg: ExperimentConfig, out: Path, log) -> RunResult:
    net = load_net(out / DL_CKPT)
    link = _link(cfg)
    n_inputs = max(cfg.timing.batch_sizes)
    batch = link.simulate(float(np.median(cfg.sweep.sinr_grid_db or (0.0,))), n_inputs,
                          subseed(cfg.seed, "timing"))
    inp = dlm.link_inputs(link, batch).x

    def infer(x):
        return dlm.logits_to_llr(net.forward(x)[:, :link.n_sym], net.qam_order)

    stats = measure_inference(infer, inp, cfg.timing.batch_sizes, cfg.timing.n_frames)
    recs = []
    for s in stats:
        for metric, v in (("latency_mean_us", s.mean_us), ("latency_p50_us", s.p50_us),
                          ("latency_p95_us", s.p95_us),
                          ("reference_us", REFERENCE_FRAME_US),
                          ("frame_budget_us", FRAME_BUDGET_US)):
            recs.append(_rec(cfg, "fig10b", metric, s.batch_size, v, s.n_frames, "dl"))
    return RunResult(recs, export_plotdata(recs, out), summary=[s.line() for s in stats])


COMMANDS: dict[str, Callable[[ExperimentConfig, Path, Callable], RunResult]] = {
    "gen-data": gen_data,
    "train-ul": train_ul_cmd,
    "eval-ul": eval_ul_cmd,
    "train-dl": train_dl_cmd,
    "eval-dl": eval_dl_cmd,
    "sweep-sinr": sweep_sinr_cmd,
    "sweep-sf": sweep_sf_cmd,
    "grad-check": grad_check_cmd,
    "timing": timing_cmd,
}


def write_run_info(out: Path, command: str, cfg: ExperimentConfig, result: RunResult,
                   wall_s: float) -> Path:
    """Provenance (including wall-clock time) kept out of the CSVs."""
    info = {"command": command, "config_hash": cfg.digest(), "seed": cfg.seed,
            "ok": result.ok, "wall_clock_s": round(wall_s, 3),
            "artifacts": [p.name for p in result.artifacts], "summary": result.summary}
    path = out / f"run_{command}.json"
    path.write_text(json.dumps(info, indent=2) + "\n")
    return path
