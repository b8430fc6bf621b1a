import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from imsim.bench import cli
from imsim.bench.experiments import grad_suite, plateau_sf
from imsim.bench.export import RECORD_COLUMNS, export_plotdata, write_records
from imsim.errors import ConfigError
from imsim.records import MetricsRecord

SMOKE = Path(__file__).resolve().parent.parent / "configs" / "smoke.json"


def run(*args):
    return cli.main([*args, "-q"])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def smoke_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    for cmd in ("gen-data", "train-ul", "train-dl"):
        assert run(cmd, "--config", str(SMOKE), "--out", str(out)) == 0
    return out


def test_invalid_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenario": {"bs_ant": -1}}))
    assert run("gen-data", "--config", str(bad), "--out", str(tmp_path)) == 2
    assert "config error" in capsys.readouterr().err
    bad.write_text(json.dumps({"scenario": {"bs_antennas": 4}}))
    assert run("gen-data", "--config", str(bad), "--out", str(tmp_path)) == 2
    assert "scenario.bs_antennas" in capsys.readouterr().err


def test_missing_checkpoint_exit_3(tmp_path, capsys):
    for cmd in ("sweep-sinr", "eval-ul", "timing"):
        assert run(cmd, "--config", str(SMOKE), "--out", str(tmp_path)) == 3
    assert "missing artifact" in capsys.readouterr().err


def test_unknown_subcommand_rejected():
    with pytest.raises(SystemExit) as err:
        cli.main(["train-everything", "--config", str(SMOKE)])
    assert err.value.code == 2


def test_grad_check_passes(tmp_path):
    assert run("grad-check", "--config", str(SMOKE), "--out", str(tmp_path)) == 0
    recs = rows(tmp_path / "grad_check.csv")
    control = [r for r in recs if r["label"] == "negative-control"]
    assert len(control) == 1 and float(control[0]["y_value"]) > 1e-4
    assert all(float(r["y_value"]) < 1e-4 for r in recs if r is not control[0])
    info = json.loads((tmp_path / "run_grad-check.json").read_text())
    assert info["ok"] is True


def test_grad_check_failure_exit_4(tmp_path, monkeypatch):
    from imsim.bench import experiments
    from imsim.nn import CorruptedGradient, Dense
    from imsim.seeding import rng_for

    def broken(seed=0):
        net = CorruptedGradient(Dense(2, 2, rng_for(0, "b")), factor=2.0)
        return [("broken", net, rng_for(0, "x").standard_normal((1, 3, 2)), {})]

    monkeypatch.setattr(experiments, "grad_suite", broken)
    assert run("grad-check", "--config", str(SMOKE), "--out", str(tmp_path)) == 4


def test_grad_suite_covers_every_layer():
    names = {name for name, *_ in grad_suite()}
    assert {"dense", "conv1d_same", "conv1d_valid", "relu", "lstm", "bilstm",
            "ul_network", "monolithic", "dl_network"} <= names


def test_one_point_sinr_sweep(smoke_dir, tmp_path):
    cfg = json.loads(SMOKE.read_text())
    cfg["sweep"]["sinr_grid_db"] = [4.0]
    path = tmp_path / "one.json"
    path.write_text(json.dumps(cfg))
    assert run("sweep-sinr", "--config", str(path), "--out", str(smoke_dir)) == 0
    got = rows(smoke_dir / "bler.csv")
    assert sorted(r["receiver"] for r in got) == ["irc", "mrc", "nn"]
    assert all(r["sinr_db"] == "4.0" for r in got)


def test_empty_grid_is_config_error(smoke_dir, tmp_path):
    cfg = json.loads(SMOKE.read_text())
    cfg["sweep"]["sinr_grid_db"] = []
    path = tmp_path / "empty.json"
    path.write_text(json.dumps(cfg))
    assert run("sweep-sinr", "--config", str(path), "--out", str(smoke_dir)) == 2


def test_all_subcommands_and_artifacts(smoke_dir):
    for cmd in ("eval-ul", "eval-dl", "sweep-sinr", "sweep-sf", "timing"):
        assert run(cmd, "--config", str(SMOKE), "--out", str(smoke_dir)) == 0, cmd
    for name in ("dataset.csv", "fig3.csv", "fig7.csv", "fig8a.csv", "fig8b.csv", "fig9.csv",
                 "fig10a.csv", "fig10b.csv", "bler.csv", "bler_4x2.csv", "ul_eval.csv",
                 "dl_training.csv", "plot_figures.py", "ul_modular.ckpt", "dl.ckpt"):
        assert (smoke_dir / name).exists(), name
    header = (smoke_dir / "fig3.csv").read_text().splitlines()[0]
    assert header == ",".join(RECORD_COLUMNS)
    timing = rows(smoke_dir / "fig10b.csv")
    assert {float(r["x_value"]) for r in timing} == {1.0, 10.0}
    assert any(r["metric_name"] == "reference_us" for r in timing)


def test_reruns_are_byte_identical(tmp_path):
    outs = []
    for j in range(2):
        out = tmp_path / f"run{j}"
        for cmd in ("gen-data", "train-ul", "eval-ul", "train-dl", "sweep-sinr", "sweep-sf"):
            assert run(cmd, "--config", str(SMOKE), "--out", str(out)) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    assert names == sorted(p.name for p in outs[1].glob("*.csv"))
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    assert (outs[0] / "dl.ckpt").read_bytes() == (outs[1] / "dl.ckpt").read_bytes()


def test_seed_override_changes_results(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("gen-data", "--config", str(SMOKE), "--out", str(a)) == 0
    assert run("gen-data", "--config", str(SMOKE), "--out", str(b), "--seed", "3") == 0
    assert (a / "dataset.csv").read_bytes() != (b / "dataset.csv").read_bytes()


def test_output_dir_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("IMSIM_OUTPUT_DIR", str(tmp_path / "env"))
    assert cli.resolve_out("cfg", None) == tmp_path / "env"
    assert cli.resolve_out("cfg", str(tmp_path / "flag")) == tmp_path / "flag"
    monkeypatch.delenv("IMSIM_OUTPUT_DIR")
    assert cli.resolve_out("cfg", None) == Path("cfg")
    monkeypatch.setenv("IMSIM_OUTPUT_DIR", str(tmp_path / "env"))
    assert run("grad-check", "--config", str(SMOKE)) == 0
    assert (tmp_path / "env" / "grad_check.csv").exists()


def test_thread_env(monkeypatch):
    monkeypatch.setenv("IMSIM_THREADS", "1")
    for var in cli.THREAD_VARS:
        monkeypatch.delenv(var, raising=False)
    cli._apply_thread_env()
    import os
    assert all(os.environ[v] == "1" for v in cli.THREAD_VARS)


def test_console_entry_point_runs(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "imsim", "grad-check", "--config", str(SMOKE),
                           "--out", str(tmp_path), "-q"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "expected FAIL" in proc.stdout


def test_export_refuses_empty(tmp_path):
    with pytest.raises(ConfigError):
        export_plotdata([], tmp_path)
    with pytest.raises(ConfigError):
        write_records(tmp_path / "x.csv", [])


def test_reexport_is_byte_identical(tmp_path):
    recs = [MetricsRecord("figA", "h", 0, "m", float(x), x / 3, 1, wall_clock_ms=x, label="a")
            for x in range(5)]
    export_plotdata(recs, tmp_path / "a")
    export_plotdata(list(reversed(recs)), tmp_path / "b")
    assert (tmp_path / "a" / "figA.csv").read_bytes() == (tmp_path / "b" / "figA.csv").read_bytes()
    assert "wall_clock_ms" not in (tmp_path / "a" / "figA.csv").read_text()
    assert (tmp_path / "a" / "plot_figures.py").exists()


def test_plateau_sf():
    assert plateau_sf([0.25, 0.5, 1.0, 2.0], [1.0, 0.5, 0.41, 0.40]) == 1.0
    assert plateau_sf([0.25, 1.0], [0.3, 0.5]) == 0.25
