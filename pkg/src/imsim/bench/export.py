"""Deterministic CSV writers and the plot-data export.

Figure CSVs (``fig3.csv``, ``fig7.csv``, ...) share one column layout,
:data:`RECORD_COLUMNS`, in that order. Rows are sorted by
``(metric_name, label, x_value, y_value)``. Wall-clock time is left out so
that repeated runs produce identical bytes; the timing figure carries its
measurements in ``y_value`` and is the only non-reproducible export.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import ConfigError
from ..records import MetricsRecord

RECORD_COLUMNS = ("experiment_id", "config_hash", "seed", "metric_name", "label",
                  "x_value", "y_value", "n_samples")
PLOT_SCRIPT_NAME = "plot_figures.py"

PLOT_SCRIPT = '''"""Render every fig*.csv in this directory to a PNG next to it.

Usage: python plot_figures.py [directory]
"""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

LOG_Y = {"fig8a", "fig8b", "fig10b"}
LOG_X = {"fig9", "fig10b"}


def series(path):
    out = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if float(row["x_value"]) < 0:
                continue
            out[(row["metric_name"], row["label"])].append(
                (float(row["x_value"]), float(row["y_value"])))
    return out


def main(directory):
    for path in sorted(Path(directory).glob("fig*.csv")):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for (metric, label), pts in sorted(series(path).items()):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3,
                    label=f"{metric} {label}".strip())
        if path.stem in LOG_Y:
            ax.set_yscale("log")
        if path.stem in LOG_X:
            ax.set_xscale("log")
        ax.set_title(path.stem)
        ax.legend(fontsize=6)
        fig.tight_layout()
        fig.savefig(path.with_suffix(".png"), dpi=120)
        plt.close(fig)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent)
'''


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])
    return path


def ordered(records: Iterable[MetricsRecord]) -> list[MetricsRecord]:
    return sorted(records, key=lambda r: (r.experiment_id, r.metric_name, r.label,
                                          r.x_value, r.y_value, r.n_samples))


def write_records(path, records: Sequence[MetricsRecord]) -> Path:
    if not records:
        raise ConfigError(f"refusing to write {path}: no records")
    return write_csv(path, RECORD_COLUMNS, (r.as_row() for r in ordered(records)))


def export_plotdata(records: Sequence[MetricsRecord], out_dir) -> list[Path]:
    """One CSV per ``experiment_id`` plus the shared plot script."""
    if not records:
        raise ConfigError("nothing to export: empty record list")
    out_dir = Path(out_dir)
    groups: dict[str, list[MetricsRecord]] = {}
    for r in records:
        groups.setdefault(r.experiment_id, []).append(r)
    paths = [write_records(out_dir / f"{name}.csv", groups[name]) for name in sorted(groups)]
    script = out_dir / PLOT_SCRIPT_NAME
    script.write_text(PLOT_SCRIPT)
    return paths + [script]
