from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from imsim import ul
from imsim.bench.config import config_from_dict
from imsim.bench.experiments import sweep_sf_cmd
from imsim.bench.timing import FRAME_BUDGET_US, REFERENCE_FRAME_US, measure_inference
from imsim.errors import ConfigError
from imsim.phy import make_dataset
from imsim.seeding import subseed


def test_timing_report_structure():
    # latency values are environment dependent and never asserted
    stats = measure_inference(lambda x: x.sum(), np.ones((7, 3)), (1, 10, 100), n_frames=25)
    assert [s.batch_size for s in stats] == [1, 10, 100]
    assert all(s.n_frames >= 25 for s in stats)
    assert all(s.mean_us >= 0 and s.p95_us >= s.p50_us >= 0 for s in stats)
    line = stats[0].line()
    assert f"{REFERENCE_FRAME_US:.0f} us" in line and f"{FRAME_BUDGET_US:.0f} us" in line


def test_timing_rejects_empty_inputs():
    with pytest.raises(ConfigError):
        measure_inference(lambda x: x, np.ones((0, 2)))
    with pytest.raises(ConfigError):
        measure_inference(lambda x: x, np.ones((1, 2)), n_frames=0)


def test_single_sf_sweep_reproduces_direct_run(tmp_path):
    cfg = config_from_dict({"scenario": {"bs_ant": 4, "n_re": 32},
                            "sweep": {"sf_grid": [1.0], "sf_frames": 20, "sf_epochs": 1}})
    res = sweep_sf_cmd(cfg, Path(tmp_path), lambda *_: None)
    swept = [r.y_value for r in res.records if r.metric_name == "heldout_nmse"]
    pairs = make_dataset(cfg.scenario, 20, seed=subseed(cfg.seed, "sweep-sf"))
    direct = ul.train_ul(pairs, replace(cfg.ul.train, epochs=1, scale_factor=1.0))
    assert swept == [direct.heldout_nmse_rec]
