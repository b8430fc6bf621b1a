import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imsim import ul
from imsim.errors import ConfigError
from imsim.nn import assign_parameters, grad_check, load_checkpoint, save_checkpoint
from imsim.phy import CellScenario, make_dataset, nmse
from imsim.seeding import rng_for
from imsim.training import TrainConfig

SC = CellScenario(bs_ant=4, ue_ant=2, n_re=32)


def cnoise(seed, shape):
    r = rng_for(seed, "h")
    return r.standard_normal(shape) + 1j * r.standard_normal(shape)


def test_preprocess_shape_example():
    assert ul.preprocess(np.zeros((8, 2, 64), dtype=complex)).shape == (16, 64, 2)


def test_preprocess_single_row_unchanged():
    h = cnoise(0, (1, 1, 5))
    t = ul.preprocess(h)
    assert np.array_equal(t[0, :, 0], h[0, 0].real)
    assert np.array_equal(t[0, :, 1], h[0, 0].imag)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(1, 16), st.integers(0, 1000))
def test_preprocess_round_trip(m, n, k, seed):
    h = cnoise(seed, (m, n, k))
    assert np.array_equal(ul.postprocess(ul.preprocess(h), m, n), h)


def test_preprocess_rejects_bad_shape():
    with pytest.raises(ConfigError):
        ul.preprocess(np.zeros((2, 3)))
    with pytest.raises(ConfigError):
        ul.postprocess(np.zeros((3, 4, 2)), 2, 2)


def test_untrained_forward_is_finite():
    h = cnoise(1, (4, 2, 32))
    out = ul.ul_forward(ul.UlNetwork(), h)
    assert out.shape == h.shape
    assert np.all(np.isfinite(out))
    with pytest.raises(ConfigError):
        ul.ul_forward(ul.UlNetwork(), h[0])


def test_zero_input_gives_identical_rows():
    out = ul.ul_forward(ul.UlNetwork(seed=2), np.zeros((3, 2, 16), dtype=complex))
    flat = out.reshape(6, 16)
    assert np.allclose(flat, flat[:1])


def test_rows_are_permutation_equivariant():
    net = ul.UlNetwork(seed=3)
    h = cnoise(2, (4, 2, 16))
    perm = rng_for(0, "perm").permutation(4)
    assert np.allclose(ul.ul_forward(net, h)[perm], ul.ul_forward(net, h[perm]))


def test_monolithic_shape_and_arch():
    net = ul.MonolithicNetwork()
    assert net.forward(np.zeros((3, 16, 2))).shape == (3, 16, 2)
    assert len([c for c in net.features.layers if type(c).__name__ == "Conv1d"]) == 6


def test_small_network_gradients():
    net = ul.UlNetwork(conv_widths=(3, 4), hidden=4, recovery_width=3)
    for p in net.parameters().values():
        p += 0.05 * rng_for(0, "jit").standard_normal(p.shape)
    assert grad_check(net, rng_for(1, "x").standard_normal((2, 5, 2))).passed


def test_build_network_round_trip(tmp_path):
    for net in (ul.UlNetwork(seed=4, bidirectional=False), ul.MonolithicNetwork(seed=4)):
        path = tmp_path / "n.ckpt"
        save_checkpoint(path, net.parameters(), {"arch": net.arch})
        params, meta = load_checkpoint(path)
        back = ul.build_network(meta["arch"])
        assign_parameters(back, params)
        x = rng_for(0, "x").standard_normal((2, 8, 2))
        assert np.array_equal(back.forward(x), net.forward(x))
    with pytest.raises(ConfigError):
        ul.build_network({"kind": "dl"})


def test_empty_dataset_rejected():
    with pytest.raises(ConfigError):
        ul.train_ul([], TrainConfig(epochs=1))
    with pytest.raises(ConfigError):
        ul.evaluate_ul(ul.UlNetwork(), [])


def test_denoising_identity_task():
    # no interference: the network only has to learn to remove noise
    data = make_dataset(SC, 200, interference_on=False, seed=5)
    res = ul.train_ul(data, TrainConfig(epochs=6, batch_frames=8, lr=3e-3))
    assert res.heldout_nmse_rec <= res.heldout_nmse_raw
    assert res.train_loss[-1] <= res.train_loss[0]


def test_identical_frames_are_memorised():
    pair = make_dataset(SC, 1, seed=6)[0]
    res = ul.train_ul([pair] * 20, TrainConfig(epochs=30, batch_frames=4, lr=3e-3))
    assert res.train_loss[-1] < 0.05 * res.train_loss[0]


def test_training_is_seed_deterministic():
    data = make_dataset(SC, 20, seed=7)
    cfg = TrainConfig(epochs=2, batch_frames=4)
    a, b = ul.train_ul(data, cfg), ul.train_ul(data, cfg)
    assert a.learning_curve == b.learning_curve
    assert a.train_loss == b.train_loss


def test_evaluate_identity_and_oracle():
    data = make_dataset(SC, 4, seed=8)
    ident = ul.evaluate_ul(lambda h: h, data)
    per_frame = [r for r in ident if r.metric_name == "nmse_rec"]
    assert [r.y_value for r in per_frame] == [nmse(p.h_int_est, p.h_true.h) for p in data]
    truth = {id(p.h_int_est): p.h_true.h for p in data}
    oracle = ul.evaluate_ul(lambda h: truth[id(h)], data, label="oracle")
    agg = {r.metric_name: r for r in oracle if r.x_value < 0}
    assert agg["nmse_rec_mean"].y_value == 0.0
    assert agg["nmse_rec_mean"].n_samples == 4
    assert agg["nmse_rec_mean"].label == "oracle"


def test_eval_rows_columns():
    data = make_dataset(SC, 3, seed=9)
    rows = ul.eval_rows(ul.evaluate_ul(lambda h: h, data, seed=2), SC, "identity")
    assert len(rows) == 3
    assert tuple(rows[0]) == ul.EVAL_COLUMNS
    assert rows[0]["nmse_raw"] == rows[0]["nmse_rec"]
    assert (rows[0]["m"], rows[0]["n"], rows[0]["k"]) == SC.shape
    assert rows[0]["seed"] == 2
