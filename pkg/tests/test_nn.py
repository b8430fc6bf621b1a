import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imsim.errors import ConfigError, MissingArtifactError, StateError
from imsim.nn import (AdamState, BiLstm, Conv1d, CorruptedGradient, Dense, Identity, Lstm,
                      ReLU, Sequential, adam_step, assign_parameters, clip_by_global_norm,
                      conv_stack, cross_entropy_loss, grad_check, load_checkpoint, mlp,
                      mse_loss, save_checkpoint)
from imsim.seeding import rng_for


def rng(tag="t"):
    return rng_for(0, tag)


def jitter(net, scale=0.05):
    for p in net.parameters().values():
        p += scale * rng("jit").standard_normal(p.shape)
    return net


def test_dense_identity():
    d = Dense(3, 3, rng())
    d.params["w"][...] = np.eye(3)
    x = rng("x").standard_normal((2, 3))
    assert np.array_equal(d.forward(x), x)


def test_conv_same_shift_example():
    c = Conv1d(1, 1, rng())
    c.params["kernels"][...] = np.array([1.0, 0.0]).reshape(1, 1, 2)
    x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1)
    assert list(c.forward(x).ravel()) == [0.0, 1.0, 2.0, 3.0]


def test_conv_lengths():
    x = np.zeros((2, 7, 3))
    assert Conv1d(3, 4, rng()).forward(x).shape == (2, 7, 4)
    assert Conv1d(3, 4, rng(), mode="valid").forward(x).shape == (2, 6, 4)
    with pytest.raises(ConfigError):
        Conv1d(3, 4, rng(), mode="full")
    with pytest.raises(ConfigError):
        Conv1d(2, 4, rng()).forward(x)


def test_lstm_zero_parameters_give_zero_output():
    lstm = Lstm(3, 4, rng())
    for p in lstm.parameters().values():
        p[...] = 0.0
    out = lstm.forward(rng("x").standard_normal((2, 5, 3)))
    assert np.array_equal(out, np.zeros((2, 5, 4)))


def test_lstm_is_causal():
    lstm = Lstm(2, 3, rng())
    x = rng("x").standard_normal((1, 6, 2))
    y = x.copy()
    y[:, 4:] += 1.0
    assert np.allclose(lstm.forward(x)[:, :4], lstm.forward(y)[:, :4])


def test_bilstm_width():
    assert BiLstm(2, 3, rng()).forward(np.zeros((1, 5, 2))).shape == (1, 5, 6)


def test_backward_before_forward():
    with pytest.raises(StateError):
        Dense(2, 2, rng()).backward(np.zeros((1, 2)))
    with pytest.raises(StateError):
        Lstm(2, 2, rng()).backward(np.zeros((1, 3, 2)))


def test_mse_examples():
    x = rng("x").standard_normal(5)
    val, grad = mse_loss(x, x)
    assert val == 0.0
    assert not np.any(grad)
    assert mse_loss(np.ones(2), np.zeros(2))[0] == 1.0
    with pytest.raises(ConfigError):
        mse_loss(np.ones(2), np.ones(3))


def test_dense_bias_gradient_closed_form():
    d = Dense(3, 2, rng())
    x = rng("x").standard_normal((4, 3))
    out = d.forward(x)
    _, dy = mse_loss(out, np.zeros_like(out))
    d.backward(dy)
    assert np.allclose(d.grads["b"], (2 * out / out.size).sum(axis=0))


def test_cross_entropy_uniform_and_gradient():
    val, _ = cross_entropy_loss(np.zeros((3, 5, 4)), np.zeros((3, 5), dtype=int))
    assert val == pytest.approx(np.log(4))
    logits = rng("l").standard_normal((2, 3, 4))
    labels = rng("y").integers(0, 4, size=(2, 3))
    _, grad = cross_entropy_loss(logits, labels)
    eps = 1e-6
    num = np.empty_like(logits)
    for i in np.ndindex(logits.shape):
        up, down = logits.copy(), logits.copy()
        up[i] += eps
        down[i] -= eps
        diff = cross_entropy_loss(up, labels)[0] - cross_entropy_loss(down, labels)[0]
        num[i] = diff / (2 * eps)
    assert np.allclose(grad, num, atol=1e-8)
    with pytest.raises(ConfigError):
        cross_entropy_loss(logits, labels + 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_losses_non_negative(seed):
    r = rng_for(seed, "loss")
    a, b = r.standard_normal(6), r.standard_normal(6)
    assert mse_loss(a, b)[0] >= 0
    assert cross_entropy_loss(r.standard_normal((3, 4)), r.integers(0, 4, 3))[0] >= 0


@pytest.mark.parametrize("make", [
    lambda: Dense(3, 4, rng()),
    lambda: Conv1d(3, 2, rng()),
    lambda: Conv1d(3, 2, rng(), mode="valid"),
    lambda: Sequential(Dense(3, 5, rng()), ReLU(), Dense(5, 2, rng())),
    lambda: Lstm(3, 4, rng()),
    lambda: BiLstm(3, 2, rng()),
    lambda: conv_stack([3, 4, 2], rng()),
    lambda: mlp([3, 6, 2], rng()),
], ids=["dense", "conv_same", "conv_valid", "relu", "lstm", "bilstm", "conv_stack", "mlp"])
def test_layer_gradients(make):
    net = jitter(make())
    x = rng("gx").standard_normal((2, 5, 3))
    rep = grad_check(net, x)
    assert rep.passed, rep.line()


def test_identity_net_passes_grad_check():
    assert grad_check(Identity(), rng("x").standard_normal((2, 3))).passed


def test_corrupted_gradient_fails():
    rep = grad_check(CorruptedGradient(Dense(3, 4, rng())), rng("x").standard_normal((2, 5, 3)))
    assert not rep.passed
    assert rep.max_rel_err > 1e-3


def test_grad_check_size_limit():
    with pytest.raises(ValueError):
        grad_check(Dense(200, 100, rng()), np.zeros((1, 200)))
    rep = grad_check(Dense(200, 100, rng()), np.ones((1, 200)), per_tensor=5, check_input=False)
    assert rep.n_checked == 10


def test_adam_zero_gradient():
    p = {"w": np.array([1.0, -2.0])}
    state = AdamState()
    adam_step(p, {"w": np.zeros(2)}, state)
    assert np.array_equal(p["w"], [1.0, -2.0])
    assert state.step == 1


def test_adam_first_step_is_lr():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.array([0.3, -5.0])}, AdamState(lr=0.01))
    assert np.allclose(p["w"], [1.0 - 0.01, -2.0 + 0.01], atol=1e-9)


def test_adam_deterministic():
    def run():
        p = {"w": np.zeros(3)}
        st_ = AdamState()
        for t in range(5):
            adam_step(p, {"w": np.array([1.0, t, -t])}, st_)
        return p["w"]
    assert np.array_equal(run(), run())


def test_clip_by_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_by_global_norm(g, 1.0) == pytest.approx(5.0)
    assert np.sqrt(g["a"] ** 2 + g["b"] ** 2)[0] == pytest.approx(1.0)
    h = {"a": np.array([0.1])}
    clip_by_global_norm(h, 1.0)
    assert h["a"][0] == 0.1


def test_init_is_seed_deterministic():
    a = mlp([3, 4, 2], rng_for(5, "init")).parameters()
    b = mlp([3, 4, 2], rng_for(5, "init")).parameters()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_checkpoint_round_trip(tmp_path):
    net = Sequential(Conv1d(2, 3, rng()), ReLU(), Lstm(3, 4, rng()))
    path = tmp_path / "n.ckpt"
    save_checkpoint(path, net.parameters(), {"kind": "demo"})
    raw = path.read_bytes()
    assert raw[:4] == b"IMCK"
    params, meta = load_checkpoint(path)
    assert meta == {"kind": "demo"}
    other = Sequential(Conv1d(2, 3, rng("o")), ReLU(), Lstm(3, 4, rng("o")))
    assign_parameters(other, params)
    x = rng("x").standard_normal((1, 4, 2))
    assert np.array_equal(other.forward(x), net.forward(x))
    with pytest.raises(ConfigError):
        assign_parameters(Dense(2, 2, rng()), params)


def test_checkpoint_errors(tmp_path):
    with pytest.raises(MissingArtifactError):
        load_checkpoint(tmp_path / "missing.ckpt")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOPE")
    with pytest.raises(ConfigError):
        load_checkpoint(bad)
