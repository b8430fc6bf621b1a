import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imsim.errors import ConfigError
from imsim.seeding import rng_for
from imsim.txrx.modem import (Interleaver, bit_labels, bits_to_indices, constellation,
                              deinterleave, hard_indices, indices_to_bits, interleave,
                              metric_to_llr, qam_modulate, qam_soft_demod)


def test_qpsk_mapping_example():
    s = qam_modulate([0, 0, 1, 1], 4)
    assert np.allclose(s, np.array([1 + 1j, -1 - 1j]) / np.sqrt(2))


@pytest.mark.parametrize("order", [4, 16, 64])
def test_unit_average_energy(order):
    assert np.mean(np.abs(constellation(order)) ** 2) == pytest.approx(1.0)


@pytest.mark.parametrize("order", [4, 16, 64])
def test_gray_neighbours_differ_in_one_bit(order):
    pts, lab = constellation(order), bit_labels(order)
    d = np.abs(pts[:, None] - pts[None])
    dmin = np.min(d[d > 1e-9])
    for a, b in zip(*np.nonzero(np.isclose(d, dmin))):
        assert np.sum(lab[a] != lab[b]) == 1


def test_unsupported_order():
    with pytest.raises(ConfigError):
        constellation(8)
    with pytest.raises(ConfigError):
        bits_to_indices([1, 0, 1], 4)


@pytest.mark.parametrize("order", [4, 16])
def test_bits_round_trip(order):
    bits = rng_for(0, "b").integers(0, 2, size=(3, 48))
    assert np.array_equal(indices_to_bits(bits_to_indices(bits, order), order), bits)


def brute_llr(y, nv, order):
    pts, lab = constellation(order), bit_labels(order)
    out = []
    for b in range(lab.shape[1]):
        like = np.exp(-np.abs(y - pts) ** 2 / nv)
        out.append(np.log(like[lab[:, b] == 0].sum() / like[lab[:, b] == 1].sum()))
    return np.array(out)


@pytest.mark.parametrize("order", [4, 16])
def test_soft_demod_matches_brute_force(order):
    rng = rng_for(1, "y")
    y = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    llr = qam_soft_demod(y, 0.7, order).reshape(20, -1)
    for j in range(20):
        assert np.allclose(llr[j], brute_llr(y[j], 0.7, order), atol=1e-10)


def test_soft_demod_sign_matches_bits_at_high_snr():
    bits = rng_for(2, "b").integers(0, 2, size=128)
    llr = qam_soft_demod(qam_modulate(bits, 16), 1e-3, 16)
    assert np.array_equal((llr < 0).astype(int), bits)


def test_soft_demod_rejects_bad_variance():
    with pytest.raises(ConfigError):
        qam_soft_demod(np.ones(2), 0.0)


def test_max_log_llr():
    metric = np.log(np.array([[0.7, 0.1, 0.1, 0.1]]))
    llr = metric_to_llr(metric, 4, max_log=True)
    assert llr == pytest.approx([np.log(7), np.log(7)])


def test_hard_indices():
    pts = constellation(16)
    assert np.array_equal(hard_indices(pts + 0.01, 16), np.arange(16))


def test_interleaver_round_trip_example():
    pi = Interleaver([2, 0, 1])
    assert list(interleave(np.array([10, 11, 12]), pi)) == [12, 10, 11]
    assert list(deinterleave(interleave(np.arange(3), pi), pi)) == [0, 1, 2]
    with pytest.raises(ConfigError):
        Interleaver([0, 0, 1])
    with pytest.raises(ConfigError):
        interleave(np.arange(4), pi)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.integers(0, 10_000))
def test_interleaver_round_trip_property(n, seed):
    pi = Interleaver.from_seed(n, seed)
    x = np.arange(n)
    assert np.array_equal(deinterleave(interleave(x, pi), pi), x)
    assert np.array_equal(interleave(deinterleave(x, pi), pi), x)


def test_all_qpsk_labels_distinct():
    labs = {tuple(r) for r in bit_labels(4)}
    assert labs == set(itertools.product([0, 1], repeat=2))


def test_identity_and_seeded_interleavers():
    x = np.arange(8)
    assert np.array_equal(interleave(x, Interleaver.identity(8)), x)
    assert np.array_equal(Interleaver.from_seed(8, 3).perm, Interleaver.from_seed(8, 3).perm)
