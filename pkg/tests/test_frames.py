import numpy as np
import pytest

from imsim.errors import ConfigError
from imsim.txrx.frames import FrameOutcome, bler, block_errors, encode_frame
from imsim.txrx.ldpc import LdpcCode
from imsim.txrx.modem import Interleaver, deinterleave, indices_to_bits


def test_bler_examples():
    ok = FrameOutcome(np.zeros(4), np.zeros(4))
    bad = FrameOutcome(np.array([0, 1, 0, 0]), np.zeros(4))
    assert bler([ok] * 100) == 0.0
    assert bler([bad] + [ok] * 99) == pytest.approx(0.01)
    with pytest.raises(ConfigError):
        bler([])


def test_unconverged_frame_counts_as_error():
    assert FrameOutcome(np.zeros(4), np.zeros(4), converged=False).error


def test_block_errors_vectorised():
    dec = np.array([[0, 0], [0, 1], [0, 0]])
    truth = np.zeros((3, 2))
    flags = block_errors(dec, truth, [True, True, False])
    assert list(flags) == [False, True, True]


def test_encode_frame_chain():
    code = LdpcCode.peg(128, 64, seed=7)
    pi = Interleaver.from_seed(128, 11)
    info = np.arange(64) % 2
    f = encode_frame(info, code, pi, 4)
    assert f.c_t.shape == (64,)
    assert np.array_equal(deinterleave(indices_to_bits(f.symbol_idx, 4), pi), f.codeword)
    assert code.is_codeword(f.codeword)


def test_bler_all_failed_and_mixture():
    bad = FrameOutcome(np.ones(2), np.zeros(2))
    ok = FrameOutcome(np.zeros(2), np.zeros(2))
    assert bler([bad] * 4) == 1.0
    assert bler([bad] * 3 + [ok] * 7) == pytest.approx(0.3)


def test_zero_info_gives_zero_codeword():
    code = LdpcCode.peg(128, 64, seed=7)
    f = encode_frame(np.zeros(64, dtype=int), code, Interleaver.identity(128))
    assert not np.any(f.codeword)


def test_noiseless_chain_round_trip():
    from imsim.txrx.ldpc import bp_decode
    from imsim.txrx.modem import qam_soft_demod
    code = LdpcCode.peg(128, 64, seed=7)
    pi = Interleaver.from_seed(128, 11)
    info = np.random.default_rng(0).integers(0, 2, 64)
    f = encode_frame(info, code, pi, 16)
    llr = deinterleave(qam_soft_demod(f.c_t, 1e-4, 16), pi)
    res = bp_decode(llr, code)
    assert res.converged
    assert np.array_equal(res.info_bits(code), info)
