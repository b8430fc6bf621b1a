"""Coded frames and block-error accounting."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError
from .ldpc import LdpcCode, ldpc_encode
from .modem import Interleaver, bits_per_symbol, bits_to_indices, constellation, interleave


@dataclass(frozen=True)
class CodedFrame:
    info_bits: np.ndarray
    codeword: np.ndarray
    interleaved: np.ndarray
    symbol_idx: np.ndarray
    c_t: np.ndarray
    c_i: np.ndarray | None
    qam_order: int

    def __post_init__(self):
        nb = bits_per_symbol(self.qam_order)
        if self.c_t.size != self.codeword.size // nb:
            raise ConfigError("symbol count must equal n_code / log2(order)")


def encode_frame(info_bits, code: LdpcCode, pi: Interleaver, order: int = 4) -> CodedFrame:
    cw = ldpc_encode(info_bits, code)
    il = interleave(cw, pi)
    idx = bits_to_indices(il, order)
    return CodedFrame(np.asarray(info_bits, dtype=np.uint8), cw, il, idx,
                      constellation(order)[idx], None, order)


@dataclass(frozen=True)
class FrameOutcome:
    decoded: np.ndarray
    truth: np.ndarray
    converged: bool = True

    @property
    def error(self) -> bool:
        return (not self.converged) or bool(np.any(self.decoded != self.truth))


def bler(frames: Sequence[FrameOutcome]) -> float:
    if len(frames) == 0:
        raise ConfigError("bler needs at least one frame")
    return sum(f.error for f in frames) / len(frames)


def block_errors(decoded_info, truth_info, converged) -> np.ndarray:
    """Vectorised per-frame error flags for [batch][k_info] arrays."""
    wrong = np.any(np.asarray(decoded_info) != np.asarray(truth_info), axis=-1)
    return wrong | ~np.asarray(converged, dtype=bool)
