from .combining import irc_combine, mrc_combine, residual_covariance, smooth_channel
from .frames import CodedFrame, FrameOutcome, bler, block_errors, encode_frame
from .ldpc import DecodeResult, LdpcCode, bp_decode, ldpc_encode
from .link import DlBatch, DlLink, LinkConfig
from .modem import (Interleaver, constellation, deinterleave, interleave, qam_modulate,
                    qam_soft_demod)

__all__ = [
    "CodedFrame", "DecodeResult", "DlBatch", "DlLink", "FrameOutcome", "Interleaver",
    "LdpcCode", "LinkConfig", "bler", "block_errors", "bp_decode", "constellation",
    "deinterleave", "encode_frame", "interleave", "irc_combine", "ldpc_encode",
    "mrc_combine", "qam_modulate", "qam_soft_demod", "residual_covariance",
    "smooth_channel",
]
