"""Inference latency measurement (report only, never a pass/fail gate)."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigError

REFERENCE_FRAME_US = 144.0
FRAME_BUDGET_US = 1000.0


@dataclass(frozen=True)
class LatencyStats:
    batch_size: int
    n_frames: int
    mean_us: float
    p50_us: float
    p95_us: float

    def line(self) -> str:
        return (f"batch {self.batch_size:>4}: mean {self.mean_us:9.1f} us/frame  "
                f"p50 {self.p50_us:9.1f}  p95 {self.p95_us:9.1f}  "
                f"(reference {REFERENCE_FRAME_US:.0f} us, budget {FRAME_BUDGET_US:.0f} us)")


def measure_inference(infer: Callable[[np.ndarray], object], inputs: np.ndarray,
                      batch_sizes: Sequence[int] = (1, 10, 100),
                      n_frames: int = 1000) -> list[LatencyStats]:
    """Per-frame latency of ``infer`` over at least ``n_frames`` frames per batch size.

    ``inputs`` holds one frame per leading index and is cycled through. Each
    batch's wall time is divided by its size; statistics are over batches.
    """
    if inputs.shape[0] < 1:
        raise ConfigError("timing needs at least one input frame")
    if n_frames < 1:
        raise ConfigError("n_frames must be positive")
    infer(inputs[:1])  # warm-up
    out = []
    for bsz in batch_sizes:
        n_batches = -(-n_frames // bsz)
        per_frame = np.empty(n_batches)
        for j in range(n_batches):
            idx = np.arange(j * bsz, (j + 1) * bsz) % inputs.shape[0]
            x = inputs[idx]
            t0 = time.perf_counter()
            infer(x)
            per_frame[j] = (time.perf_counter() - t0) / bsz * 1e6
        out.append(LatencyStats(int(bsz), int(n_batches * bsz), float(per_frame.mean()),
                                float(np.percentile(per_frame, 50)),
                                float(np.percentile(per_frame, 95))))
    return out
