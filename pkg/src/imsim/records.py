"""Experiment datapoints and stable configuration hashing."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields


def config_hash(obj) -> str:
    """SHA-256 prefix of the canonical (key-sorted) JSON encoding."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _default(o):
    if hasattr(o, "to_dict"):
        return o.to_dict()
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


@dataclass(frozen=True)
class MetricsRecord:
    experiment_id: str
    config_hash: str
    seed: int
    metric_name: str
    x_value: float
    y_value: float
    n_samples: int
    wall_clock_ms: float = 0.0
    label: str = ""

    def __post_init__(self):
        if not math.isfinite(self.y_value):
            raise ValueError(f"non-finite y_value in {self.metric_name}")

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_row(self) -> dict:
        return asdict(self)
