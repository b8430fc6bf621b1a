"""Experiment configuration: one JSON document, validated field by field.

Top-level keys (all optional, defaults are the desk profile)::

    format_version  1
    profile         "desk" | "full" (label only)
    seed            master seed, copied into scenario.seed and every train.seed
    output_dir      where artifacts go (IMSIM_OUTPUT_DIR and --out override it)
    scenario        CellScenario fields
    ul              n_frames, eval_frames, baseline, train{TrainConfig}
    dl              n_train_frames, n_eval_frames, train_sinr_db[lo, hi],
                    link{LinkConfig}, train{TrainConfig}
    sweep           sinr_grid_db, sf_grid, sf_frames, sf_epochs, antenna_configs
    timing          n_frames, batch_sizes

Unknown keys and wrongly typed values are rejected with the dotted field path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from pydantic import TypeAdapter, ValidationError

from ..errors import ConfigError
from ..phy import CellScenario
from ..records import config_hash
from ..training import SF_GRID, TrainConfig
from ..txrx.link import LinkConfig

FORMAT_VERSION = 1
FORBID = {"extra": "forbid"}


@dataclass(frozen=True)
class UlSection:
    __pydantic_config__ = FORBID

    n_frames: int = 2000
    eval_frames: int = 200
    baseline: bool = True
    train: TrainConfig = TrainConfig(epochs=10)

    def __post_init__(self):
        if self.n_frames < 2 or self.eval_frames < 1:
            raise ConfigError("n_frames must be >= 2 and eval_frames >= 1")


@dataclass(frozen=True)
class DlSection:
    __pydantic_config__ = FORBID

    n_train_frames: int = 4000
    n_eval_frames: int = 2000
    train_sinr_db: tuple[float, float] = (-12.0, 10.0)
    link: LinkConfig = LinkConfig()
    train: TrainConfig = TrainConfig(epochs=10)

    def __post_init__(self):
        if self.n_train_frames < 2 or self.n_eval_frames < 1:
            raise ConfigError("n_train_frames must be >= 2 and n_eval_frames >= 1")
        if self.train_sinr_db[0] > self.train_sinr_db[1]:
            raise ConfigError("train_sinr_db must be [low, high]")


@dataclass(frozen=True)
class SweepSection:
    __pydantic_config__ = FORBID

    sinr_grid_db: tuple[float, ...] = tuple(float(s) for s in range(-12, 11, 2))
    sf_grid: tuple[float, ...] = SF_GRID
    sf_frames: int = 600
    sf_epochs: int = 8
    antenna_configs: tuple[tuple[int, int], ...] = ((4, 2), (8, 2), (8, 4), (16, 2))

    def __post_init__(self):
        bad = [sf for sf in self.sf_grid if sf not in SF_GRID]
        if bad:
            raise ConfigError(f"sf_grid entries {bad} not in {SF_GRID}")
        if any(m < 1 or n < 1 for m, n in self.antenna_configs):
            raise ConfigError("antenna counts must be positive")
        if self.sf_frames < 2 or self.sf_epochs < 1:
            raise ConfigError("sf_frames must be >= 2 and sf_epochs >= 1")


@dataclass(frozen=True)
class TimingSection:
    __pydantic_config__ = FORBID

    n_frames: int = 1000
    batch_sizes: tuple[int, ...] = (1, 10, 100)

    def __post_init__(self):
        if self.n_frames < 1 or not self.batch_sizes or min(self.batch_sizes) < 1:
            raise ConfigError("timing needs n_frames >= 1 and positive batch sizes")


@dataclass(frozen=True)
class ExperimentConfig:
    __pydantic_config__ = FORBID

    format_version: int = FORMAT_VERSION
    profile: str = "desk"
    seed: int = 0
    output_dir: str = "out"
    scenario: CellScenario = CellScenario()
    ul: UlSection = UlSection()
    dl: DlSection = DlSection()
    sweep: SweepSection = SweepSection()
    timing: TimingSection = TimingSection()

    def __post_init__(self):
        if self.format_version != FORMAT_VERSION:
            raise ConfigError(f"unsupported format_version {self.format_version}")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Propagate the master seed into the scenario and both train sections."""
        return replace(
            self, seed=seed, scenario=replace(self.scenario, seed=seed),
            ul=replace(self.ul, train=replace(self.ul.train, seed=seed)),
            dl=replace(self.dl, train=replace(self.dl.train, seed=seed)))

    def to_dict(self) -> dict:
        return _ADAPTER.dump_python(self, mode="json")

    def digest(self) -> str:
        """Hash of everything that can change a result (not ``output_dir``)."""
        d = self.to_dict()
        d.pop("output_dir")
        return config_hash(d)


_ADAPTER = TypeAdapter(ExperimentConfig)


def _field_message(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def config_from_dict(data: dict, seed: int | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a JSON object")
    try:
        cfg = _ADAPTER.validate_python(data)
    except ValidationError as err:
        raise ConfigError(_field_message(err)) from None
    return cfg.with_seed(cfg.seed if seed is None else seed)


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from None
    return config_from_dict(data, seed)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def desk_profile() -> ExperimentConfig:
    return ExperimentConfig()


def full_profile() -> ExperimentConfig:
    """Large arrays and long training; expect days of single-core compute in this package."""
    return ExperimentConfig(
        profile="full",
        scenario=CellScenario(bs_ant=128, ue_ant=4, n_re=64),
        ul=UlSection(n_frames=10000, eval_frames=1000, train=TrainConfig(epochs=60)),
        dl=DlSection(n_train_frames=20000, n_eval_frames=10000,
                     train=TrainConfig(epochs=60)),
        sweep=SweepSection(sf_frames=2000, sf_epochs=40,
                           antenna_configs=((32, 2), (64, 2), (64, 4), (128, 4))),
        timing=TimingSection(n_frames=10000))


PROFILES = {"desk": desk_profile, "full": full_profile}
