"""Run configuration: one YAML document with a section per module.

Every section is a frozen dataclass whose defaults are the documented
defaults; unknown keys anywhere raise :class:`ConfigError`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .csi import DopplerConfig
from .errors import ConfigError
from .fusion import FusionConfig
from .geometry import Scene
from .insole import InsoleConfig
from .simulator import ScenarioConfig


@dataclass(frozen=True)
class SceneConfig:
    """Device placement in world coordinates (metres)."""

    tx_pos: tuple = (0.0, 0.0)
    rx_pos: tuple = (4.0, 0.0)
    carrier_freq: float = 5.32e9
    antenna_spacing: float | None = None
    area: tuple | None = None
    array_axis_deg: float | None = None

    def build(self) -> Scene:
        axis = None if self.array_axis_deg is None else np.deg2rad(self.array_axis_deg)
        return Scene.from_world(self.tx_pos, self.rx_pos, self.carrier_freq,
                                self.antenna_spacing, self.area, axis)


@dataclass(frozen=True)
class CsiSection:
    denoise: bool = True
    sg_window: int = 11
    sg_order: int = 2
    doppler: DopplerConfig = field(default_factory=DopplerConfig)


@dataclass(frozen=True)
class SweepConfig:
    seeds: int = 50
    seed_base: int = 0
    level: str = "measurement"
    n_steps: int = 4
    margin: float = 0.2
    min_abs_y: float = 0.3
    min_ratio: float = 0.3
    workers: int = 1

    def __post_init__(self):
        if self.level not in ("measurement", "signal"):
            raise ConfigError(f"sweep.level must be 'measurement' or 'signal', not {self.level!r}")


@dataclass(frozen=True)
class RunConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    csi: CsiSection = field(default_factory=CsiSection)
    insole: InsoleConfig = field(default_factory=InsoleConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **sections) -> "RunConfig":
        return dataclasses.replace(self, **sections)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _tupleize(value):
    if isinstance(value, list):
        return tuple(_tupleize(v) for v in value)
    return value


def _build(cls, data, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        hint = hints[key]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value, f"{where}.{key}" if where else key)
        else:
            kwargs[key] = _tupleize(value)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def from_dict(data: dict | None) -> RunConfig:
    return _build(RunConfig, data, "")


def load_config(path) -> RunConfig:
    """Read a YAML run configuration; missing sections take their defaults."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    try:
        return from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def dump_config(cfg: RunConfig, path=None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
