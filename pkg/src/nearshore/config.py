"""Pipeline configuration: one YAML document with a complete defaults layer."""
from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .detector import DetectorConfig
from .mapper import MapperConfig
from .pipeline import MAP_VARIANTS
from .tracker import TrackerConfig


class ConfigError(ValueError):
    pass


DEFAULT_GRID = {"origin": [-60.0, -20.0], "cell_size": 0.5, "n_cols": 240, "n_rows": 200}


@dataclass
class InputPaths:
    """File names, relative to ``data_dir`` unless absolute."""

    lidar: str = "lidar.csv"
    poses: str = "poses.csv"
    calibration: str = "calibration.json"
    enc: str = "enc.geojson"
    masks: dict[str, str] = field(default_factory=dict)  # camera -> file; empty means masks_<camera>.json
    truth: str = "truth.csv"
    truth_map: str = "truth_map.pgm"
    docked_map: str = "docked_footprint.pgm"
    coverage_map: str = "coverage_region.pgm"


@dataclass
class ExperimentConfig:
    map_variant: str = "precise"
    margin_m: float = 2.0

    def __post_init__(self):
        if self.map_variant not in MAP_VARIANTS:
            raise ConfigError(f"map_variant must be one of {', '.join(MAP_VARIANTS)}, got {self.map_variant!r}")
        if self.margin_m < 0:
            raise ConfigError("margin_m must be non-negative")


@dataclass
class PipelineConfig:
    scenario: str | None = None
    seed: int = 0
    data_dir: str = "data"
    out_dir: str = "out"
    inputs: InputPaths = field(default_factory=InputPaths)
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    mask_tolerance_s: float = 0.05
    mapper: MapperConfig = field(default_factory=MapperConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    base_dir: str = field(default=".", compare=False, repr=False)  # where relative paths resolve; not serialized

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict | None, base_dir: str | Path = ".") -> "PipelineConfig":
        d = dict(d or {})
        nested = {"inputs": InputPaths, "mapper": MapperConfig, "detector": DetectorConfig,
                  "tracker": TrackerConfig, "experiment": ExperimentConfig}
        kwargs = {}
        known = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for key, value in d.items():
            if key in nested:
                kwargs[key] = _build(nested[key], value, key)
            else:
                kwargs[key] = value
        if "grid" in kwargs:
            grid = dict(DEFAULT_GRID)
            grid.update(kwargs["grid"] or {})
            kwargs["grid"] = grid
        try:
            return cls(**kwargs, base_dir=str(base_dir))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    # path helpers
    def resolve(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def data_path(self) -> Path:
        return self.resolve(self.data_dir)

    @property
    def out_path(self) -> Path:
        return self.resolve(self.out_dir)

    def input(self, name: str) -> Path:
        p = Path(getattr(self.inputs, name))
        return p if p.is_absolute() else self.data_path / p

    def mask_path(self, camera: str) -> Path:
        p = Path(self.inputs.masks.get(camera, f"masks_{camera}.json"))
        return p if p.is_absolute() else self.data_path / p


def _build(cls, value, where: str):
    if value is None:
        return cls()
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(value) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {', '.join(sorted(unknown))}")
    try:
        return cls(**value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: str | Path | None) -> PipelineConfig:
    """Parse a YAML config; relative paths inside resolve against the file's directory."""
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return PipelineConfig.from_dict(doc, base_dir=path.parent)
