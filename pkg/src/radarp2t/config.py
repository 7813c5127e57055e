"""Pipeline configuration: defaults, the line-based ``key = value``
config-file format, and method specifiers.

Config files use dotted section keys, one assignment per line, ``#``
comments, e.g.::

    radar.samples_per_chirp = 32
    grid.voxel_size = 0.8
    methods = percentile:5, cfar:2.5
    train.epochs = 20
    seed = 7
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .detect import CfarConfig
from .errors import ConfigError
from .fmcw import RadarConfig
from .model.losses import LossWeights
from .model.network import DiscriminatorSpec, GeneratorSpec
from .model.train import TrainConfig
from .tensorize import RoiGrid


@dataclass(frozen=True)
class MethodSpec:
    """An extraction method plus its hyper-parameter: ``percentile:P`` keeps
    the top P% of cells, ``cfar:K1`` calibrates CA-CFAR to detect K1% of
    cells."""

    kind: str
    hyper: float

    def __post_init__(self):
        if self.kind not in ("percentile", "cfar"):
            raise ValueError(f"unknown method {self.kind!r}")
        if not 0.0 < self.hyper <= 100.0:
            raise ValueError("method hyper-parameter must lie in (0, 100]")

    @property
    def tag(self) -> str:
        return f"{self.kind}{self.hyper:g}"


def parse_method(text: str) -> MethodSpec:
    parts = text.strip().split(":")
    if len(parts) != 2:
        raise ConfigError(f"method must look like 'percentile:P' or 'cfar:K1', got {text!r}")
    kind, value = parts[0].strip(), parts[1].strip()
    try:
        return MethodSpec(kind=kind, hyper=float(value))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class PipelineConfig:
    radar: RadarConfig = field(default_factory=RadarConfig)
    grid: RoiGrid = field(default_factory=RoiGrid)
    methods: list = field(default_factory=lambda: [MethodSpec("percentile", 5.0)])
    weights: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    gen: GeneratorSpec = field(default_factory=GeneratorSpec)
    disc: DiscriminatorSpec = field(default_factory=DiscriminatorSpec)
    cfar: CfarConfig = field(default_factory=CfarConfig)
    collapse_mode: str = "mean"
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if not self.methods:
            raise ValueError("methods must be nonempty")
        if self.collapse_mode not in ("mean", "max"):
            raise ValueError("collapse_mode must be 'mean' or 'max'")


def _parse_int(v: str) -> int:
    return int(v, 0)


def _parse_float(v: str) -> float:
    return float(v)


def _parse_int_tuple(v: str) -> tuple:
    return tuple(int(p.strip()) for p in v.split(",") if p.strip())


def _parse_methods(v: str) -> list:
    out = [parse_method(p) for p in v.split(",") if p.strip()]
    if not out:
        raise ConfigError("methods list is empty")
    return out


# key -> (section attr, field name, caster); None section = top level
_SCHEMA = {
    "radar.carrier_frequency": ("radar", "carrier_frequency", _parse_float),
    "radar.chirp_slope": ("radar", "chirp_slope", _parse_float),
    "radar.sample_rate": ("radar", "sample_rate", _parse_float),
    "radar.samples_per_chirp": ("radar", "samples_per_chirp", _parse_int),
    "radar.chirps_per_frame": ("radar", "chirps_per_frame", _parse_int),
    "radar.azimuth_antennas": ("radar", "azimuth_antennas", _parse_int),
    "radar.elevation_antennas": ("radar", "elevation_antennas", _parse_int),
    "radar.antenna_spacing": ("radar", "antenna_spacing", _parse_float),
    "radar.noise_stddev": ("radar", "noise_stddev", _parse_float),
    "radar.window": ("radar", "window", str),
    "grid.x_min": ("grid", "x_min", _parse_float),
    "grid.x_max": ("grid", "x_max", _parse_float),
    "grid.y_min": ("grid", "y_min", _parse_float),
    "grid.y_max": ("grid", "y_max", _parse_float),
    "grid.z_min": ("grid", "z_min", _parse_float),
    "grid.z_max": ("grid", "z_max", _parse_float),
    "grid.voxel_size": ("grid", "voxel_size", _parse_float),
    "loss.lambda_l1": ("weights", "lambda_l1", _parse_float),
    "loss.lambda_perc": ("weights", "lambda_perc", _parse_float),
    "train.learning_rate": ("train", "learning_rate", _parse_float),
    "train.batch_size": ("train", "batch_size", _parse_int),
    "train.epochs": ("train", "epochs", _parse_int),
    "train.beta1": ("train", "beta1", _parse_float),
    "train.beta2": ("train", "beta2", _parse_float),
    "train.epsilon": ("train", "epsilon", _parse_float),
    "train.gan_mode": ("train", "gan_mode", str),
    "model.in_channels": ("gen", "in_channels", _parse_int),
    "model.encoder_channels": ("gen", "encoder_channels", _parse_int_tuple),
    "model.leaky_slope": ("gen", "leaky_slope", _parse_float),
    "model.head_kernel": ("gen", "head_kernel", _parse_int),
    "model.disc_channels": ("disc", "channels", _parse_int_tuple),
    "model.disc_scales": ("disc", "scales", _parse_int),
    "cfar.guard_cells": ("cfar", "guard_cells", _parse_int_tuple),
    "cfar.training_cells": ("cfar", "training_cells", _parse_int_tuple),
    "cfar.scale_factor": ("cfar", "scale_factor", _parse_float),
    "methods": (None, "methods", _parse_methods),
    "collapse.mode": (None, "collapse_mode", str),
    "seed": (None, "seed", _parse_int),
    "output_dir": (None, "output_dir", str),
}


def parse_kv_file(path) -> dict:
    """Parse a ``key = value`` file into an ordered dict of raw strings."""
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Build a :class:`PipelineConfig` from an optional config file plus
    raw-string overrides (e.g. CLI flags).  Unknown keys are errors."""
    raw = parse_kv_file(path) if path is not None else {}
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    sections = {}
    top = {}
    for key, value in raw.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        section, attr, caster = _SCHEMA[key]
        try:
            parsed = caster(value)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        if section is None:
            top[attr] = parsed
        else:
            sections.setdefault(section, {})[attr] = parsed
    cfg = PipelineConfig()
    try:
        for section, fields in sections.items():
            setattr(cfg, section, replace(getattr(cfg, section), **fields))
        for attr, value in top.items():
            setattr(cfg, attr, value)
        cfg.__post_init__()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg
