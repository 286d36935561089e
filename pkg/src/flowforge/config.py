"""Dataset-synthesis configuration: defaults, ``key=value`` files and validation."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

from .camera import FOVY_KITTI
from .errors import ConfigError
from .filtering import DEFAULT_THRESHOLD
from .grid import DEFAULT_MAX_DEPTH, Indexing
from .synthesis import MotionConfig

DEFAULT_N_SAMPLES = 5000
DEFAULT_TRANSLATION_RANGE = (0.8, 1.2)
DEFAULT_DROPOUT = 0.10
DEFAULT_RESOLUTION = 512
SEED_ENV = "FLOWFORGE_SEED"


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_axis(text) -> tuple[float, float, float]:
    if isinstance(text, (tuple, list)):
        parts = [float(x) for x in text]
    else:
        named = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}
        if text.strip().lower() in named:
            return named[text.strip().lower()]
        parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise ValueError("axis needs three components")
    return tuple(parts)


@dataclass
class SynthConfig:
    frames: str = ""
    depth: str = ""
    out: str = ""
    n_samples: int = DEFAULT_N_SAMPLES
    resolution: int = DEFAULT_RESOLUTION
    fovy: float = FOVY_KITTI
    max_depth: float = DEFAULT_MAX_DEPTH
    translation_min: float = DEFAULT_TRANSLATION_RANGE[0]
    translation_max: float = DEFAULT_TRANSLATION_RANGE[1]
    axis: tuple = (1.0, 0.0, 0.0)
    allow_negative: bool = True
    identity_motion: bool = False
    z_threshold: float = DEFAULT_THRESHOLD
    dropout_rate: float = DEFAULT_DROPOUT
    export_kitti: bool = False
    export_npy: bool = False
    npy_normalized: bool = False
    indexing: Indexing = Indexing.SOURCE
    seed: int = 0
    workers: int = 1
    depth_png_scale: float = 256.0
    plot: bool = False

    @property
    def motion(self) -> MotionConfig:
        return MotionConfig(
            translation_range=(self.translation_min, self.translation_max),
            axis=tuple(self.axis),
            allow_negative=self.allow_negative,
            seed=self.seed,
        )

    def validate(self) -> "SynthConfig":
        checks = [
            ("n_samples", self.n_samples >= 1, "must be >= 1"),
            ("resolution", self.resolution >= 2, "must be >= 2"),
            ("fovy", 0 < self.fovy < 180, "must lie in (0, 180) degrees"),
            ("max_depth", self.max_depth > 0, "must be > 0"),
            ("translation_min", self.translation_min >= 0, "must be >= 0"),
            ("translation_max", self.translation_max >= self.translation_min, "must be >= translation_min"),
            ("z_threshold", self.z_threshold >= 0, "must be >= 0"),
            ("dropout_rate", 0 <= self.dropout_rate <= 1, "must lie in [0, 1]"),
            ("workers", self.workers >= 1, "must be >= 1"),
            ("seed", 0 <= self.seed < 2**64, "must be a non-negative 64-bit integer"),
            ("depth_png_scale", self.depth_png_scale > 0, "must be > 0"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, f"{msg} (got {getattr(self, key)!r})")
        norm = sum(a * a for a in self.axis) ** 0.5
        if abs(norm - 1.0) > 1e-9:
            raise ConfigError("axis", f"must have unit norm (got {self.axis})")
        for key in ("frames", "depth", "out"):
            if not getattr(self, key):
                raise ConfigError(key, "is required")
        dirs = [Path(self.frames).resolve(), Path(self.depth).resolve(), Path(self.out).resolve()]
        if dirs[2] in dirs[:2]:
            raise ConfigError("out", "must differ from the input directories")
        return self

    def to_text(self, exclude=()) -> str:
        lines = []
        for f in dataclasses.fields(self):
            if f.name in exclude:
                continue
            value = getattr(self, f.name)
            if isinstance(value, Indexing):
                value = value.value
            elif isinstance(value, tuple):
                value = ",".join(repr(float(x)) for x in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(SynthConfig)}


def _coerce(key: str, value):
    if key not in _FIELDS:
        raise ConfigError(key, "unknown configuration key")
    default = getattr(SynthConfig(), key)
    try:
        if isinstance(value, str):
            if isinstance(default, bool):
                return _parse_bool(value)
            if isinstance(default, Indexing):
                return Indexing(value.strip().lower())
            if key == "axis":
                return _parse_axis(value)
            if isinstance(default, int):
                return int(value, 0)
            if isinstance(default, float):
                return float(value)
            return value.strip()
        if key == "axis":
            return _parse_axis(value)
        if isinstance(default, Indexing):
            return Indexing(value)
        return type(default)(value)
    except (ValueError, TypeError) as exc:
        raise ConfigError(key, f"invalid value {value!r}: {exc}") from exc


def parse_config_text(text: str) -> dict:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {n}", f"expected key=value, got {raw!r}")
        key = key.strip().replace("-", "_")
        values[key] = _coerce(key, value.strip())
    return values


def load_config(path=None, overrides=None, environ=None) -> SynthConfig:
    """Build a config from defaults, an optional ``key=value`` file and overrides (overrides win).

    When no seed is given anywhere, ``$FLOWFORGE_SEED`` is used if set.
    """
    environ = os.environ if environ is None else environ
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        values.update(parse_config_text(text))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, value)
    if "seed" not in values and environ.get(SEED_ENV):
        values["seed"] = _coerce("seed", environ[SEED_ENV])
    return SynthConfig(**values)
