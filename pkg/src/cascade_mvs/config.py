"""Pipeline configuration: defaults, a flat key = value file, and overrides."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .hypothesis import ADIA_MODES, SIGMA_FLOOR


@dataclass
class PipelineConfig:
    planes: tuple[int, int, int] = (64, 32, 8)
    intervals: tuple[float, float, float] = (4.0, 2.0, 1.0)
    scales: tuple[float, float, float] = (0.25, 0.5, 1.0)
    # 0 means (depth_max - depth_min) / (planes[0] * intervals[0])
    base_interval: float = 0.0
    lam: float = 1.5
    lambda_l1: float = 1.0
    lambda_is: float = 0.1
    sigma_floor: float = SIGMA_FLOOR
    temperature: float = 0.02
    adia_mode: str = "literal"
    gde: bool = True
    is_loss: bool = True
    n_views: int = 4
    retain_volumes: bool = False
    conf_min: float = 0.5
    reproj_max: float = 1.0
    rel_depth_max: float = 0.01
    min_consistent: int = 2
    voxel: float = 0.5
    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if len(self.planes) != 3 or len(self.intervals) != 3 or len(self.scales) != 3:
            raise ValueError("planes, intervals and scales need one entry per stage")
        if any(n < 2 for n in self.planes):
            raise ValueError("every stage needs at least 2 planes")
        if not all(a < b for a, b in zip(self.scales, self.scales[1:])):
            raise ValueError("stage scales must be ascending")
        if any(s <= 0 for s in self.scales) or any(i <= 0 for i in self.intervals):
            raise ValueError("scales and intervals must be positive")
        if min(self.lambda_l1, self.lambda_is, self.base_interval) < 0:
            raise ValueError("weights must be non-negative")
        if not self.lam > 0 or not self.temperature > 0 or not self.sigma_floor > 0:
            raise ValueError("lam, temperature and sigma_floor must be positive")
        if self.adia_mode not in ADIA_MODES:
            raise ValueError(f"adia_mode must be one of {ADIA_MODES}")
        if self.n_views < 2:
            raise ValueError("need at least 2 views")

    def replace(self, **changes) -> "PipelineConfig":
        d = asdict(self)
        d.update(changes)
        return PipelineConfig(**d)

    def to_text(self) -> str:
        lines = ["[cascade]"]
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (tuple, list)):
                v = ", ".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, raw: str):
    default = PipelineConfig.__dataclass_fields__[name].default
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        kind = type(default[0])
        return tuple(kind(x) for x in raw.replace(",", " ").split())
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_overrides(pairs: dict[str, str]) -> dict:
    known = {f.name for f in fields(PipelineConfig)}
    out = {}
    for key, raw in pairs.items():
        key = key.replace("-", "_")
        if key not in known:
            raise KeyError(f"unknown configuration key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> PipelineConfig:
    """Defaults, then keys from ``path`` (INI, section ``[cascade]`` optional), then ``overrides``."""
    values: dict[str, str] = {}
    if path is not None:
        text = Path(path).read_text()
        if not text.lstrip().startswith("["):
            text = "[cascade]\n" + text
        cp = configparser.ConfigParser()
        cp.read_string(text)
        if cp.has_section("cascade"):
            values.update(cp["cascade"])
    values.update(overrides or {})
    return PipelineConfig(**parse_overrides(values))
