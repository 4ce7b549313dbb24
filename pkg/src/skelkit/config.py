"""Layered run configuration: documented defaults, file values, flag overrides.

The resolved config is dumped verbatim into every output tree so any
artifact can be traced back to the exact thresholds that produced it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .errors import ValidationError
from .metrics import MetricsConfig
from .rectify import RansacParams
from .skeleton import RenderStyle
from .track import HoiConfig, OneEuroParams


@dataclass
class RenderConfig:
    width: int = 720
    height: int = 480
    line_radius: float = 3.0
    joint_radius: float = 4.0
    joint_color: tuple = (255, 255, 255)
    background: tuple = (0, 0, 0)

    def style(self) -> RenderStyle:
        return RenderStyle(self.line_radius, self.joint_radius,
                           tuple(self.joint_color), tuple(self.background))

    @property
    def size(self):
        return (self.width, self.height)


@dataclass
class RectifyConfig:
    tau_med: float = 8.0
    tau_frac: float = 0.25
    min_pairs: int = 8
    ransac_threshold_px: float = 2.0
    ransac_max_iters: int = 500

    def ransac(self, seed: int = 0) -> RansacParams:
        return RansacParams(self.ransac_threshold_px, self.ransac_max_iters, seed)


@dataclass
class SamplingConfig:
    length: int = 25
    tau_g: float = 0.05
    p_event: float = 0.7


@dataclass
class Config:
    track: HoiConfig = field(default_factory=HoiConfig)
    rectify: RectifyConfig = field(default_factory=RectifyConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)

    def to_dict(self):
        return asdict(self)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @staticmethod
    def load(path=None, overrides=()):
        cfg = Config()
        if path is not None:
            with open(path) as fh:
                data = json.load(fh)
            for section, values in data.items():
                _apply_section(cfg, section, values)
        for ov in overrides:
            if "=" not in ov:
                raise ValidationError(f"override must look like section.key=value: {ov}")
            dotted, raw = ov.split("=", 1)
            parts = dotted.split(".")
            if len(parts) < 2:
                raise ValidationError(f"override must name section.key: {ov}")
            _apply_section(cfg, parts[0], {".".join(parts[1:]): json.loads(raw)})
        return cfg


def _apply_section(cfg, section, values):
    if not hasattr(cfg, section):
        raise ValidationError(f"unknown config section: {section}")
    target = getattr(cfg, section)
    for key, value in values.items():
        obj, attr = target, key
        while "." in attr:
            head, attr = attr.split(".", 1)
            obj = getattr(obj, head)
        if not hasattr(obj, attr):
            raise ValidationError(f"unknown config key: {section}.{key}")
        current = getattr(obj, attr)
        if isinstance(current, OneEuroParams) and isinstance(value, dict):
            setattr(obj, attr, OneEuroParams(**{**asdict(current), **value}))
        elif isinstance(current, tuple) and isinstance(value, list):
            setattr(obj, attr, tuple(value))
        else:
            setattr(obj, attr, value)
    if hasattr(target, "__post_init__"):
        target.__post_init__()
