"""Dataset manifests and event-biased clip window sampling."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .records import SCHEMA_VERSION

_FILE_FIELDS = ("frame_dir", "camera_file", "state_log", "detection_file",
                "correspondence_file")


@dataclass
class ClipSpec:
    clip_id: str
    frame_dir: str = None
    camera_file: str = None
    state_log: str = None
    detection_file: str = None
    correspondence_file: str = None
    caption: str = None
    fps: float = 30.0
    excluded: bool = False  # set by externally computed filters


@dataclass
class ClipWindow:
    clip_id: str
    start_frame: int
    length: int = 25
    fps: float = 30.0


@dataclass
class Manifest:
    clips: list

    def __post_init__(self):
        ids = [c.clip_id for c in self.clips]
        if len(set(ids)) != len(ids):
            raise ValidationError("clip_ids must be unique")

    def clip(self, clip_id):
        for c in self.clips:
            if c.clip_id == clip_id:
                return c
        raise ValidationError(f"unknown clip_id: {clip_id}")

    def save(self, path):
        with open(path, "w") as fh:
            json.dump({
                "schema_version": SCHEMA_VERSION,
                "clips": [asdict(c) for c in self.clips],
            }, fh, sort_keys=True, indent=2)
            fh.write("\n")

    @staticmethod
    def load(path, check_files=True):
        with open(path) as fh:
            data = json.load(fh)
        try:
            clips = [ClipSpec(**c) for c in data["clips"]]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{path}: bad manifest: {exc}") from exc
        base = os.path.dirname(os.path.abspath(path))
        for c in clips:
            for name in _FILE_FIELDS:
                rel = getattr(c, name)
                if rel is None:
                    continue
                resolved = rel if os.path.isabs(rel) else os.path.join(base, rel)
                if check_files and not os.path.exists(resolved):
                    raise ValidationError(
                        f"{path}: clip {c.clip_id}: {name} missing: {resolved}")
                setattr(c, name, resolved)
        return Manifest(clips)


def gripper_events(state_records, tau_g: float) -> list:
    """Frames where the jaw openness jumps by more than tau_g."""
    opens = [r.openness for r in state_records]
    return [i for i in range(1, len(opens))
            if abs(opens[i] - opens[i - 1]) > tau_g]


def sample_clips(state_records, n: int, length: int = 25, tau_g: float = 0.05,
                 p_event: float = 0.7, seed: int = 0, clip_id: str = "",
                 fps: float = 30.0) -> list:
    """Sample clip windows biased toward gripper state changes.

    With probability ``p_event`` a window is centered uniformly within
    +-length/2 frames of a random gripper-change event, otherwise its
    start is uniform over all valid starts. Starts are clamped so every
    window lies inside the log. Deterministic given the seed. Without any
    events the sampling is purely uniform.
    """
    total = len(state_records)
    if total < length:
        raise ValidationError(f"log length {total} is shorter than window {length}")
    events = gripper_events(state_records, tau_g)
    rng = np.random.default_rng(seed)
    max_start = total - length
    windows = []
    for _ in range(n):
        if events and rng.random() < p_event:
            event = events[rng.integers(len(events))]
            offset = int(rng.integers(-(length // 2), length // 2 + 1))
            start = event + offset - length // 2
        else:
            start = int(rng.integers(max_start + 1))
        start = min(max(start, 0), max_start)
        windows.append(ClipWindow(clip_id, start, length, fps))
    return windows
