"""Hand tracklet building, filtering, gap interpolation, and smoothing.

The four-stage cleanup over noisy per-frame hand detections:
seed/associate tracklets by IoU, fix handedness by weighted majority,
merge split tracklets, cap tracklets per hand, interpolate short gaps,
then low-pass the joint trajectories with an adaptive one-euro filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError

LEFT = "left"
RIGHT = "right"


@dataclass
class Detection:
    frame_index: int
    box: tuple
    confidence: float
    handedness: str
    joints2d: np.ndarray = None
    track_id: int = None  # set when an external tracker supplied identities

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise ValidationError(f"box must be well-ordered, got {self.box}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError("confidence must be in [0, 1]")
        if self.handedness not in (LEFT, RIGHT):
            raise ValidationError(f"handedness must be left/right, got {self.handedness}")
        if self.joints2d is not None:
            self.joints2d = np.asarray(self.joints2d, dtype=np.float64)
            if self.joints2d.ndim != 2 or self.joints2d.shape[1] != 2:
                raise ValidationError("joints2d must be Nx2")


@dataclass
class TrackEntry:
    frame_index: int
    box: tuple
    confidence: float
    handedness: str
    joints2d: np.ndarray = None
    interpolated: bool = False


@dataclass
class Tracklet:
    id: int
    entries: list
    handedness: str = None
    source: str = "seeded"

    def __post_init__(self):
        frames = [e.frame_index for e in self.entries]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValidationError("tracklet frames must be strictly increasing")
        self._by_frame = {e.frame_index: e for e in self.entries}

    @property
    def frames(self):
        return [e.frame_index for e in self.entries]

    @property
    def first_frame(self):
        return self.entries[0].frame_index

    @property
    def last_frame(self):
        return self.entries[-1].frame_index

    def entry_at(self, frame_index):
        return self._by_frame.get(frame_index)

    def box_at(self, frame_index):
        e = self._by_frame.get(frame_index)
        return e.box if e else None

    def mean_confidence(self):
        return float(np.mean([e.confidence for e in self.entries]))


@dataclass
class OneEuroParams:
    min_cutoff: float = 1.0
    beta: float = 0.007
    d_cutoff: float = 1.0
    rate: float = 30.0

    def __post_init__(self):
        if min(self.min_cutoff, self.beta, self.d_cutoff, self.rate) <= 0:
            raise ValidationError("one-euro parameters must be strictly positive")


@dataclass
class HoiConfig:
    theta_iou: float = 0.5
    gap_limit: int = 10
    h_min: float = 0.6
    merge_gap: int = 15
    theta_merge: float = 0.3
    max_per_hand: int = 1
    max_gap: int = 12
    one_euro: OneEuroParams = field(default_factory=OneEuroParams)
    use_external_tracks: bool = False


def box_iou(a, b) -> float:
    """Intersection over union of two well-ordered (x1,y1,x2,y2) boxes."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def _group_by_frame(detections):
    grouped = {}
    for d in detections:
        grouped.setdefault(d.frame_index, []).append(d)
    return grouped


def _entry_from(det):
    return TrackEntry(det.frame_index, tuple(det.box), det.confidence,
                      det.handedness, det.joints2d)


def _predict_box(prev, cur, frame):
    """Constant-velocity extrapolation of the last two boxes to ``frame``.

    ``prev`` and ``cur`` are (frame, box) of the last two adoptions (prev
    may be None); the per-frame velocity keeps advancing the prediction
    through missed frames.
    """
    if prev is None:
        return cur[1]
    rate = (frame - cur[0]) / (cur[0] - prev[0])
    return tuple(c + rate * (c - p) for c, p in zip(cur[1], prev[1]))


def propagate_track(seed: Detection, detections_by_frame, theta_iou: float = 0.5,
                    gap_limit: int = 10, track_id: int = 0) -> Tracklet:
    """Grow a tracklet forward and backward from a seed detection.

    Each step predicts the next box by constant-velocity extrapolation and
    adopts the detection with maximal IoU >= theta_iou against the
    prediction; the walk stops after ``gap_limit`` consecutive frames
    without an adoption.
    """
    frames = sorted(detections_by_frame)
    fmin, fmax = frames[0], frames[-1]
    adopted = {seed.frame_index: _entry_from(seed)}

    for direction in (1, -1):
        prev, cur = None, (seed.frame_index, seed.box)
        misses = 0
        f = seed.frame_index + direction
        while fmin <= f <= fmax and misses < gap_limit:
            pred = _predict_box(prev, cur, f)
            best, best_iou = None, theta_iou
            for d in detections_by_frame.get(f, ()):
                iou = box_iou(pred, d.box)
                if iou >= best_iou:
                    best, best_iou = d, iou
            if best is not None:
                adopted[f] = _entry_from(best)
                prev, cur = cur, (f, best.box)
                misses = 0
            else:
                misses += 1
            f += direction

    entries = [adopted[f] for f in sorted(adopted)]
    return Tracklet(track_id, entries, source="seeded")


def build_tracklets(detections, theta_iou: float = 0.5, gap_limit: int = 10):
    """Seed tracklets greedily by confidence, then associate all detections.

    A detection seeds a new tracklet only when its IoU against every
    existing tracklet's box at that frame is below theta_iou. Afterwards
    every detection is associated to every tracklet whose box at that
    frame overlaps by at least theta_iou (one detection may land in
    several tracklets). Ties in confidence break by (frame_index, x1, y1).
    Returns (tracklets, association map keyed by tracklet id).
    """
    if not detections:
        return [], {}
    by_frame = _group_by_frame(detections)
    order = sorted(detections,
                   key=lambda d: (-d.confidence, d.frame_index, d.box[0], d.box[1]))
    tracklets = []
    for det in order:
        covered = [t for t in tracklets if t.box_at(det.frame_index) is not None]
        if any(box_iou(det.box, t.box_at(det.frame_index)) >= theta_iou
               for t in covered):
            continue
        tracklets.append(propagate_track(det, by_frame, theta_iou, gap_limit,
                                         track_id=len(tracklets)))
    assoc = {t.id: [] for t in tracklets}
    for f in sorted(by_frame):
        for det in sorted(by_frame[f], key=lambda d: (-d.confidence, d.box[0], d.box[1])):
            for t in tracklets:
                tb = t.box_at(f)
                if tb is not None and box_iou(det.box, tb) >= theta_iou:
                    assoc[t.id].append((f, det))
    return tracklets, assoc


def build_tracklets_external(detections):
    """Group detections by precomputed track ids (external tracker backend)."""
    groups = {}
    for d in detections:
        if d.track_id is None:
            raise ValidationError("external-track mode requires track_id on every detection")
        groups.setdefault(d.track_id, []).append(d)
    tracklets, assoc = [], {}
    for tid in sorted(groups):
        dets = sorted(groups[tid], key=lambda d: d.frame_index)
        entries = [_entry_from(d) for d in dets]
        t = Tracklet(tid, entries, source="seeded")
        tracklets.append(t)
        assoc[tid] = [(d.frame_index, d) for d in dets]
    return tracklets, assoc


def handedness_filter(tracklets, assoc, h_min: float = 0.6):
    """Assign confidence-weighted majority handedness; drop ambiguous tracklets.

    Minority-label associations are removed; a tracklet whose majority
    share falls below ``h_min`` is dropped entirely.
    """
    kept = []
    for t in tracklets:
        pairs = assoc.get(t.id, [])
        if not pairs:
            continue
        weights = {LEFT: 0.0, RIGHT: 0.0}
        for _, det in pairs:
            weights[det.handedness] += det.confidence
        total = weights[LEFT] + weights[RIGHT]
        label = LEFT if weights[LEFT] >= weights[RIGHT] else RIGHT
        if total <= 0 or weights[label] / total < h_min:
            assoc.pop(t.id, None)
            continue
        assoc[t.id] = [(f, d) for f, d in pairs if d.handedness == label]
        t.handedness = label
        kept.append(t)
    return kept


def _merge_two(a: Tracklet, b: Tracklet) -> Tracklet:
    """Union of entries; overlapping frames keep the higher-confidence box."""
    merged = {e.frame_index: e for e in a.entries}
    for e in b.entries:
        old = merged.get(e.frame_index)
        if old is None or e.confidence > old.confidence:
            merged[e.frame_index] = e
    entries = [merged[f] for f in sorted(merged)]
    return Tracklet(a.id, entries, handedness=a.handedness, source="merged")


def merge_tracklets(tracklets, assoc, merge_gap: int = 15, theta_merge: float = 0.3):
    """Merge same-handed tracklets split by short dropouts, to fixpoint.

    Two tracklets merge when their handedness matches, the later one
    starts within ``merge_gap`` frames of the earlier one's end, and the
    IoU between the earlier's last box and the later's first box is at
    least ``theta_merge``.
    """
    tracklets = list(tracklets)
    changed = True
    while changed:
        changed = False
        tracklets.sort(key=lambda t: (t.first_frame, t.id))
        for i in range(len(tracklets)):
            for j in range(i + 1, len(tracklets)):
                a, b = tracklets[i], tracklets[j]
                if a.handedness != b.handedness:
                    continue
                if b.first_frame - a.last_frame > merge_gap:
                    continue
                if box_iou(a.entries[-1].box, b.entries[0].box) < theta_merge:
                    continue
                merged = _merge_two(a, b)
                if assoc is not None:
                    merged_assoc = assoc.pop(a.id, []) + assoc.pop(b.id, [])
                    assoc[merged.id] = sorted(merged_assoc, key=lambda p: p[0])
                tracklets[i] = merged
                del tracklets[j]
                changed = True
                break
            if changed:
                break
    return tracklets


def number_of_hands_filter(tracklets, max_per_hand: int = 1):
    """Keep the top tracklets per handedness by (frame count, mean confidence)."""
    by_hand = {}
    for t in tracklets:
        by_hand.setdefault(t.handedness, []).append(t)
    kept = []
    for hand in sorted(by_hand, key=str):
        ranked = sorted(by_hand[hand],
                        key=lambda t: (-len(t.entries), -t.mean_confidence(), t.id))
        kept.extend(ranked[:max_per_hand])
    return sorted(kept, key=lambda t: t.id)


def fill_gaps(tracklet: Tracklet, max_gap: int = 12) -> Tracklet:
    """Linearly interpolate boxes and joints across internal gaps <= max_gap.

    Filled entries are flagged ``interpolated``; longer gaps are left
    untouched so a consumer can re-estimate them externally.
    """
    entries = list(tracklet.entries)
    out = []
    for a, b in zip(entries, entries[1:]):
        out.append(a)
        gap = b.frame_index - a.frame_index - 1
        if 1 <= gap <= max_gap:
            for f in range(a.frame_index + 1, b.frame_index):
                t = (f - a.frame_index) / (b.frame_index - a.frame_index)
                box = tuple((1 - t) * np.asarray(a.box) + t * np.asarray(b.box))
                joints = None
                if a.joints2d is not None and b.joints2d is not None:
                    joints = (1 - t) * a.joints2d + t * b.joints2d
                conf = (1 - t) * a.confidence + t * b.confidence
                out.append(TrackEntry(f, box, conf, a.handedness, joints,
                                      interpolated=True))
    out.append(entries[-1])
    return Tracklet(tracklet.id, out, handedness=tracklet.handedness,
                    source=tracklet.source)


def one_euro_alpha(cutoff_hz: float, rate_hz: float) -> float:
    """Smoothing factor for a first-order low-pass at the given cutoff."""
    tau = 1.0 / (2.0 * math.pi * cutoff_hz)
    return 1.0 / (1.0 + tau * rate_hz)


def one_euro(series, params: OneEuroParams = None) -> np.ndarray:
    """Adaptive low-pass over a uniformly sampled scalar or vector series.

    The cutoff rises with the smoothed derivative magnitude
    (min_cutoff + beta * |dx|), trading lag for jitter. The first sample
    passes through unchanged. Vector samples share one cutoff derived
    from the Euclidean norm of the smoothed derivative.
    """
    params = params or OneEuroParams()
    x = np.asarray(series, dtype=np.float64)
    scalar = x.ndim == 1
    if scalar:
        x = x[:, None]
    out = np.empty_like(x)
    out[0] = x[0]
    dhat = np.zeros(x.shape[1])
    a_d = one_euro_alpha(params.d_cutoff, params.rate)
    for i in range(1, len(x)):
        dx = (x[i] - out[i - 1]) * params.rate
        dhat = a_d * dx + (1 - a_d) * dhat
        fc = params.min_cutoff + params.beta * float(np.linalg.norm(dhat))
        a = one_euro_alpha(fc, params.rate)
        out[i] = a * x[i] + (1 - a) * out[i - 1]
    return out[:, 0] if scalar else out


def smooth_tracklet_joints(tracklet: Tracklet, params: OneEuroParams) -> Tracklet:
    """One-euro filter the 2D joint trajectory of a tracklet (when present)."""
    if any(e.joints2d is None for e in tracklet.entries):
        return tracklet
    stack = np.stack([e.joints2d for e in tracklet.entries])  # (T, J, 2)
    t, j, _ = stack.shape
    smoothed = one_euro(stack.reshape(t, j * 2), params).reshape(t, j, 2)
    entries = [replace(e, joints2d=smoothed[i]) for i, e in enumerate(tracklet.entries)]
    return Tracklet(tracklet.id, entries, handedness=tracklet.handedness,
                    source=tracklet.source)


@dataclass
class HoiResult:
    tracklets: list
    joints_by_hand: dict  # handedness -> list of (frame_index, (J, 2) array)


def run_hoi_pipeline(detections, config: HoiConfig = None) -> HoiResult:
    """Full cleanup: track, fix handedness, merge, cap, fill gaps, smooth.

    Emits at most one tracklet (and joint sequence) per handedness.
    """
    config = config or HoiConfig()
    if not detections:
        return HoiResult([], {})
    if config.use_external_tracks:
        tracklets, assoc = build_tracklets_external(detections)
    else:
        tracklets, assoc = build_tracklets(detections, config.theta_iou,
                                           config.gap_limit)
    tracklets = handedness_filter(tracklets, assoc, config.h_min)
    tracklets = merge_tracklets(tracklets, assoc, config.merge_gap,
                                config.theta_merge)
    tracklets = number_of_hands_filter(tracklets, config.max_per_hand)
    tracklets = [fill_gaps(t, config.max_gap) for t in tracklets]
    tracklets = [smooth_tracklet_joints(t, config.one_euro) for t in tracklets]

    joints_by_hand = {}
    for t in tracklets:
        seq = [(e.frame_index, e.joints2d) for e in t.entries if e.joints2d is not None]
        if seq and t.handedness not in joints_by_hand:
            joints_by_hand[t.handedness] = seq
    return HoiResult(tracklets, joints_by_hand)
