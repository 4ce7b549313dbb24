"""Line-delimited record schemas and frame/mask file I/O.

Every record format is JSON-lines with a ``schema_version`` field on each
record. Videos are handled as directories of zero-padded 8-bit RGB PNGs,
never containers, so every artifact stays codec-free and bit-exact.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ValidationError
from .geom import Pose3
from .track import Detection, TrackEntry, Tracklet

SCHEMA_VERSION = 1
FRAME_PATTERN = "frame_{:06d}.png"


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            rec = dict(rec)
            rec.setdefault("schema_version", SCHEMA_VERSION)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path):
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: bad JSON record: {exc}") from exc
    return records


# -- robot state logs ---------------------------------------------------------

@dataclass
class StateRecord:
    frame_index: int
    timestamp_s: float
    ee_pose: Pose3
    openness: float


def write_state_log(path, records):
    write_jsonl(path, [{
        "frame_index": r.frame_index,
        "timestamp_s": r.timestamp_s,
        "ee_pose": [float(v) for v in r.ee_pose.matrix().ravel()],
        "openness": r.openness,
    } for r in records])


def read_state_log(path):
    out = []
    for rec in read_jsonl(path):
        try:
            out.append(StateRecord(
                frame_index=int(rec["frame_index"]),
                timestamp_s=float(rec["timestamp_s"]),
                ee_pose=Pose3.from_matrix(rec["ee_pose"]),
                openness=float(rec["openness"]),
            ))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{path}: bad state record {rec}: {exc}") from exc
    return sorted(out, key=lambda r: r.frame_index)


# -- hand detections ----------------------------------------------------------

def write_detections(path, detections):
    by_frame = {}
    for d in detections:
        by_frame.setdefault(d.frame_index, []).append(d)
    records = []
    for f in sorted(by_frame):
        dets = []
        for d in by_frame[f]:
            rec = {
                "box": [float(v) for v in d.box],
                "confidence": d.confidence,
                "handedness": d.handedness,
            }
            if d.joints2d is not None:
                rec["joints2d"] = d.joints2d.tolist()
            if d.track_id is not None:
                rec["track_id"] = d.track_id
            dets.append(rec)
        records.append({"frame_index": f, "detections": dets})
    write_jsonl(path, records)


def read_detections(path):
    out = []
    for rec in read_jsonl(path):
        try:
            f = int(rec["frame_index"])
            for d in rec["detections"]:
                out.append(Detection(
                    frame_index=f,
                    box=tuple(float(v) for v in d["box"]),
                    confidence=float(d["confidence"]),
                    handedness=d["handedness"],
                    joints2d=d.get("joints2d"),
                    track_id=d.get("track_id"),
                ))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{path}: bad detection record {rec}: {exc}") from exc
    return out


# -- tracklets ----------------------------------------------------------------

def write_tracklets(path, tracklets):
    records = []
    for t in tracklets:
        records.append({
            "tracklet_id": t.id,
            "handedness": t.handedness,
            "source": t.source,
            "entries": [{
                "frame_index": e.frame_index,
                "box": [float(v) for v in e.box],
                "confidence": e.confidence,
                "interpolated": e.interpolated,
                "joints2d": None if e.joints2d is None else e.joints2d.tolist(),
            } for e in t.entries],
        })
    write_jsonl(path, records)


def read_tracklets(path):
    out = []
    for rec in read_jsonl(path):
        entries = [TrackEntry(
            frame_index=int(e["frame_index"]),
            box=tuple(e["box"]),
            confidence=float(e["confidence"]),
            handedness=rec["handedness"],
            joints2d=None if e.get("joints2d") is None else np.asarray(e["joints2d"]),
            interpolated=bool(e.get("interpolated", False)),
        ) for e in rec["entries"]]
        out.append(Tracklet(rec["tracklet_id"], entries,
                            handedness=rec["handedness"], source=rec["source"]))
    return out


# -- correspondences ----------------------------------------------------------

def write_correspondences(path, stream):
    """``stream`` is a sequence of (frame_index, Nx5-convertible pairs)."""
    records = []
    for frame_index, pairs in stream:
        arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 5)
        records.append({"frame_index": int(frame_index), "pairs": arr.tolist()})
    write_jsonl(path, records)


def read_correspondences(path):
    out = []
    for rec in read_jsonl(path):
        try:
            pairs = np.asarray(rec["pairs"], dtype=np.float64).reshape(-1, 5)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: bad correspondence record: {exc}") from exc
        if pairs.size and not np.isfinite(pairs).all():
            raise ValidationError(f"{path}: non-finite correspondence in frame "
                                  f"{rec.get('frame_index')}")
        out.append((int(rec["frame_index"]), pairs))
    return sorted(out, key=lambda p: p[0])


# -- rectified joints ---------------------------------------------------------

def write_rectified(path, frame_indices, result):
    records = []
    for f, h, js, ratio, carried in zip(frame_indices, result.homographies,
                                        result.joints, result.inlier_ratios,
                                        result.carried_over):
        records.append({
            "frame_index": int(f),
            "homography": [float(v) for v in h.h.ravel()],
            "inlier_ratio": ratio,
            "carried_over": carried,
            "joints": js.coords.tolist(),
            "visible": js.visible.tolist(),
        })
    write_jsonl(path, records)


# -- cameras ------------------------------------------------------------------

def write_camera(path, cam):
    with open(path, "w") as fh:
        json.dump({
            "schema_version": SCHEMA_VERSION,
            "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "width": cam.width, "height": cam.height,
            "world_to_cam": [float(v) for v in cam.world_to_cam.matrix().ravel()],
        }, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_camera(path):
    from .geom import CameraModel
    with open(path) as fh:
        rec = json.load(fh)
    try:
        return CameraModel(
            fx=float(rec["fx"]), fy=float(rec["fy"]),
            cx=float(rec["cx"]), cy=float(rec["cy"]),
            width=int(rec["width"]), height=int(rec["height"]),
            world_to_cam=Pose3.from_matrix(rec["world_to_cam"]),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: bad camera file: {exc}") from exc


# -- frames and masks ---------------------------------------------------------

def frame_path(directory, index):
    return os.path.join(directory, FRAME_PATTERN.format(index))


def write_frame(path, frame):
    Image.fromarray(np.asarray(frame, dtype=np.uint8), mode="RGB").save(path,
                                                                        format="PNG")


def write_frames(directory, frames, start_index=0):
    os.makedirs(directory, exist_ok=True)
    for i, frame in enumerate(frames):
        write_frame(frame_path(directory, start_index + i), frame)


def read_frames(directory):
    names = sorted(n for n in os.listdir(directory) if n.endswith(".png"))
    if not names:
        raise ValidationError(f"{directory}: no PNG frames found")
    frames = []
    for n in names:
        img = Image.open(os.path.join(directory, n)).convert("RGB")
        frames.append(np.asarray(img, dtype=np.uint8))
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise ValidationError(f"{directory}: frames have mixed sizes {shapes}")
    return np.stack(frames)


def write_mask_track(directory, masks, start_index=0):
    """One 0/255 single-channel PNG per mask frame."""
    os.makedirs(directory, exist_ok=True)
    for i, m in enumerate(masks):
        arr = np.where(np.asarray(m, dtype=bool), 255, 0).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(
            frame_path(directory, start_index + i), format="PNG")


def read_mask_track(source):
    """Load masks from a PNG directory or a run-length-encoded JSONL file."""
    if os.path.isdir(source):
        names = sorted(n for n in os.listdir(source) if n.endswith(".png"))
        if not names:
            raise ValidationError(f"{source}: no PNG masks found")
        return np.stack([
            np.asarray(Image.open(os.path.join(source, n)).convert("L")) > 127
            for n in names])
    return _read_rle_masks(source)


def write_rle_masks(path, masks):
    records = []
    for i, m in enumerate(masks):
        flat = np.asarray(m, dtype=bool).ravel()
        # run-length encoding starting with the count of leading zeros
        changes = np.flatnonzero(np.diff(flat))
        bounds = np.concatenate([[0], changes + 1, [len(flat)]])
        runs = np.diff(bounds).tolist()
        if flat[0]:
            runs = [0] + runs
        records.append({"frame_index": i, "shape": list(m.shape), "runs": runs})
    write_jsonl(path, records)


def _read_rle_masks(path):
    masks = []
    for rec in read_jsonl(path):
        try:
            h, w = rec["shape"]
            runs = rec["runs"]
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"{path}: bad RLE mask record: {exc}") from exc
        flat = np.zeros(h * w, dtype=bool)
        pos, val = 0, False
        for run in runs:
            if val:
                flat[pos:pos + run] = True
            pos += run
            val = not val
        if pos != h * w:
            raise ValidationError(f"{path}: RLE runs do not cover the mask")
        masks.append(flat.reshape(h, w))
    return np.stack(masks)


# -- reports ------------------------------------------------------------------

def write_reports(path, reports, aggregate=None):
    records = [r.to_dict() for r in reports]
    if aggregate is not None:
        records.append({"aggregate": True, **aggregate})
    write_jsonl(path, records)


def format_report_table(reports, aggregate):
    cols = ("psnr", "ssim", "st_iou", "mask_iou", "boundary_iou", "jf")
    lines = ["clip_id" + "".join(f"{c:>14}" for c in cols)]

    def fmt(v):
        return f"{v:>14.4f}" if v is not None else f"{'-':>14}"

    for r in reports:
        lines.append(f"{r.clip_id or '?'}" + "".join(fmt(getattr(r, c)) for c in cols))
    lines.append("macro_avg" + "".join(fmt(aggregate.get(c)) for c in cols))
    return "\n".join(lines)
