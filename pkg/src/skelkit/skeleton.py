"""Skeleton topologies, gripper forward kinematics, and rasterization.

Rasterization is deliberately non-anti-aliased: a pixel takes a bone's
color iff its center lies within ``line_radius`` of the bone segment
(capsule test), which keeps renders byte-deterministic across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import ValidationError
from .geom import JointSet2D, JointSet3D, Pose3

__all__ = [
    "SkeletonTopology", "GripperState", "GripperTemplate", "RenderStyle",
    "PromptClip", "hand_topology", "gripper_topology", "gripper_fk",
    "render_skeleton", "render_clip", "region_weight_mask",
    "JointSet2D", "JointSet3D",
]

FINGERS = ("thumb", "index", "middle", "ring", "pinky")
FINGER_COLORS = {
    "thumb": (255, 60, 60),
    "index": (255, 170, 0),
    "middle": (60, 220, 60),
    "ring": (60, 130, 255),
    "pinky": (200, 60, 255),
}


@dataclass
class SkeletonTopology:
    joint_names: list
    bones: list
    bone_colors: list

    def __post_init__(self):
        n = len(self.joint_names)
        if len(self.bone_colors) != len(self.bones):
            raise ValidationError("one color per bone required")
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, b in self.bones:
            if not (0 <= a < n and 0 <= b < n):
                raise ValidationError(f"bone ({a},{b}) out of range")
            ra, rb = find(a), find(b)
            if ra == rb:
                raise ValidationError("bones must form a forest (cycle found)")
            parent[ra] = rb

    @property
    def joint_count(self):
        return len(self.joint_names)


@dataclass
class GripperTemplate:
    """Parallel-jaw proportions: jaw span, palm offset, finger length (meters)."""

    max_width: float = 0.08
    root_offset: float = 0.02
    finger_length: float = 0.06


@dataclass
class GripperState:
    ee_pose: Pose3
    openness: float

    def __post_init__(self):
        if not (np.isfinite(self.openness) and 0.0 <= self.openness <= 1.0):
            raise ValidationError("openness must be in [0, 1]")


@dataclass
class RenderStyle:
    line_radius: float = 3.0
    joint_radius: float = 4.0
    joint_color: tuple = (255, 255, 255)
    background: tuple = (0, 0, 0)

    def __post_init__(self):
        if self.line_radius <= 0 or self.joint_radius <= 0:
            raise ValidationError("radii must be positive")


@dataclass
class PromptClip:
    """A stack of rendered RGB prompt frames, (T, H, W, 3) uint8."""

    frames: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 4 or self.frames.shape[3] != 3 or len(self.frames) < 1:
            raise ValidationError("frames must be a nonempty TxHxWx3 stack")

    def __len__(self):
        return len(self.frames)


def hand_topology() -> SkeletonTopology:
    """Standard 21-keypoint hand: wrist + 4 joints per finger, thumb first.

    This matches the layout common hand pose estimators emit, so detection
    files can be consumed without remapping.
    """
    names = ["wrist"]
    bones = []
    colors = []
    for f, finger in enumerate(FINGERS):
        base = 1 + 4 * f
        names += [f"{finger}_{k}" for k in range(1, 5)]
        chain = [(0, base), (base, base + 1), (base + 1, base + 2), (base + 2, base + 3)]
        bones += chain
        colors += [FINGER_COLORS[finger]] * 4
    return SkeletonTopology(names, bones, colors)


def gripper_topology() -> SkeletonTopology:
    names = ["wrist", "palm", "finger_l_root", "finger_r_root",
             "finger_l_tip", "finger_r_tip", "tcp"]
    bones = [(0, 1), (1, 2), (1, 3), (2, 4), (3, 5), (1, 6)]
    colors = [(230, 230, 230), (255, 170, 0), (60, 130, 255),
              (255, 170, 0), (60, 130, 255), (60, 220, 60)]
    return SkeletonTopology(names, bones, colors)


def gripper_fk(state: GripperState, template: GripperTemplate = None) -> JointSet3D:
    """World-frame gripper joints for an end-effector pose and jaw openness.

    Local layout (z along the approach axis, x across the jaws): wrist at
    the origin, palm at z=root_offset, finger roots at x = +-openness *
    max_width / 2, tips ahead of the roots by finger_length, and the tool
    center point between the tips.
    """
    template = template or GripperTemplate()
    half = state.openness * template.max_width / 2.0
    d, lf = template.root_offset, template.finger_length
    local = np.array([
        [0.0, 0.0, 0.0],
        [0.0, 0.0, d],
        [-half, 0.0, d],
        [half, 0.0, d],
        [-half, 0.0, d + lf],
        [half, 0.0, d + lf],
        [0.0, 0.0, d + lf],
    ])
    return JointSet3D(state.ee_pose.apply(local))


def _draw_capsule(frame, a, b, radius, color):
    hh, ww = frame.shape[:2]
    lo = np.floor(np.minimum(a, b) - radius).astype(int)
    hi = np.ceil(np.maximum(a, b) + radius).astype(int) + 1
    x0, y0 = max(lo[0], 0), max(lo[1], 0)
    x1, y1 = min(hi[0], ww), min(hi[1], hh)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    px = np.stack([xs, ys], axis=-1).astype(np.float64)
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-12:
        d2 = np.sum((px - a) ** 2, axis=-1)
    else:
        t = np.clip(((px - a) @ ab) / denom, 0.0, 1.0)
        nearest = a + t[..., None] * ab
        d2 = np.sum((px - nearest) ** 2, axis=-1)
    frame[y0:y1, x0:x1][d2 <= radius * radius] = color


def render_skeleton(joints: JointSet2D, topo: SkeletonTopology,
                    style: RenderStyle = None, size=(720, 480)) -> np.ndarray:
    """Rasterize one skeleton into an HxWx3 uint8 frame.

    Bones are drawn in topology order (both endpoints must be visible),
    then visible joints as filled disks; later draws overwrite earlier.
    """
    style = style or RenderStyle()
    w, h = int(size[0]), int(size[1])
    if w <= 0 or h <= 0:
        raise ValidationError("canvas size must be positive")
    if len(joints) != topo.joint_count:
        raise ValidationError(
            f"joint count {len(joints)} does not match topology {topo.joint_count}")
    frame = np.empty((h, w, 3), dtype=np.uint8)
    frame[:] = style.background
    coords = joints.coords
    for (pa, pb), color in zip(topo.bones, topo.bone_colors):
        if joints.visible[pa] and joints.visible[pb]:
            _draw_capsule(frame, coords[pa], coords[pb], style.line_radius, color)
    for j in range(len(joints)):
        if joints.visible[j]:
            _draw_capsule(frame, coords[j], coords[j], style.joint_radius,
                          style.joint_color)
    return frame


def render_clip(joint_sequence, topo: SkeletonTopology, style: RenderStyle = None,
                size=(720, 480), fps: float = 30.0) -> PromptClip:
    """Render a sequence of joint sets, one frame each."""
    if len(joint_sequence) == 0:
        raise ValidationError("joint sequence must be nonempty")
    frames = np.stack([render_skeleton(js, topo, style, size) for js in joint_sequence])
    return PromptClip(frames, fps)


def region_weight_mask(frame, dilation_radius: float, weight: float,
                       background=(0, 0, 0)) -> np.ndarray:
    """Per-pixel loss weights: ``weight`` near the rendered skeleton, 1 elsewhere.

    ``frame`` is either a rendered HxWx3 frame (occupancy = any channel
    differing from ``background``) or an HxW boolean occupancy mask.
    A pixel is weighted when its Euclidean distance to the nearest occupied
    pixel is <= dilation_radius.
    """
    if weight < 1:
        raise ValidationError("weight must be >= 1")
    if dilation_radius < 0:
        raise ValidationError("dilation_radius must be >= 0")
    frame = np.asarray(frame)
    if frame.ndim == 3:
        occ = np.any(frame != np.asarray(background, dtype=frame.dtype), axis=2)
    elif frame.ndim == 2:
        occ = frame.astype(bool)
    else:
        raise ValidationError("frame must be HxWx3 or HxW")
    out = np.ones(occ.shape, dtype=np.float64)
    if occ.any():
        dist = distance_transform_edt(~occ)
        out[dist <= dilation_radius] = weight
    return out
