"""Seeded synthetic scenes with exact ground truth.

The generator builds a moving two-hand detection stream and a robot
episode (state log, camera, per-frame drift homographies, matched point
pairs), then corrupts copies of them with the configured noise. The clean truth
is kept alongside, so pipeline recovery can be checked against it. Same
seed, same bytes.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import records
from .geom import CameraModel, Homography, JointSet2D, Pose3, project_points
from .manifest import ClipSpec, Manifest
from .skeleton import (GripperState, GripperTemplate, RenderStyle, gripper_fk,
                       gripper_topology, hand_topology, render_clip)
from .track import Detection


@dataclass
class SynthScene:
    seed: int = 0
    width: int = 320
    height: int = 240
    n_frames: int = 60
    fps: float = 30.0
    dropout_rate: float = 0.0
    spurious_rate: float = 0.0
    jitter_sigma: float = 0.0
    outlier_frac: float = 0.0
    drift_px: float = 3.0
    drift_offset_px: float = 0.0   # constant extra drift ("bad" episodes)
    pairs_per_frame: int = 60


def hand_template_2d(scale: float = 1.0) -> np.ndarray:
    """A plausible 21-joint hand layout in local pixel coordinates."""
    pts = [(0.0, 14.0)]  # wrist, below the palm
    angles = (-55.0, -25.0, 0.0, 22.0, 48.0)
    radii = {
        0: (7.0, 12.0, 16.0, 19.0),          # thumb is shorter
        1: (9.0, 15.0, 20.0, 24.0),
        2: (9.0, 16.0, 22.0, 26.0),
        3: (9.0, 15.0, 20.0, 24.0),
        4: (8.0, 13.0, 17.0, 20.0),
    }
    for f, ang in enumerate(angles):
        a = math.radians(ang)
        dx, dy = math.sin(a), -math.cos(a)
        for r in radii[f]:
            pts.append((dx * r, dy * r + 10.0))
    return np.asarray(pts) * scale


def _hand_box(joints: np.ndarray, pad: float = 5.0):
    lo = joints.min(axis=0) - pad
    hi = joints.max(axis=0) + pad
    return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def generate_hand_truth(scene: SynthScene):
    """Clean two-hand trajectories: per hand, (T,21,2) joints and (T,4) boxes."""
    t = np.arange(scene.n_frames)
    phase = 2 * np.pi * t / max(scene.n_frames, 1)
    template = hand_template_2d()
    truth = {}
    centers = {
        "left": np.c_[0.25 * scene.width + 22 * np.sin(1.5 * phase),
                      0.55 * scene.height + 16 * np.cos(phase)],
        "right": np.c_[0.75 * scene.width - 22 * np.sin(1.5 * phase),
                       0.45 * scene.height + 16 * np.sin(phase)],
    }
    for hand, cs in centers.items():
        local = template if hand == "right" else template * np.array([-1.0, 1.0])
        joints = cs[:, None, :] + local[None, :, :]
        boxes = np.array([_hand_box(j) for j in joints])
        truth[hand] = {"joints": joints, "boxes": boxes}
    return truth


def generate_hand_detections(scene: SynthScene):
    """Corrupted detection stream plus the clean truth it came from."""
    rng = np.random.default_rng(scene.seed)
    truth = generate_hand_truth(scene)
    detections = []
    for f in range(scene.n_frames):
        for hand in ("left", "right"):
            if rng.random() < scene.dropout_rate:
                continue
            joints = truth[hand]["joints"][f]
            if scene.jitter_sigma > 0:
                joints = joints + rng.normal(0, scene.jitter_sigma, joints.shape)
            conf = 0.7 + 0.3 * rng.random()
            detections.append(Detection(f, _hand_box(joints), float(conf),
                                        hand, joints2d=joints))
        if rng.random() < scene.spurious_rate:
            cx = rng.uniform(30, scene.width - 30)
            cy = rng.uniform(30, scene.height - 30)
            hand = "left" if rng.random() < 0.5 else "right"
            conf = 0.3 + 0.3 * rng.random()
            joints = hand_template_2d(0.8) + np.array([cx, cy])
            detections.append(Detection(f, (cx - 20, cy - 20, cx + 20, cy + 20),
                                        float(conf), hand, joints2d=joints))
    return detections, truth


def synth_camera(scene: SynthScene) -> CameraModel:
    return CameraModel(fx=300.0, fy=300.0, cx=scene.width / 2.0,
                       cy=scene.height / 2.0, width=scene.width,
                       height=scene.height)


def generate_robot_states(scene: SynthScene):
    """State log with a wandering end effector and two openness jumps."""
    out = []
    n = scene.n_frames
    for f in range(n):
        u = f / max(n - 1, 1)
        trans = np.array([0.06 * math.sin(2 * math.pi * u),
                          0.04 * math.cos(2 * math.pi * u),
                          0.45 + 0.08 * u])
        if f < n // 3:
            openness = 0.9
        elif f < 2 * n // 3:
            openness = 0.2
        else:
            openness = 0.8
        out.append(records.StateRecord(f, f / scene.fps,
                                       Pose3(np.eye(3), trans), openness))
    return out


def drift_homography(scene: SynthScene, frame: int) -> Homography:
    """Slowly wandering translation plus a slight rotation about the center."""
    u = frame / max(scene.n_frames - 1, 1)
    dx = scene.drift_px * math.sin(2 * math.pi * u) + scene.drift_offset_px
    dy = scene.drift_px * math.cos(2 * math.pi * u + 1.0) + scene.drift_offset_px
    theta = 0.01 * math.sin(2 * math.pi * u + 0.5)
    c, s = math.cos(theta), math.sin(theta)
    cx, cy = scene.width / 2.0, scene.height / 2.0
    rot = np.array([[c, -s, cx - c * cx + s * cy],
                    [s, c, cy - s * cx - c * cy],
                    [0, 0, 1.0]])
    trans = np.array([[1, 0, dx], [0, 1, dy], [0, 0, 1.0]])
    return Homography(trans @ rot)


def generate_robot_episode(scene: SynthScene):
    """Everything one robot clip needs, clean truth included.

    Returns a dict with the camera, state records, projected joint
    sequence, true per-frame homographies, the (noisy) correspondence
    stream, and the rectified joint truth.
    """
    rng = np.random.default_rng(scene.seed + 1)
    cam = synth_camera(scene)
    states = generate_robot_states(scene)
    template = GripperTemplate()
    joints2d, homographies, corr, rectified = [], [], [], []
    for rec in states:
        js3 = gripper_fk(GripperState(rec.ee_pose, rec.openness), template)
        js2 = project_points(js3, cam)
        joints2d.append(js2)
        h = drift_homography(scene, rec.frame_index)
        homographies.append(h)
        src = np.c_[rng.uniform(20, scene.width - 20, scene.pairs_per_frame),
                    rng.uniform(20, scene.height - 20, scene.pairs_per_frame)]
        dst = h.transform(src)
        n_out = int(round(scene.outlier_frac * len(src)))
        if n_out:
            idx = rng.choice(len(src), size=n_out, replace=False)
            dst[idx] = np.c_[rng.uniform(0, scene.width, n_out),
                             rng.uniform(0, scene.height, n_out)]
        pairs = np.c_[src, dst, np.ones(len(src))]
        corr.append((rec.frame_index, pairs))
        rectified.append(JointSet2D(h.transform(js2.coords), js2.visible))
    return {
        "camera": cam,
        "states": states,
        "joints2d": joints2d,
        "homographies": homographies,
        "correspondences": corr,
        "rectified_joints": rectified,
    }


def synth_generate(scene: SynthScene, out_dir: str, style: RenderStyle = None):
    """Write a full synthetic dataset tree (manifest, clips, ground truth)."""
    style = style or RenderStyle()
    size = (scene.width, scene.height)
    os.makedirs(out_dir, exist_ok=True)

    # hands clip
    hands_dir = os.path.join(out_dir, "clips", "hands_000")
    os.makedirs(hands_dir, exist_ok=True)
    detections, truth = generate_hand_detections(scene)
    topo = hand_topology()
    seq = [JointSet2D(truth["left"]["joints"][f]) for f in range(scene.n_frames)]
    seq_r = [JointSet2D(truth["right"]["joints"][f]) for f in range(scene.n_frames)]
    frames = [JointSet2D(np.vstack([jl.coords, jr.coords]))
              for jl, jr in zip(seq, seq_r)]
    both_topo = _two_hand_topology(topo)
    clip = render_clip(frames, both_topo, style, size, scene.fps)
    records.write_frames(os.path.join(hands_dir, "frames"), clip.frames)
    records.write_detections(os.path.join(hands_dir, "detections.jsonl"), detections)
    truth_dir = os.path.join(hands_dir, "truth")
    os.makedirs(truth_dir, exist_ok=True)
    records.write_jsonl(os.path.join(truth_dir, "hand_joints.jsonl"), [{
        "frame_index": f,
        "left": truth["left"]["joints"][f].tolist(),
        "right": truth["right"]["joints"][f].tolist(),
    } for f in range(scene.n_frames)])

    # robot clip
    robot_dir = os.path.join(out_dir, "clips", "robot_000")
    os.makedirs(robot_dir, exist_ok=True)
    episode = generate_robot_episode(scene)
    rclip = render_clip(episode["joints2d"], gripper_topology(), style, size,
                        scene.fps)
    records.write_frames(os.path.join(robot_dir, "frames"), rclip.frames)
    records.write_state_log(os.path.join(robot_dir, "states.jsonl"),
                            episode["states"])
    records.write_camera(os.path.join(robot_dir, "camera.json"),
                         episode["camera"])
    records.write_correspondences(os.path.join(robot_dir, "correspondences.jsonl"),
                                  episode["correspondences"])
    rtruth_dir = os.path.join(robot_dir, "truth")
    os.makedirs(rtruth_dir, exist_ok=True)
    records.write_jsonl(os.path.join(rtruth_dir, "homographies.jsonl"), [{
        "frame_index": i,
        "homography": [float(v) for v in h.h.ravel()],
    } for i, h in enumerate(episode["homographies"])])

    manifest = Manifest([
        ClipSpec("hands_000",
                 frame_dir=os.path.join("clips", "hands_000", "frames"),
                 detection_file=os.path.join("clips", "hands_000",
                                             "detections.jsonl"),
                 fps=scene.fps),
        ClipSpec("robot_000",
                 frame_dir=os.path.join("clips", "robot_000", "frames"),
                 camera_file=os.path.join("clips", "robot_000", "camera.json"),
                 state_log=os.path.join("clips", "robot_000", "states.jsonl"),
                 correspondence_file=os.path.join("clips", "robot_000",
                                                  "correspondences.jsonl"),
                 fps=scene.fps),
    ])
    manifest.save(os.path.join(out_dir, "manifest.json"))
    return manifest


def _two_hand_topology(single):
    """Two disjoint copies of a hand topology on 42 joints."""
    from .skeleton import SkeletonTopology
    n = single.joint_count
    names = [f"l_{x}" for x in single.joint_names] + \
            [f"r_{x}" for x in single.joint_names]
    bones = list(single.bones) + [(a + n, b + n) for a, b in single.bones]
    colors = list(single.bone_colors) * 2
    return SkeletonTopology(names, bones, colors)
