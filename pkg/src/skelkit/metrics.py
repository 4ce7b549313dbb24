"""Video metrics: PSNR, SSIM, spatio-temporal IoU, mask IoU, boundary IoU, J&F.

All metrics are pure and deterministic. Empty-vs-empty comparisons score
1.0 by convention (a static scene should not zero a score); when that
convention fires, the report carries a flag saying so.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import (binary_erosion, distance_transform_edt,
                           gaussian_filter, generate_binary_structure)
from scipy.signal import convolve2d

from .errors import ValidationError

PSNR_CAP_DB = 99.0
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass
class VideoClip:
    """(T, H, W, 3) uint8 frame stack."""

    frames: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if (self.frames.ndim != 4 or self.frames.shape[3] != 3
                or len(self.frames) < 1 or self.frames.dtype != np.uint8):
            raise ValidationError("frames must be a nonempty TxHxWx3 uint8 stack")

    def __len__(self):
        return len(self.frames)


@dataclass
class MaskTrack:
    """(T, H, W) boolean mask stack."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames).astype(bool)
        if self.frames.ndim != 3 or len(self.frames) < 1:
            raise ValidationError("masks must be a nonempty TxHxW stack")

    def __len__(self):
        return len(self.frames)


@dataclass
class MetricsReport:
    clip_id: str = None
    psnr: float = None
    ssim: float = None
    st_iou: float = None
    mask_iou: float = None
    boundary_iou: float = None
    j: float = None
    f: float = None
    jf: float = None
    lpips: float = None  # reserved for external injection
    fvd: float = None    # reserved for external injection
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {
            "clip_id": self.clip_id, "psnr": self.psnr, "ssim": self.ssim,
            "st_iou": self.st_iou, "mask_iou": self.mask_iou,
            "boundary_iou": self.boundary_iou, "j": self.j, "f": self.f,
            "jf": self.jf, "lpips": self.lpips, "fvd": self.fvd,
            "flags": list(self.flags),
        }


def _check_same_shape(a, b, what):
    if np.shape(a.frames) != np.shape(b.frames):
        raise ValidationError(
            f"{what}: shape mismatch {np.shape(a.frames)} vs {np.shape(b.frames)}")


def _gray(frames: np.ndarray) -> np.ndarray:
    return frames.astype(np.float64) @ GRAY_WEIGHTS


def psnr(a: VideoClip, b: VideoClip) -> float:
    """Peak signal-to-noise ratio in dB over the whole clip; capped at 99 dB."""
    _check_same_shape(a, b, "psnr")
    diff = a.frames.astype(np.float64) - b.frames.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a: VideoClip, b: VideoClip) -> float:
    """Mean grayscale SSIM with an 11x11 Gaussian window (sigma 1.5).

    Statistics are taken over fully interior windows only, then averaged
    per frame and over frames.
    """
    _check_same_shape(a, b, "ssim")
    kernel = _gaussian_kernel()
    if a.frames.shape[1] < 11 or a.frames.shape[2] < 11:
        raise ValidationError("frames smaller than the 11x11 SSIM window")
    c1 = (0.01 * 255) ** 2
    c2 = (0.03 * 255) ** 2
    per_frame = []
    for fa, fb in zip(a.frames, b.frames):
        x, y = _gray(fa), _gray(fb)
        mu_x = convolve2d(x, kernel, mode="valid")
        mu_y = convolve2d(y, kernel, mode="valid")
        var_x = convolve2d(x * x, kernel, mode="valid") - mu_x ** 2
        var_y = convolve2d(y * y, kernel, mode="valid") - mu_y ** 2
        cov = convolve2d(x * y, kernel, mode="valid") - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
        per_frame.append(float(np.mean(num / den)))
    return math.fsum(per_frame) / len(per_frame)


def motion_mask(clip: VideoClip, tau_motion: float = 12.0,
                blur_sigma: float = 1.0) -> MaskTrack:
    """Binarized frame-difference masks between consecutive frames (length T-1)."""
    if len(clip) < 2:
        raise ValidationError("motion masks need at least 2 frames")
    grays = _gray(clip.frames)
    if blur_sigma > 0:
        grays = np.stack([gaussian_filter(g, blur_sigma) for g in grays])
    diffs = np.abs(grays[1:] - grays[:-1])
    return MaskTrack(diffs > tau_motion)


def _st_iou_volume(ma: np.ndarray, mb: np.ndarray):
    union = int(np.sum(ma | mb))
    if union == 0:
        return 1.0, True
    return float(np.sum(ma & mb)) / union, False


def st_iou(gen: VideoClip, gt: VideoClip, tau_motion: float = 12.0,
           blur_sigma: float = 1.0) -> float:
    """Spatio-temporal IoU of motion masks over the whole (T-1)xHxW volume.

    An empty union (two static clips) scores 1.0 by convention.
    """
    _check_same_shape(gen, gt, "st_iou")
    ma = motion_mask(gen, tau_motion, blur_sigma).frames
    mb = motion_mask(gt, tau_motion, blur_sigma).frames
    return _st_iou_volume(ma, mb)[0]


def _averaged_frame_iou(frames_a, frames_b, per_frame_fn):
    """Average per_frame_fn over frames where either input is nonempty.

    All-empty tracks score 1.0 by convention.
    """
    vals = []
    for ma, mb in zip(frames_a, frames_b):
        if not (ma.any() or mb.any()):
            continue
        vals.append(per_frame_fn(ma, mb))
    if not vals:
        return 1.0
    return math.fsum(vals) / len(vals)


def _frame_iou(ma, mb):
    union = int(np.sum(ma | mb))
    return float(np.sum(ma & mb)) / union


def mask_iou(a: MaskTrack, b: MaskTrack) -> float:
    """Per-frame IoU averaged over frames where either mask is nonempty."""
    _check_same_shape(a, b, "mask_iou")
    return _averaged_frame_iou(a.frames, b.frames, _frame_iou)


def _boundary_band(mask: np.ndarray, d: float) -> np.ndarray:
    """Mask minus its erosion by a Euclidean disk of radius d."""
    if not mask.any():
        return mask
    inner_dist = distance_transform_edt(mask)
    return mask & (inner_dist <= d)


def boundary_iou(a: MaskTrack, b: MaskTrack, d: float = None) -> float:
    """IoU of boundary bands (erosion residue at radius d), frame-averaged.

    ``d`` defaults to 2% of the image diagonal.
    """
    _check_same_shape(a, b, "boundary_iou")
    if d is None:
        h, w = a.frames.shape[1:3]
        # 2% of the diagonal, but never below the 1 px floor the band needs
        d = max(1.0, 0.02 * math.hypot(h, w))
    if d < 1:
        raise ValidationError("boundary band radius must be >= 1 pixel")
    return _averaged_frame_iou(
        a.frames, b.frames,
        lambda ma, mb: _frame_iou(_boundary_band(ma, d), _boundary_band(mb, d)))


_STRUCT4 = generate_binary_structure(2, 1)


def _boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """4-connected inner boundary; image-edge pixels inside the mask count."""
    if not mask.any():
        return np.zeros_like(mask)
    return mask & ~binary_erosion(mask, _STRUCT4, border_value=0)


def _boundary_f_frame(ma, mb, d_f):
    bp = _boundary_pixels(ma)
    bg = _boundary_pixels(mb)
    if not bp.any() or not bg.any():
        return 0.0
    dist_to_gt = distance_transform_edt(~bg)
    dist_to_pred = distance_transform_edt(~bp)
    precision = float(np.mean(dist_to_gt[bp] <= d_f))
    recall = float(np.mean(dist_to_pred[bg] <= d_f))
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def jf_score(a: MaskTrack, b: MaskTrack, d_f: float = 2.0):
    """Region similarity J, contour accuracy F, and their mean.

    J is the frame-averaged mask IoU; F matches boundary pixels within
    ``d_f`` pixels and takes the harmonic mean of precision and recall.
    Returns (J, F, J&F).
    """
    _check_same_shape(a, b, "jf_score")
    j = mask_iou(a, b)
    f = _averaged_frame_iou(a.frames, b.frames,
                            lambda ma, mb: _boundary_f_frame(ma, mb, d_f))
    return j, f, (j + f) / 2.0


@dataclass
class MetricsConfig:
    tau_motion: float = 12.0
    blur_sigma: float = 1.0
    boundary_d: float = None   # None = 2% of image diagonal
    d_f: float = 2.0


def evaluate_clip_pair(gen: VideoClip, gt: VideoClip, gen_masks: MaskTrack = None,
                       gt_masks: MaskTrack = None, config: MetricsConfig = None,
                       clip_id: str = None) -> MetricsReport:
    """All applicable metrics for one generated/ground-truth pair.

    Mask metrics are omitted (and flagged absent) when either mask track
    is missing; ST-IoU is omitted for single-frame clips.
    """
    config = config or MetricsConfig()
    report = MetricsReport(clip_id=clip_id)
    report.psnr = psnr(gen, gt)
    report.ssim = ssim(gen, gt)
    if len(gen) >= 2:
        ma = motion_mask(gen, config.tau_motion, config.blur_sigma).frames
        mb = motion_mask(gt, config.tau_motion, config.blur_sigma).frames
        report.st_iou, both_empty = _st_iou_volume(ma, mb)
        if both_empty:
            report.flags.append("st_iou_both_empty")
    else:
        report.flags.append("st_iou_absent")
    if gen_masks is not None and gt_masks is not None:
        report.mask_iou = mask_iou(gen_masks, gt_masks)
        report.boundary_iou = boundary_iou(gen_masks, gt_masks, config.boundary_d)
        report.j, report.f, report.jf = jf_score(gen_masks, gt_masks, config.d_f)
        if not (gen_masks.frames.any() or gt_masks.frames.any()):
            report.flags.append("mask_metrics_both_empty")
    else:
        report.flags.append("mask_metrics_absent")
    return report


def aggregate_reports(reports) -> dict:
    """Macro-average every numeric field over the reports that carry it.

    Uses exact summation so aggregation is independent of clip order.
    """
    fields = ("psnr", "ssim", "st_iou", "mask_iou", "boundary_iou",
              "j", "f", "jf", "lpips", "fvd")
    out = {"clips": len(reports)}
    for name in fields:
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        out[name] = math.fsum(vals) / len(vals) if vals else None
        out[f"{name}_count"] = len(vals)
    return out
