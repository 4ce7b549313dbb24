"""Rigid poses, pinhole projection, and planar homographies.

Homography estimation follows the normalized DLT (translate to the
centroid, scale to mean distance sqrt(2), solve the 2n x 9 system by SVD)
with a RANSAC wrapper scored by the symmetric transfer error. Everything
here is a pure function of its inputs and safe to call from any thread.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, NoConsensusError, ValidationError

MIN_DEPTH = 1e-6
_COLLINEAR_REL_AREA = 1e-6


def _as_float(a, shape, name):
    out = np.asarray(a, dtype=np.float64)
    if out.shape != shape:
        raise ValidationError(f"{name}: expected shape {shape}, got {out.shape}")
    return out


@dataclass
class Pose3:
    """Rigid transform: p_out = rotation @ p_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = _as_float(self.rotation, (3, 3), "rotation")
        self.translation = _as_float(self.translation, (3,), "translation")
        rtr = self.rotation @ self.rotation.T
        if not np.allclose(rtr, np.eye(3), atol=1e-6):
            raise ValidationError("rotation is not orthonormal within 1e-6")
        if abs(np.linalg.det(self.rotation) - 1.0) > 1e-6:
            raise ValidationError("rotation determinant is not +1 within 1e-6")

    @staticmethod
    def identity() -> "Pose3":
        return Pose3(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m) -> "Pose3":
        """Build from a 4x4 homogeneous matrix (or 16 row-major floats)."""
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        return Pose3(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "Pose3") -> "Pose3":
        """Pose equal to applying ``other`` first, then ``self``."""
        return Pose3(self.rotation @ other.rotation,
                     self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose3":
        rt = self.rotation.T
        return Pose3(rt, -rt @ self.translation)


@dataclass
class CameraModel:
    """Pinhole intrinsics plus a world-to-camera pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_cam: Pose3 = field(default_factory=Pose3.identity)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError("principal point must lie inside the frame")


@dataclass
class JointSet3D:
    """World-frame joint coordinates (meters) with per-joint visibility."""

    coords: np.ndarray
    visible: np.ndarray = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise ValidationError(f"coords must be Nx3, got {self.coords.shape}")
        if self.visible is None:
            self.visible = np.ones(len(self.coords), dtype=bool)
        self.visible = np.asarray(self.visible, dtype=bool)
        if self.visible.shape != (len(self.coords),):
            raise ValidationError("visible must have one flag per joint")

    def __len__(self):
        return len(self.coords)


@dataclass
class JointSet2D:
    """Pixel-space joint coordinates with per-joint visibility."""

    coords: np.ndarray
    visible: np.ndarray = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ValidationError(f"coords must be Nx2, got {self.coords.shape}")
        if self.visible is None:
            self.visible = np.ones(len(self.coords), dtype=bool)
        self.visible = np.asarray(self.visible, dtype=bool)
        if self.visible.shape != (len(self.coords),):
            raise ValidationError("visible must have one flag per joint")

    def __len__(self):
        return len(self.coords)


@dataclass
class Correspondence:
    """A matched point pair between a rendered and an observed frame."""

    src: np.ndarray
    dst: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        self.src = _as_float(self.src, (2,), "src")
        self.dst = _as_float(self.dst, (2,), "dst")
        if not (np.isfinite(self.src).all() and np.isfinite(self.dst).all()):
            raise ValidationError("correspondence coordinates must be finite")
        if not (np.isfinite(self.weight) and self.weight >= 0):
            raise ValidationError("correspondence weight must be >= 0")


def pairs_to_arrays(pairs):
    """Return (src, dst, weight) float arrays from Correspondence objects or an Nx4/Nx5 array."""
    if isinstance(pairs, np.ndarray) or (
        len(pairs) > 0 and not isinstance(pairs[0], Correspondence)
    ):
        arr = np.asarray(pairs, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] not in (4, 5):
            raise ValidationError("pair array must be Nx4 or Nx5")
        src, dst = arr[:, 0:2], arr[:, 2:4]
        w = arr[:, 4] if arr.shape[1] == 5 else np.ones(len(arr))
    else:
        src = np.array([p.src for p in pairs], dtype=np.float64).reshape(-1, 2)
        dst = np.array([p.dst for p in pairs], dtype=np.float64).reshape(-1, 2)
        w = np.array([p.weight for p in pairs], dtype=np.float64)
    if not (np.isfinite(src).all() and np.isfinite(dst).all()):
        raise ValidationError("correspondence coordinates must be finite")
    return src, dst, w


class Homography:
    """3x3 projective warp, normalized so h[2,2] == 1 when nonzero."""

    def __init__(self, h):
        h = _as_float(h, (3, 3), "h")
        if not np.isfinite(h).all():
            raise ValidationError("homography entries must be finite")
        if abs(np.linalg.det(h)) < 1e-12:
            raise ValidationError("homography must be nonsingular")
        if abs(h[2, 2]) > 1e-12:
            h = h / h[2, 2]
        self.h = h

    @staticmethod
    def identity() -> "Homography":
        return Homography(np.eye(3))

    @staticmethod
    def translation(dx: float, dy: float) -> "Homography":
        h = np.eye(3)
        h[0, 2], h[1, 2] = dx, dy
        return Homography(h)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))

    def compose(self, other: "Homography") -> "Homography":
        return Homography(self.h @ other.h)

    def transform(self, pts: np.ndarray) -> np.ndarray:
        """Map raw Nx2 points; caller is responsible for w != 0."""
        pts = np.asarray(pts, dtype=np.float64)
        ph = np.concatenate([pts, np.ones((len(pts), 1))], axis=1)
        out = ph @ self.h.T
        return out[:, :2] / out[:, 2:3]

    def __repr__(self):
        return f"Homography({self.h.tolist()})"


def project_points(points: JointSet3D, cam: CameraModel) -> JointSet2D:
    """Project world-frame joints through a pinhole camera.

    Points behind the camera (depth <= 1e-6 m after the world-to-camera
    transform) come back flagged invisible with zeroed coordinates; the
    flags of already-invisible input joints are preserved.
    """
    if not np.isfinite(points.coords[points.visible]).all():
        raise ValidationError("visible joint coordinates must be finite")
    pc = cam.world_to_cam.apply(points.coords)
    z = pc[:, 2]
    vis = points.visible & (z > MIN_DEPTH)
    uv = np.zeros((len(points), 2))
    zs = np.where(vis, z, 1.0)
    uv[:, 0] = cam.fx * pc[:, 0] / zs + cam.cx
    uv[:, 1] = cam.fy * pc[:, 1] / zs + cam.cy
    uv[~vis] = 0.0
    return JointSet2D(uv, vis)


def _normalizer(pts: np.ndarray) -> np.ndarray:
    """Hartley similarity: centroid to origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    mean_dist = np.linalg.norm(pts - centroid, axis=1).mean()
    if mean_dist < 1e-12:
        raise DegenerateInputError("coincident", "all points coincide")
    s = np.sqrt(2.0) / mean_dist
    return np.array([[s, 0, -s * centroid[0]],
                     [0, s, -s * centroid[1]],
                     [0, 0, 1]])


def _design_rows(src, dst):
    """Stack the two DLT rows per pair into a 2n x 9 matrix."""
    n = len(src)
    x, y = src[:, 0], src[:, 1]
    u, v = dst[:, 0], dst[:, 1]
    a = np.zeros((2 * n, 9))
    a[0::2, 0] = x
    a[0::2, 1] = y
    a[0::2, 2] = 1
    a[0::2, 6] = -u * x
    a[0::2, 7] = -u * y
    a[0::2, 8] = -u
    a[1::2, 3] = x
    a[1::2, 4] = y
    a[1::2, 5] = 1
    a[1::2, 6] = -v * x
    a[1::2, 7] = -v * y
    a[1::2, 8] = -v
    return a


def _has_collinear_triple(pts: np.ndarray) -> bool:
    diag2 = np.sum((pts.max(axis=0) - pts.min(axis=0)) ** 2)
    tol = _COLLINEAR_REL_AREA * max(diag2, 1e-12)
    for i, j, k in itertools.combinations(range(len(pts)), 3):
        ab = pts[j] - pts[i]
        ac = pts[k] - pts[i]
        area = 0.5 * abs(ab[0] * ac[1] - ab[1] * ac[0])
        if area < tol:
            return True
    return False


def estimate_homography_dlt(pairs) -> Homography:
    """Least-squares homography via normalized DLT.

    Exact (to float64 round-off) for noise-free consistent inputs.
    Raises DegenerateInputError for <4 pairs or collinear configurations.
    """
    src, dst, w = pairs_to_arrays(pairs)
    n = len(src)
    if n < 4:
        raise DegenerateInputError("too_few_pairs", f"need >=4 pairs, got {n}")
    # A collinear triple is only fatal for the minimal problem; larger sets
    # are checked through the SVD spectrum below.
    if n == 4 and _has_collinear_triple(src):
        raise DegenerateInputError("collinear", "3 source points are collinear")
    t_src = _normalizer(src)
    t_dst = _normalizer(dst)
    sn = (np.c_[src, np.ones(n)] @ t_src.T)[:, :2]
    dn = (np.c_[dst, np.ones(n)] @ t_dst.T)[:, :2]
    a = _design_rows(sn, dn)
    a *= np.repeat(np.sqrt(np.maximum(w, 0.0)), 2)[:, None]
    _, s, vt = np.linalg.svd(a)
    if n > 4 and s[7] < 1e-9 * s[0]:
        raise DegenerateInputError("rank_deficient", "design matrix is rank deficient")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ hn @ t_src
    if abs(np.linalg.det(h)) < 1e-12:
        raise DegenerateInputError("singular", "estimated homography is singular")
    return Homography(h)


def symmetric_transfer_error(h: Homography, src, dst) -> np.ndarray:
    """Per-pair max of forward and backward transfer distances (pixels)."""
    fwd = np.linalg.norm(h.transform(src) - dst, axis=1)
    bwd = np.linalg.norm(h.inverse().transform(dst) - src, axis=1)
    return np.maximum(fwd, bwd)


def _batched_minimal_homographies(src, dst, samples):
    """Solve the unnormalized 8x9 DLT for every 4-point sample at once."""
    m = len(samples)
    a = np.zeros((m, 8, 9))
    s4 = src[samples]  # (m, 4, 2)
    d4 = dst[samples]
    x, y = s4[:, :, 0], s4[:, :, 1]
    u, v = d4[:, :, 0], d4[:, :, 1]
    a[:, 0::2, 0] = x
    a[:, 0::2, 1] = y
    a[:, 0::2, 2] = 1
    a[:, 0::2, 6] = -u * x
    a[:, 0::2, 7] = -u * y
    a[:, 0::2, 8] = -u
    a[:, 1::2, 3] = x
    a[:, 1::2, 4] = y
    a[:, 1::2, 5] = 1
    a[:, 1::2, 6] = -v * x
    a[:, 1::2, 7] = -v * y
    a[:, 1::2, 8] = -v
    _, _, vt = np.linalg.svd(a)
    return vt[:, -1, :].reshape(m, 3, 3)


def estimate_homography_ransac(pairs, threshold_px: float, max_iters: int = 2000,
                               seed: int = 0):
    """RANSAC homography with symmetric transfer error scoring.

    Runs a fixed iteration budget (no adaptive early exit) so identical
    inputs and seed give bit-identical results. The winning minimal model
    is refit by normalized DLT on its inliers; the returned mask is the
    inlier set of that refit model.

    Returns (Homography, bool inlier mask). Raises NoConsensusError when
    no candidate reaches 4 inliers.
    """
    if threshold_px <= 0:
        raise ValidationError("threshold_px must be positive")
    src, dst, _ = pairs_to_arrays(pairs)
    n = len(src)
    if n < 4:
        raise DegenerateInputError("too_few_pairs", f"need >=4 pairs, got {n}")
    rng = np.random.default_rng(seed)
    # argsort of uniform draws = 4 distinct indices per iteration
    samples = np.argsort(rng.random((max_iters, n)), axis=1)[:, :4]
    hs = _batched_minimal_homographies(src, dst, samples)

    dets = np.linalg.det(hs)
    valid = np.isfinite(dets) & (np.abs(dets) > 1e-12)
    hs_safe = np.where(valid[:, None, None], hs, np.eye(3))
    hinv = np.linalg.inv(hs_safe)

    src_h = np.c_[src, np.ones(n)]
    dst_h = np.c_[dst, np.ones(n)]

    def _dists(mats, pts_h, targets):
        mapped = np.einsum("mij,nj->mni", mats, pts_h)
        wcomp = mapped[:, :, 2]
        ok = np.abs(wcomp) > 1e-12
        uv = mapped[:, :, :2] / np.where(ok, wcomp, 1.0)[:, :, None]
        d = np.linalg.norm(uv - targets[None, :, :], axis=2)
        return np.where(ok, d, np.inf)

    err = np.maximum(_dists(hs_safe, src_h, dst), _dists(hinv, dst_h, src))
    inliers = (err <= threshold_px) & valid[:, None]
    counts = inliers.sum(axis=1)
    best = int(np.argmax(counts))
    if counts[best] < 4:
        raise NoConsensusError("no candidate model reached 4 inliers")

    mask = inliers[best]
    h = estimate_homography_dlt(np.c_[src[mask], dst[mask]])
    final_mask = symmetric_transfer_error(h, src, dst) <= threshold_px
    return h, final_mask


def apply_homography(h: Homography, pts: JointSet2D) -> JointSet2D:
    """Warp a joint set; joints landing near the line at infinity go invisible."""
    ph = np.c_[pts.coords, np.ones(len(pts))]
    out = ph @ h.h.T
    w = out[:, 2]
    ok = np.abs(w) > 1e-9
    vis = pts.visible & ok
    uv = np.zeros((len(pts), 2))
    uv[ok] = out[ok, :2] / w[ok, None]
    uv[~vis] = 0.0
    return JointSet2D(uv, vis)


def warp_frame(h: Homography, frame: np.ndarray) -> np.ndarray:
    """Warp an HxWx3 uint8 frame by inverse-mapped bilinear resampling.

    Samples falling outside the source frame produce black.
    """
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3 or frame.dtype != np.uint8:
        raise ValidationError("frame must be HxWx3 uint8")
    hh, ww = frame.shape[:2]
    ys, xs = np.mgrid[0:hh, 0:ww]
    dst_pts = np.c_[xs.ravel(), ys.ravel()].astype(np.float64)
    src_pts = h.inverse().transform(dst_pts)
    sx, sy = src_pts[:, 0], src_pts[:, 1]

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0

    out = np.zeros((hh * ww, 3), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            wgt = (fx if dx else 1 - fx) * (fy if dy else 1 - fy)
            ok = (xi >= 0) & (xi < ww) & (yi >= 0) & (yi < hh) & (wgt > 0)
            out[ok] += wgt[ok, None] * frame[yi[ok], xi[ok]].astype(np.float64)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8).reshape(hh, ww, 3)
