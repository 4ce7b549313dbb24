"""Episode scoring, filtering, and per-frame homography rectification.

Scores an episode by the median rendered-vs-observed match residual,
discards episodes whose discrepancy is significant, and warps per-frame
skeleton geometry with a robustly estimated homography so renders stay
aligned with the real video.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConsensusError, UnscorableError, ValidationError
from .geom import (Homography, JointSet2D, apply_homography,
                   estimate_homography_ransac, pairs_to_arrays)


@dataclass
class EpisodeScore:
    per_frame_discrepancy: list  # (frame_index, median residual px, pair count)
    episode_median: float
    frames_evaluated: int
    frames_skipped: int = 0


@dataclass
class RansacParams:
    threshold_px: float = 2.0
    max_iters: int = 500
    seed: int = 0


@dataclass
class RectifyResult:
    homographies: list       # one Homography per input frame
    joints: list             # rectified JointSet2D per frame
    inlier_ratios: list      # 0.0 for carried-over frames
    carried_over: list       # True where the previous frame's model was reused


def score_episode(corr_stream) -> EpisodeScore:
    """Median match residual per frame and over the episode.

    ``corr_stream`` is a sequence of (frame_index, pairs) where pairs is
    anything ``pairs_to_arrays`` accepts. Frames with zero pairs are
    excluded from the medians but counted in ``frames_skipped``.
    """
    per_frame = []
    skipped = 0
    for frame_index, pairs in corr_stream:
        if len(pairs) == 0:
            skipped += 1
            continue
        src, dst, _ = pairs_to_arrays(pairs)
        residuals = np.linalg.norm(dst - src, axis=1)
        per_frame.append((frame_index, float(np.median(residuals)), len(src)))
    if not per_frame:
        raise UnscorableError("no frame has correspondences to score")
    episode_median = float(np.median([m for _, m, _ in per_frame]))
    return EpisodeScore(per_frame, episode_median, len(per_frame), skipped)


def filter_episodes(scores, tau_med: float = 8.0, tau_frac: float = 0.25):
    """Keep/discard decision per episode.

    Discard when the episode median residual exceeds ``tau_med`` or the
    fraction of evaluated frames above ``tau_med`` exceeds ``tau_frac``.
    Returns a list of booleans, True = keep.
    """
    if tau_med <= 0 or not 0 < tau_frac <= 1:
        raise ValidationError("tau_med must be > 0 and tau_frac in (0, 1]")
    decisions = []
    for s in scores:
        bad_frames = sum(1 for _, m, _ in s.per_frame_discrepancy if m > tau_med)
        frac = bad_frames / s.frames_evaluated
        decisions.append(not (s.episode_median > tau_med or frac > tau_frac))
    return decisions


def rectify_episode(joint_sequence, corr_stream, ransac: RansacParams = None,
                    min_pairs: int = 8) -> RectifyResult:
    """Per-frame homography warp of a projected joint sequence.

    ``joint_sequence`` and ``corr_stream`` are frame-aligned: element i of
    the stream holds the matched pairs for joint set i (pairs may be
    empty). Frames with fewer than ``min_pairs`` pairs, or where RANSAC
    finds no consensus, reuse the nearest previous frame's homography
    (identity when there is none) and are flagged carried over.
    """
    ransac = ransac or RansacParams()
    if len(joint_sequence) != len(corr_stream):
        raise ValidationError("joint sequence and correspondence stream must align")
    current = Homography.identity()
    homographies, rectified, ratios, carried = [], [], [], []
    for joints, pairs in zip(joint_sequence, corr_stream):
        carried_over = True
        ratio = 0.0
        if len(pairs) >= min_pairs:
            src, dst, _ = pairs_to_arrays(pairs)
            if np.array_equal(src, dst):
                # Zero residual needs no estimation; keeps the no-drift
                # case bit-exact instead of within SVD round-off.
                current = Homography.identity()
                homographies.append(current)
                ratios.append(1.0)
                carried.append(False)
                rectified.append(apply_homography(current, joints))
                continue
            try:
                h, mask = estimate_homography_ransac(
                    pairs, ransac.threshold_px, ransac.max_iters, ransac.seed)
                current = h
                ratio = float(mask.mean())
                carried_over = False
            except NoConsensusError:
                pass
        homographies.append(current)
        ratios.append(ratio)
        carried.append(carried_over)
        rectified.append(apply_homography(current, joints))
    return RectifyResult(homographies, rectified, ratios, carried)
