import numpy as np
import pytest

from skelkit.geom import Homography


def random_homography(rng, scale=1.0):
    """Condition-bounded random projective transform around the identity."""
    angle = rng.uniform(-0.3, 0.3)
    c, s = np.cos(angle), np.sin(angle)
    h = np.array([
        [c * rng.uniform(0.8, 1.2), -s, rng.uniform(-30, 30)],
        [s, c * rng.uniform(0.8, 1.2), rng.uniform(-30, 30)],
        [rng.uniform(-1e-4, 1e-4), rng.uniform(-1e-4, 1e-4), 1.0],
    ])
    return Homography(h * scale if scale != 1.0 else h)


def inlier_outlier_pairs(rng, h, n_inliers=70, n_outliers=30, extent=500.0):
    """Synthetic pairs from a known homography plus uniform outliers."""
    src = rng.uniform(0, extent, (n_inliers + n_outliers, 2))
    dst = h.transform(src)
    if n_outliers:
        dst[n_inliers:] = rng.uniform(0, extent, (n_outliers, 2))
    is_inlier = np.zeros(n_inliers + n_outliers, dtype=bool)
    is_inlier[:n_inliers] = True
    perm = rng.permutation(len(src))
    return np.c_[src, dst][perm], is_inlier[perm]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
