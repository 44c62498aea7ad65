"""Measurement-noise corruptions: global outliers and local distortion."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_cloud, check_fraction, check_rng, round_half_up
from .labels import ProvenanceSet, Tag
from .scan_io import PointCloud

OUTLIER_LEVELS = {"light": 0.001, "moderate": 0.05, "heavy": 0.5}
DISTORTION_LEVELS = {"light": 0.05, "moderate": 0.1, "heavy": 0.2}
DISTORTION_FRACTION = 0.2


def sample_unit_ball(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples in the unit ball by rejection from the enclosing cube."""
    out = np.empty((0, 3))
    while len(out) < n:
        need = n - len(out)
        cand = rng.uniform(-1.0, 1.0, size=(int(need * 2.0) + 16, 3))
        cand = cand[(cand ** 2).sum(axis=1) <= 1.0]
        out = np.vstack([out, cand[:need]])
    return out


def apply_global_outliers(cloud: PointCloud, ratio: float, random_state=None):
    """Append ``round(ratio * N)`` points drawn uniformly in the ball that
    reaches the farthest clean point. Injected intensities are uniform in
    ``[0, 1]``.
    """
    cloud = check_cloud(cloud, min_points=1)
    ratio = check_fraction(ratio, "ratio", upper=None)
    rng = check_rng(random_state)
    n = len(cloud)
    n_noise = round_half_up(ratio * n)
    radius = float(cloud.ranges().max())
    xyz = sample_unit_ball(n_noise, rng) * radius
    # float32 rounding must not push a sample past the farthest clean point
    xyz32 = xyz.astype(np.float32)
    r32 = np.linalg.norm(xyz32.astype(np.float64), axis=1)
    over = r32 > radius
    if over.any():
        xyz32[over] = (xyz[over] * (1 - 1e-6)).astype(np.float32)
    intensity = rng.uniform(0.0, 1.0, n_noise)
    noise = PointCloud.from_xyzi(xyz32, intensity)
    tags = np.concatenate([np.full(n, Tag.ORIGINAL), np.full(n_noise, Tag.INJECTED)])
    source = np.concatenate([np.arange(n), np.full(n_noise, -1)])
    return cloud.concat(noise), ProvenanceSet(tags, source)


def apply_local_distortion(cloud: PointCloud, sigma: float, fraction: float = DISTORTION_FRACTION,
                           random_state=None):
    """Jitter ``round(fraction * N)`` randomly chosen points with N(0, sigma^2)
    offsets per axis. Count, order and intensities are unchanged.
    """
    cloud = check_cloud(cloud, min_points=1)
    sigma = check_fraction(sigma, "sigma", upper=None)
    fraction = check_fraction(fraction, "fraction")
    rng = check_rng(random_state)
    n = len(cloud)
    n_moved = round_half_up(fraction * n)
    picked = np.sort(rng.choice(n, size=n_moved, replace=False))
    offsets = rng.normal(0.0, sigma, size=(n_moved, 3))
    data = cloud.data.copy()
    data[picked, :3] = (data[picked, :3].astype(np.float64) + offsets).astype(np.float32)
    tags = np.full(n, Tag.ORIGINAL, dtype=np.uint8)
    tags[picked] = Tag.DISPLACED
    return PointCloud(data), ProvenanceSet(tags, np.arange(n))


class GlobalOutliers(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`apply_global_outliers`."""

    def __init__(self, ratio: float = 0.05, random_state=None):
        self.ratio = ratio
        self.random_state = random_state

    def fit(self, X=None, y=None):
        return self

    def corrupt(self, X):
        return apply_global_outliers(X, self.ratio, self.random_state)

    def transform(self, X):
        return self.corrupt(X)[0].data


class LocalDistortion(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`apply_local_distortion`."""

    def __init__(self, sigma: float = 0.1, fraction: float = DISTORTION_FRACTION, random_state=None):
        self.sigma = sigma
        self.fraction = fraction
        self.random_state = random_state

    def fit(self, X=None, y=None):
        return self

    def corrupt(self, X):
        return apply_local_distortion(X, self.sigma, self.fraction, self.random_state)

    def transform(self, X):
        return self.corrupt(X)[0].data
