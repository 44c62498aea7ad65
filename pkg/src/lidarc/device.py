"""Cross-device beam reduction.

Beam labels are not stored in most datasets, so they are recovered by 1-D
K-Means on the zenith angle of every point. With beams known, a 64-beam
scan can be reduced to 32 or 16 beams, and each beam can be thinned evenly
along azimuth to mimic a slower-spinning sensor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_cloud
from .errors import DegeneratePoint, IndivisibleBeamCount, LidarcError, TooFewPoints
from .labels import ProvenanceSet, Tag
from .scan_io import LabelSet, PointCloud, check_paired


def spherical_angles(point) -> tuple[float, float]:
    """Zenith and azimuth of a single point, in radians.

    Zenith is ``arctan(z / sqrt(x^2 + y^2))``. Azimuth uses the two-argument
    arctangent so front and back hemispheres are distinguished.
    """
    x, y, z = (float(v) for v in point[:3])
    planar = math.hypot(x, y)
    if planar == 0.0:
        raise DegeneratePoint(f"azimuth undefined for point on the vertical axis {(x, y, z)}")
    return math.atan(z / planar), math.atan2(y, x)


def zenith_angles(xyz) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=np.float64)
    return np.arctan2(xyz[:, 2], np.hypot(xyz[:, 0], xyz[:, 1]))


def azimuth_angles(xyz) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=np.float64)
    return np.arctan2(xyz[:, 1], xyz[:, 0])


def _assign(values: np.ndarray, centers: np.ndarray) -> np.ndarray:
    bounds = (centers[:-1] + centers[1:]) / 2.0
    return np.searchsorted(bounds, values, side="left")


class BeamKMeans(BaseEstimator):
    """Lloyd's K-Means on zenith angles with deterministic quantile init.

    Parameters
    ----------
    n_clusters : int
        Number of beams to recover.
    max_iter : int
        Iteration cap; Lloyd also stops as soon as no assignment changes.

    Attributes
    ----------
    cluster_centers_ : ndarray of shape (n_clusters,)
        Zenith centres in radians, strictly increasing.
    labels_ : ndarray of shape (n_points,)
        Index into ``cluster_centers_`` for every fitted point.
    inertia_history_ : list of float
        Within-cluster sum of squares after each assignment step.
    """

    def __init__(self, n_clusters: int = 64, max_iter: int = 100):
        self.n_clusters = n_clusters
        self.max_iter = max_iter

    def fit(self, X, y=None):
        return self.fit_angles(zenith_angles(check_cloud(X).xyz))

    def fit_angles(self, theta):
        x = np.asarray(theta, dtype=np.float64).ravel()
        k = int(self.n_clusters)
        if k < 1:
            raise LidarcError("n_clusters must be >= 1")
        if len(x) < k:
            raise TooFewPoints(f"{len(x)} points cannot form {k} beams")
        xs = np.sort(x)
        if k > 1 and np.count_nonzero(np.diff(xs)) + 1 < k:
            raise TooFewPoints(f"fewer than {k} distinct zenith values")

        n = len(xs)
        centers = xs[np.minimum(((np.arange(k) + 0.5) * n / k).astype(np.int64), n - 1)]
        labels = _assign(x, centers)
        history = [float(((x - centers[labels]) ** 2).sum())]
        n_iter = 0
        for n_iter in range(1, int(self.max_iter) + 1):
            counts = np.bincount(labels, minlength=k)
            sums = np.bincount(labels, weights=x, minlength=k)
            new = centers.copy()
            filled = counts > 0
            new[filled] = sums[filled] / counts[filled]
            if not filled.all():
                # re-seed each empty cluster at the point farthest from its centre
                dist = np.abs(x - centers[labels])
                taken = np.zeros(len(x), dtype=bool)
                for c in np.flatnonzero(~filled):
                    cand = np.where(taken, -1.0, dist)
                    i = int(np.argmax(cand))  # argmax returns the lowest index on ties
                    taken[i] = True
                    new[c] = x[i]
            centers = np.sort(new, kind="stable")
            new_labels = _assign(x, centers)
            history.append(float(((x - centers[new_labels]) ** 2).sum()))
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels

        self.cluster_centers_ = centers
        self.labels_ = labels
        self.n_iter_ = n_iter
        self.inertia_ = history[-1]
        self.inertia_history_ = history
        return self

    def predict(self, X):
        return _assign(zenith_angles(check_cloud(X).xyz), self.cluster_centers_)

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


@dataclass(frozen=True, eq=False)
class BeamAssignment:
    """Beam index per point into ``centers`` (zenith radians, ascending)."""

    beam_of: np.ndarray
    centers: np.ndarray

    def __post_init__(self):
        if len(self.centers) > 1 and not np.all(np.diff(self.centers) > 0):
            raise LidarcError("beam centres must be strictly increasing")

    @property
    def n_beams(self) -> int:
        return len(self.centers)

    def __len__(self) -> int:
        return len(self.beam_of)

    def take(self, idx) -> "BeamAssignment":
        return BeamAssignment(np.asarray(self.beam_of)[idx], self.centers)

    def top_down(self) -> np.ndarray:
        """Beam rank with 0 for the highest ring."""
        return self.n_beams - 1 - np.asarray(self.beam_of)


def assign_beam_labels(cloud, k: int = 64, max_iter: int = 100) -> BeamAssignment:
    km = BeamKMeans(n_clusters=k, max_iter=max_iter).fit(cloud)
    return BeamAssignment(km.labels_, km.cluster_centers_)


def _subset(cloud: PointCloud, labels: LabelSet | None, keep: np.ndarray):
    idx = np.flatnonzero(keep)
    prov = ProvenanceSet(np.full(len(idx), Tag.ORIGINAL, dtype=np.uint8), idx)
    return cloud.take(idx), (labels.take(idx) if labels is not None else None), prov


def reduce_beams(cloud: PointCloud, labels: LabelSet | None, assignment: BeamAssignment,
                 target: int):
    """Keep every ``K // target``-th beam counting from the top ring."""
    check_paired(cloud, labels)
    k = assignment.n_beams
    if target < 1 or target > k or k % target:
        raise IndivisibleBeamCount(f"cannot reduce {k} beams to {target}")
    keep = assignment.top_down() % (k // target) == 0
    return _subset(cloud, labels, keep)


def _ratio_to_step(keep_ratio) -> int:
    if isinstance(keep_ratio, str):
        keep_ratio = Fraction(keep_ratio)
    if keep_ratio <= 0 or keep_ratio > 1:
        raise LidarcError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
    m = round(1 / keep_ratio)
    if abs(1 / m - float(keep_ratio)) > 1e-9:
        raise LidarcError(f"keep_ratio must be 1/m for an integer m, got {keep_ratio}")
    return int(m)


def subsample_azimuth(cloud: PointCloud, labels: LabelSet | None, assignment: BeamAssignment,
                      keep_ratio=Fraction(1, 2)):
    """Within every beam, sort by azimuth and keep every m-th point.

    ``keep_ratio`` is ``1/m``; each beam keeps ``ceil(n_b / m)`` points.
    """
    check_paired(cloud, labels)
    m = _ratio_to_step(keep_ratio)
    n = len(cloud)
    beam = np.asarray(assignment.beam_of)
    order = np.lexsort((np.arange(n), azimuth_angles(cloud.xyz), beam))
    sorted_beam = beam[order]
    starts = np.flatnonzero(np.r_[True, sorted_beam[1:] != sorted_beam[:-1]]) if n else np.zeros(0, int)
    group_start = np.repeat(starts, np.diff(np.r_[starts, n]))
    pos = np.arange(n) - group_start
    keep = np.zeros(n, dtype=bool)
    keep[order] = pos % m == 0
    return _subset(cloud, labels, keep)


def simulate_device(cloud: PointCloud, labels: LabelSet | None, assignment: BeamAssignment,
                    beams: int, sparse: bool = False, keep_ratio=None):
    """Dense: beam reduction only. Sparse: reduction then 1/2 azimuth thinning."""
    out, lab, prov = reduce_beams(cloud, labels, assignment, beams)
    if keep_ratio is None and sparse:
        keep_ratio = Fraction(1, 2)
    if keep_ratio is not None and _ratio_to_step(keep_ratio) > 1:
        out, lab, inner = subsample_azimuth(out, lab, assignment.take(prov.source), keep_ratio)
        prov = inner.compose(prov)
    return out, lab, prov


class CrossDevice(TransformerMixin, BaseEstimator):
    """Simulate a lower-resolution sensor from a high-beam scan.

    Beam labels come from :class:`BeamKMeans` with ``n_source_beams``
    clusters unless ``beam_ids`` are passed to :meth:`corrupt`.
    """

    def __init__(self, beams: int = 32, sparse: bool = False, keep_ratio=None,
                 n_source_beams: int = 64):
        self.beams = beams
        self.sparse = sparse
        self.keep_ratio = keep_ratio
        self.n_source_beams = n_source_beams

    def fit(self, X=None, y=None):
        return self

    def corrupt(self, X, labels: LabelSet | None = None, beam_ids=None):
        cloud = check_cloud(X, min_points=1)
        if beam_ids is None:
            assignment = assign_beam_labels(cloud, self.n_source_beams)
        else:
            assignment = _assignment_from_ids(cloud, beam_ids, self.n_source_beams)
        return simulate_device(cloud, labels, assignment, self.beams, self.sparse, self.keep_ratio)

    def transform(self, X):
        return self.corrupt(X)[0].data


def _assignment_from_ids(cloud: PointCloud, beam_ids, n_beams: int) -> BeamAssignment:
    """Wrap generator beam ids (0 = top ring) as an ascending-centre assignment."""
    ids = np.asarray(beam_ids, dtype=np.int64)
    if len(ids) != len(cloud):
        raise LidarcError(f"{len(ids)} beam ids for {len(cloud)} points")
    if ids.size and (ids.min() < 0 or ids.max() >= n_beams):
        raise LidarcError(f"beam ids must lie in [0, {n_beams})")
    asc = n_beams - 1 - ids
    counts = np.bincount(asc, minlength=n_beams)
    sums = np.bincount(asc, weights=zenith_angles(cloud.xyz), minlength=n_beams)
    filled = counts > 0
    centers = np.interp(np.arange(n_beams), np.flatnonzero(filled), sums[filled] / counts[filled])
    return BeamAssignment(asc, centers)
