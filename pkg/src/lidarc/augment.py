"""Scan-mixing augmentations: Mix3D and Instance CutMix."""

from __future__ import annotations

import numpy as np

from ._validation import check_rng
from .errors import NoInstancesFound
from .scan_io import LabelSet, PointCloud, check_paired

GROUND_RADIUS = 2.0
CLEARANCE = 0.5
MAX_TRIES = 10
GROUND_TOLERANCE = 0.2


def mix3d(a: tuple[PointCloud, LabelSet], b: tuple[PointCloud, LabelSet]):
    """Concatenate two labelled scans, ``a`` first."""
    (ca, la), (cb, lb) = a, b
    check_paired(ca, la)
    check_paired(cb, lb)
    return ca.concat(cb), la.concat(lb)


def _ground_height(target_xyz: np.ndarray, x: float, y: float) -> float:
    d = np.hypot(target_xyz[:, 0] - x, target_xyz[:, 1] - y)
    near = target_xyz[d <= GROUND_RADIUS, 2]
    pool = near if len(near) else target_xyz[:, 2]
    return float(np.percentile(pool, 5))


def _collides(target_xyz: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> bool:
    """Any non-ground target point within CLEARANCE of the box [lo, hi].

    Points less than GROUND_TOLERANCE above the box floor are the ground the
    instance stands on and do not count.
    """
    above = target_xyz[target_xyz[:, 2] > lo[2] + GROUND_TOLERANCE]
    gap = np.maximum(np.maximum(lo - above, above - hi), 0.0)
    return bool(((gap ** 2).sum(axis=1) <= CLEARANCE ** 2).any())


def instance_cutmix(target: tuple[PointCloud, LabelSet], source: tuple[PointCloud, LabelSet],
                    instance_classes, random_state=None, max_instances: int | None = None):
    """Paste source instances of ``instance_classes`` into the target scan.

    Each instance (points sharing semantic class and a non-zero instance
    id) is moved to a random x-y inside the target's bounding box, dropped
    onto the local ground, and skipped if no collision-free spot turns up
    in ``MAX_TRIES`` draws.
    """
    (tc, tl), (sc, sl) = target, source
    check_paired(tc, tl)
    check_paired(sc, sl)
    classes = sorted({int(c) for c in instance_classes})
    if not classes:
        return tc, tl
    rng = check_rng(random_state)

    sem, inst = sl.semantic, sl.instance
    pick = np.isin(sem, classes) & (inst > 0)
    if not pick.any():
        raise NoInstancesFound(f"source has no instances of classes {classes}")
    groups = np.unique(np.column_stack([sem[pick], inst[pick]]), axis=0)
    if max_instances is not None and len(groups) > max_instances:
        groups = groups[np.sort(rng.choice(len(groups), max_instances, replace=False))]

    txyz = tc.xyz.astype(np.float64)
    if len(txyz) == 0:
        return tc, tl
    bb_lo, bb_hi = txyz[:, :2].min(axis=0), txyz[:, :2].max(axis=0)
    clouds, labels = [tc], [tl]
    occupied = txyz
    for cls, iid in groups:
        members = np.flatnonzero((sem == cls) & (inst == iid))
        pts = sc.data[members].astype(np.float64)
        centre = pts[:, :2].mean(axis=0)
        for _ in range(MAX_TRIES):
            xy = rng.uniform(bb_lo, bb_hi)
            moved = pts.copy()
            moved[:, :2] += xy - centre
            moved[:, 2] += _ground_height(txyz, *xy) - pts[:, 2].min()
            if not _collides(occupied, moved[:, :3].min(axis=0), moved[:, :3].max(axis=0)):
                clouds.append(PointCloud(moved.astype(np.float32)))
                labels.append(LabelSet(sl.labels[members]))
                occupied = np.vstack([occupied, moved[:, :3]])
                break
    out_c, out_l = clouds[0], labels[0]
    for c, lab in zip(clouds[1:], labels[1:]):
        out_c, out_l = out_c.concat(c), out_l.concat(lab)
    return out_c, out_l
