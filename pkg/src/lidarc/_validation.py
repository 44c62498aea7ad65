"""Input validation shared by the estimator wrappers and the functional API."""

from __future__ import annotations

import hashlib
import numbers

import numpy as np

from .errors import EmptyCloud, LidarcError
from .scan_io import PointCloud


def check_cloud(X, *, min_points: int = 0) -> PointCloud:
    """Coerce ``X`` into a :class:`PointCloud`.

    Accepts a PointCloud, an ``(N, 4)`` array, or an ``(N, 3)`` array (in
    which case intensities are zero).
    """
    if isinstance(X, PointCloud):
        cloud = X
    else:
        arr = np.asarray(X, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[1] not in (3, 4):
            raise LidarcError(f"expected an (N, 3) or (N, 4) array, got shape {arr.shape}")
        if arr.shape[1] == 3:
            arr = np.hstack([arr, np.zeros((arr.shape[0], 1), dtype=np.float32)])
        if not np.isfinite(arr).all():
            raise LidarcError("input contains NaN or Inf")
        cloud = PointCloud(arr)
    if len(cloud) < min_points:
        raise EmptyCloud(f"need at least {min_points} point(s), got {len(cloud)}")
    return cloud


def check_fraction(value, name: str, *, upper: float | None = 1.0) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise LidarcError(f"{name} must be a finite non-negative number, got {value!r}")
    if upper is not None and value > upper:
        raise LidarcError(f"{name} must be <= {upper}, got {value!r}")
    return float(value)


def check_rng(random_state) -> np.random.Generator:
    """Turn ``None``, an int, a SeedSequence or a Generator into a Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def spawn(random_state, n: int) -> list[np.random.Generator]:
    """Independent child generators, stable for integer seeds."""
    if isinstance(random_state, np.random.Generator):
        return list(random_state.spawn(n))
    seq = random_state if isinstance(random_state, np.random.SeedSequence) else np.random.SeedSequence(random_state)
    return [np.random.default_rng(s) for s in seq.spawn(n)]


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary parts, independent of PYTHONHASHSEED."""
    key = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))
