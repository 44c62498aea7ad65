"""Range-image, polar BEV and voxel representations of a scan."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import check_cloud
from .errors import DegenerateBounds, DegenerateFov, EmptyCloud, LidarcError
from .scan_io import PointCloud

RANGE_CHANNELS = ("x", "y", "z", "intensity", "range")
POLAR_BOUNDS = ((3.0, -np.pi, -3.0), (50.0, np.pi, 1.5))
CYLINDER_VOXEL = (0.05, 0.001 * np.pi, 0.05)


@dataclass(frozen=True, eq=False)
class RangeImage:
    """``data`` is ``(H, W, 5)`` with channels x, y, z, intensity, range.

    Invalid pixels hold -1 in every channel and ``index`` -1; ``index`` is
    the source point of each valid pixel.
    """

    data: np.ndarray
    mask: np.ndarray
    index: np.ndarray
    fov_up: float
    fov_down: float

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def channel(self, name: str) -> np.ndarray:
        return self.data[..., RANGE_CHANNELS.index(name)]


def range_pixels(xyz, width: int, height: int, fov_up: float, fov_down: float):
    """Pixel column and row of each point; angles in radians."""
    xyz = np.asarray(xyz, dtype=np.float64)
    fov = fov_up - fov_down
    r = np.linalg.norm(xyz, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        pitch = np.arcsin(np.clip(xyz[:, 2] / r, -1.0, 1.0))
    pitch = np.nan_to_num(pitch)
    u = 0.5 * (1.0 - np.arctan2(xyz[:, 1], xyz[:, 0]) / np.pi) * width
    v = (1.0 - (pitch + abs(fov_down)) / fov) * height
    u = np.clip(np.floor(u), 0, width - 1).astype(np.int64)
    v = np.clip(np.floor(v), 0, height - 1).astype(np.int64)
    return u, v, r


def range_project(cloud, width: int = 2048, height: int = 64,
                  fov_up: float = np.deg2rad(3.0), fov_down: float = np.deg2rad(-25.0)) -> RangeImage:
    """Spherical projection; the nearest point wins a contested pixel.

    Row 0 corresponds to ``fov_up``. Equal ranges resolve to the lower
    point index.
    """
    cloud = check_cloud(cloud, min_points=1)
    if width < 1 or height < 1:
        raise LidarcError("image size must be positive")
    if not fov_up > fov_down:
        raise DegenerateFov(f"fov_up ({fov_up}) must exceed fov_down ({fov_down})")
    u, v, r = range_pixels(cloud.xyz, width, height, fov_up, fov_down)
    n = len(cloud)
    # write far-to-near so the nearest (then lowest index) lands last
    order = np.lexsort((-np.arange(n), -r))
    data = np.full((height, width, 5), -1.0, dtype=np.float32)
    index = np.full((height, width), -1, dtype=np.int64)
    feats = np.column_stack([cloud.data, r.astype(np.float32)])
    data[v[order], u[order]] = feats[order]
    index[v[order], u[order]] = order
    mask = index >= 0
    return RangeImage(data, mask, index, float(fov_up), float(fov_down))


@dataclass(frozen=True, eq=False)
class BevImage:
    """Polar bird's-eye view: ``counts`` and per-cell ``mean`` (x, y, z, intensity)."""

    counts: np.ndarray
    mean: np.ndarray
    cell_of: np.ndarray
    n_dropped: int
    bounds: tuple


def polar_coordinates(xyz, planar_radius: bool = False):
    """``(u_p, v_p)`` = ``r * (cos phi, sin phi)`` with ``r`` the 3-D range.

    ``planar_radius`` swaps in ``sqrt(x^2 + y^2)`` for ``r``.
    """
    xyz = np.asarray(xyz, dtype=np.float64)
    r = np.hypot(xyz[:, 0], xyz[:, 1]) if planar_radius else np.linalg.norm(xyz, axis=1)
    phi = np.arctan2(xyz[:, 1], xyz[:, 0])
    return r * np.cos(phi), r * np.sin(phi)


def polar_cells(xyz, height: int, width: int, bounds=POLAR_BOUNDS, planar_radius: bool = False):
    """Cell ``(row, col)`` per point, -1 where the point falls outside ``bounds``.

    Rows split the radial extent into ``height`` bins, columns split the
    angle into ``width`` bins; the upper bound is inclusive.
    """
    lo = np.asarray(bounds[0], dtype=np.float64)
    hi = np.asarray(bounds[1], dtype=np.float64)
    if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo) or height < 1 or width < 1:
        raise DegenerateBounds(f"invalid polar bounds {bounds} or grid {height}x{width}")
    xyz = np.asarray(xyz, dtype=np.float64)
    u_p, v_p = polar_coordinates(xyz, planar_radius)
    rho = np.hypot(u_p, v_p)
    phi = np.arctan2(v_p, u_p)
    z = xyz[:, 2]
    inside = (rho >= lo[0]) & (rho <= hi[0]) & (phi >= lo[1]) & (phi <= hi[1]) & (z >= lo[2]) & (z <= hi[2])
    row = np.minimum(np.floor((rho - lo[0]) / (hi[0] - lo[0]) * height), height - 1).astype(np.int64)
    col = np.minimum(np.floor((phi - lo[1]) / (hi[1] - lo[1]) * width), width - 1).astype(np.int64)
    row[~inside] = -1
    col[~inside] = -1
    return row, col


def polar_project(cloud, height: int = 480, width: int = 360, bounds=POLAR_BOUNDS,
                  planar_radius: bool = False) -> BevImage:
    cloud = check_cloud(cloud)
    row, col = polar_cells(cloud.xyz, height, width, bounds, planar_radius)
    ok = row >= 0
    flat = row[ok] * width + col[ok]
    counts = np.bincount(flat, minlength=height * width)
    sums = np.stack([np.bincount(flat, weights=cloud.data[ok, c].astype(np.float64),
                                 minlength=height * width) for c in range(4)], axis=1)
    with np.errstate(invalid="ignore"):
        mean = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], 0.0)
    cell_of = np.where(ok, row * width + col, -1)
    return BevImage(counts.reshape(height, width), mean.reshape(height, width, 4),
                    cell_of, int((~ok).sum()), (tuple(bounds[0]), tuple(bounds[1])))


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Non-empty voxels only, sorted lexicographically by ``coords``.

    ``features`` is the mean of member points' original ``x, y, z,
    intensity``; ``centroids`` the mean of the coordinates that were
    actually voxelised (normalised or polar). ``voxel_of`` maps each input
    point to its row in ``coords``.
    """

    coords: np.ndarray
    counts: np.ndarray
    features: np.ndarray
    centroids: np.ndarray
    voxel_of: np.ndarray
    voxel_size: tuple
    mode: str

    def __len__(self) -> int:
        return len(self.coords)

    def as_dict(self) -> dict:
        return {tuple(int(v) for v in c): (int(n), f) for c, n, f in zip(self.coords, self.counts, self.features)}


def normalize_unit(xyz) -> np.ndarray:
    """Centre on the centroid, scale into the unit ball, map to ``[0, 1]``."""
    xyz = np.asarray(xyz, dtype=np.float64)
    centred = xyz - xyz.mean(axis=0)
    scale = np.linalg.norm(centred, axis=1).max()
    if scale > 0:
        centred = centred / scale
    return (centred + 1.0) / 2.0


def voxelize(cloud, mode: str = "grid", voxel_size=None, normalize: bool = True,
             planar_radius: bool = False) -> VoxelGrid:
    """Sparse voxelisation in Cartesian (``grid``) or cylindrical coordinates.

    The result is independent of input point order.
    """
    cloud = check_cloud(cloud)
    if len(cloud) == 0:
        raise EmptyCloud("cannot voxelise an empty cloud")
    if mode not in ("grid", "cylinder"):
        raise LidarcError(f"unknown voxel mode {mode!r}")
    if voxel_size is None:
        voxel_size = CYLINDER_VOXEL if mode == "cylinder" else 0.05
    vs = np.broadcast_to(np.asarray(voxel_size, dtype=np.float64), (3,))
    if np.any(vs <= 0):
        raise LidarcError(f"voxel size must be positive, got {voxel_size}")

    # canonical point order makes every reduction below order-independent
    data = cloud.data
    canon = np.lexsort(data.T[::-1])
    pts = data[canon].astype(np.float64)

    if mode == "grid":
        coords_f = normalize_unit(pts[:, :3]) if normalize else pts[:, :3]
    else:
        u_p, v_p = polar_coordinates(pts[:, :3], planar_radius)
        coords_f = np.column_stack([np.hypot(u_p, v_p), np.arctan2(v_p, u_p), pts[:, 2]])
    keys = np.floor(coords_f / vs).astype(np.int64)

    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    order = np.argsort(inverse, kind="stable")
    starts = np.r_[0, np.cumsum(counts)[:-1]]
    features = np.add.reduceat(pts[order], starts, axis=0) / counts[:, None]
    centroids = np.add.reduceat(coords_f[order], starts, axis=0) / counts[:, None]

    voxel_of = np.empty(len(pts), dtype=np.int64)
    voxel_of[canon] = inverse
    return VoxelGrid(uniq, counts, features, centroids, voxel_of, tuple(float(v) for v in vs), mode)


def render_range_image(img: RangeImage, channel: str, path: str | os.PathLike) -> None:
    """Binary PGM (P5) of one channel, min-max scaled over valid pixels.

    Valid pixels map to 1..255 so they never collide with black invalid
    pixels; a constant channel renders as uniform 255.
    """
    if channel not in ("range", "intensity"):
        raise LidarcError(f"channel must be 'range' or 'intensity', got {channel!r}")
    write_pgm(img.channel(channel), img.mask, path)


def write_pgm(values: np.ndarray, mask: np.ndarray, path: str | os.PathLike) -> None:
    values = np.asarray(values, dtype=np.float64)
    height, width = values.shape
    pix = np.zeros((height, width), dtype=np.uint8)
    if mask.any():
        lo, hi = values[mask].min(), values[mask].max()
        if hi > lo:
            scaled = 1.0 + 254.0 * (values[mask] - lo) / (hi - lo)
            pix[mask] = np.clip(np.rint(scaled), 1, 255).astype(np.uint8)
        else:
            pix[mask] = 255
    header = f"P5 {width} {height} 255\n".encode("ascii")
    Path(path).write_bytes(header + pix.tobytes())
