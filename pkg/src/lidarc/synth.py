"""Deterministic synthetic LiDAR scenes with known labels and beam ids.

A virtual spinning sensor at the origin fires ``n_beams x points_per_beam``
rays: beam ``b`` sits at zenith ``fov_up - b * step`` (beam 0 is the top
ring) and azimuths are evenly spaced over ``[-pi, pi)``. Each ray is cast
against analytic shapes and returns the first hit; rays that hit nothing
produce no point.

Shapes:

* ``ground-plane`` -- horizontal plane at ``pose[2]``.
* ``box`` -- oriented box centred at ``pose[:3]`` with yaw ``pose[3]`` and
  full extents ``size``. Boxes act as surfaces, so a box enclosing the
  sensor is hit on its inner walls.
* ``pole`` -- vertical cylinder with base centre ``pose[:3]``, ``size =
  (radius, height)``; caps are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpec
from .scan_io import LabelSet, PointCloud

CLASS_NAMES = {0: "unlabeled", 1: "road", 2: "building", 3: "car", 4: "pole"}
ROAD, BUILDING, CAR, POLE = 1, 2, 3, 4
CLASS_INTENSITY = {ROAD: 0.25, BUILDING: 0.45, CAR: 0.8, POLE: 0.6}

SENSOR_HEIGHT = 1.73
_EPS = 1e-6


@dataclass(frozen=True)
class SceneObject:
    shape: str
    class_id: int
    pose: tuple = (0.0, 0.0, 0.0, 0.0)
    size: tuple = ()
    instance_id: int = 0

    def __post_init__(self):
        if self.shape not in ("ground-plane", "box", "pole"):
            raise DegenerateSpec(f"unknown shape {self.shape!r}")


@dataclass(frozen=True)
class SceneSpec:
    n_beams: int = 64
    points_per_beam: int = 1863
    fov_up: float = 2.0
    fov_down: float = -24.8
    objects: tuple | None = None
    seed: int = 0
    zenith_jitter: float = 0.0
    n_cars: int = 10
    n_poles: int = 8

    def validate(self) -> None:
        if self.n_beams < 1 or self.points_per_beam < 1:
            raise DegenerateSpec("need at least one beam and one point per beam")
        if not self.fov_up > self.fov_down:
            raise DegenerateSpec(f"fov_up ({self.fov_up}) must exceed fov_down ({self.fov_down})")
        if self.zenith_jitter < 0:
            raise DegenerateSpec("zenith_jitter must be non-negative")


@dataclass(frozen=True)
class Scene:
    cloud: PointCloud
    labels: LabelSet
    beam_ids: np.ndarray
    objects: tuple = field(default=())

    def __iter__(self):
        return iter((self.cloud, self.labels, self.beam_ids))


def default_objects(rng: np.random.Generator, n_cars: int = 10, n_poles: int = 8) -> tuple:
    """Street-like layout: ground, an enclosing building shell, cars and poles."""
    objs = [
        SceneObject("ground-plane", ROAD, (0.0, 0.0, -SENSOR_HEIGHT, 0.0)),
        SceneObject("box", BUILDING, (0.0, 0.0, 8.0, 0.0), (90.0, 70.0, 30.0)),
    ]
    inst = 1
    placed = []
    while len(placed) < n_cars:
        r = rng.uniform(6.0, 30.0)
        a = rng.uniform(-np.pi, np.pi)
        x, y = r * np.cos(a), r * np.sin(a)
        if any(np.hypot(x - px, y - py) < 6.0 for px, py in placed):
            continue
        placed.append((x, y))
        yaw = rng.uniform(-np.pi, np.pi)
        objs.append(SceneObject("box", CAR, (x, y, -SENSOR_HEIGHT + 0.75, yaw), (4.5, 1.8, 1.5), inst))
        inst += 1
    for _ in range(n_poles):
        r = rng.uniform(5.0, 30.0)
        a = rng.uniform(-np.pi, np.pi)
        objs.append(SceneObject("pole", POLE, (r * np.cos(a), r * np.sin(a), -SENSOR_HEIGHT, 0.0),
                                (0.15, 6.0), inst))
        inst += 1
    return tuple(objs)


def _ray_plane(d: np.ndarray, z0: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = z0 / d[:, 2]
    t[~np.isfinite(t) | (t <= _EPS)] = np.inf
    return t


def _ray_box(d: np.ndarray, obj: SceneObject) -> np.ndarray:
    cx, cy, cz, yaw = obj.pose
    half = np.asarray(obj.size, dtype=np.float64) / 2.0
    c, s = np.cos(yaw), np.sin(yaw)
    # ray origin and direction in the box frame
    o = np.array([c * -cx + s * -cy, -s * -cx + c * -cy, -cz])
    dl = np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1], d[:, 2]])
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / dl
        t2 = (half - o) / dl
    tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    tmax = np.where(np.isnan(t1), np.inf, np.maximum(t1, t2))
    # axis-parallel rays outside the slab never hit
    par = dl == 0
    outside = par & (np.abs(o) > half)
    tmin = np.where(par, -np.inf, tmin)
    tmax = np.where(par, np.inf, tmax)
    t_near = tmin.max(axis=1)
    t_far = tmax.min(axis=1)
    hit = (t_near <= t_far) & ~outside.any(axis=1)
    t = np.where(t_near > _EPS, t_near, t_far)
    t[~hit | (t <= _EPS)] = np.inf
    return t


def _ray_pole(d: np.ndarray, obj: SceneObject) -> np.ndarray:
    px, py, pz, _ = obj.pose
    radius, height = obj.size
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = -2.0 * (d[:, 0] * px + d[:, 1] * py)
    cc = px * px + py * py - radius * radius
    disc = b * b - 4 * a * cc
    t = np.full(len(d), np.inf)
    ok = (disc >= 0) & (a > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (-b - sq) / (2 * a)
        t1 = (-b + sq) / (2 * a)
    for cand in (t1, t0):  # t0 last so the nearer root wins
        z = cand * d[:, 2]
        good = ok & (cand > _EPS) & (z >= pz) & (z <= pz + height)
        t = np.where(good, cand, t)
    return t


def _cast(d: np.ndarray, obj: SceneObject) -> np.ndarray:
    if obj.shape == "ground-plane":
        return _ray_plane(d, obj.pose[2])
    if obj.shape == "box":
        return _ray_box(d, obj)
    return _ray_pole(d, obj)


def beam_zeniths(spec: SceneSpec) -> np.ndarray:
    """Zenith angle of each beam in degrees, beam 0 highest."""
    if spec.n_beams == 1:
        return np.array([spec.fov_down], dtype=np.float64)
    return np.linspace(spec.fov_up, spec.fov_down, spec.n_beams)


def generate(spec: SceneSpec | None = None) -> Scene:
    """Cast the spec's rays against its objects.

    Returns a :class:`Scene` unpackable as ``(cloud, labels, beam_ids)``.
    """
    spec = spec or SceneSpec()
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    objects = spec.objects if spec.objects is not None else default_objects(
        rng, spec.n_cars, spec.n_poles)

    zen = np.repeat(np.deg2rad(beam_zeniths(spec)), spec.points_per_beam)
    if spec.zenith_jitter > 0:
        zen = zen + np.deg2rad(rng.normal(0.0, spec.zenith_jitter, zen.shape))
    az = np.tile(np.linspace(-np.pi, np.pi, spec.points_per_beam, endpoint=False), spec.n_beams)
    beam = np.repeat(np.arange(spec.n_beams), spec.points_per_beam)
    d = np.column_stack([np.cos(zen) * np.cos(az), np.cos(zen) * np.sin(az), np.sin(zen)])

    best_t = np.full(len(d), np.inf)
    best_o = np.full(len(d), -1)
    for k, obj in enumerate(objects):
        t = _cast(d, obj)
        closer = t < best_t
        best_t[closer] = t[closer]
        best_o[closer] = k

    hit = np.isfinite(best_t)
    xyz = d[hit] * best_t[hit, None]
    owner = best_o[hit]
    sem = np.array([o.class_id for o in objects], dtype=np.uint32)[owner] if len(objects) else np.zeros(0, np.uint32)
    inst = np.array([o.instance_id for o in objects], dtype=np.uint32)[owner] if len(objects) else np.zeros(0, np.uint32)
    intensity = np.array([CLASS_INTENSITY.get(o.class_id, 0.5) for o in objects])[owner] if len(objects) else np.zeros(0)

    cloud = PointCloud.from_xyzi(xyz, intensity)
    return Scene(cloud, LabelSet.from_parts(sem, inst), beam[hit], tuple(objects))
