"""Fog and snowfall corruptions.

Fog
    Every return is attenuated to ``i * exp(-2 * alpha * r)``. Along the
    same ray the fog itself backscatters a soft return whose strength scales
    with ``beta``; when it beats the attenuated hard return, the point moves
    to the soft-return position on the sensor-to-point segment.

    The soft return follows a received-power kernel
    ``k(r) = (r / r_peak) * exp(1 - r / r_peak) * exp(-2 * alpha * r)``,
    placed at its maximiser ``r* = r_peak / (1 + 2 * alpha * r_peak)``
    (clamped to ``segment_fraction * r`` for short rays) with log-normal
    multiplicative jitter.

Snowfall
    Each beam sweeps a conical sheet populated with opaque spherical flakes.
    Flake radius grows with the snowfall rate while the per-metre chance of
    a ray meeting a flake grows only weakly, so the number of snow returns
    stays similar across rates while flakes get bigger. A ray that meets a
    flake before its original return is replaced by the flake hit.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_cloud, check_fraction, spawn
from .device import assign_beam_labels
from .errors import LidarcError, MissingBeamIds
from .labels import ProvenanceSet, Tag
from .scan_io import PointCloud

FOG_ALPHAS = (0.0, 0.005, 0.01, 0.02, 0.03, 0.06)
FOG_LEVELS = {"light": 0.005, "moderate": 0.06, "heavy": 0.2}
SNOW_LEVELS = {"light": 0.5, "moderate": 1.5, "heavy": 2.5}


def attenuated_response(intensity, distance, alpha):
    """Hard-return intensity after two-way extinction through fog."""
    return np.asarray(intensity, dtype=np.float64) * np.exp(-2.0 * alpha * np.asarray(distance, dtype=np.float64))


def fog_kernel(r, alpha: float, r_peak: float = 4.0):
    r = np.asarray(r, dtype=np.float64)
    return (r / r_peak) * np.exp(1.0 - r / r_peak) * np.exp(-2.0 * alpha * r)


def resolve_alpha(alpha, random_state=None) -> float:
    """Pinned ``alpha`` or one drawn uniformly from :data:`FOG_ALPHAS`.

    Uses the same child stream as :func:`apply_fog`, so an integer seed gives
    the value that ``apply_fog`` would draw.
    """
    if alpha is not None:
        return check_fraction(alpha, "alpha", upper=None)
    rng = spawn(random_state, 2)[0]
    return float(FOG_ALPHAS[rng.integers(len(FOG_ALPHAS))])


def soft_response(directions, distance, intensity, beta: float, alpha: float = 0.0, *,
                  rng=None, r_peak: float = 4.0, jitter: float = 0.3,
                  gain: float = 1.0, segment_fraction: float = 0.95):
    """Strongest fog backscatter along each ray.

    Returns ``(i_soft, positions)``; positions lie strictly between the
    sensor and the original return.
    """
    directions = np.asarray(directions, dtype=np.float64)
    distance = np.asarray(distance, dtype=np.float64)
    r_star = r_peak / (1.0 + 2.0 * alpha * r_peak)
    r_soft = np.minimum(r_star, segment_fraction * distance)
    if rng is not None and jitter > 0:
        noise = np.exp(jitter * rng.standard_normal(len(distance)))
    else:
        noise = 1.0
    i_soft = np.asarray(intensity, dtype=np.float64) * beta * gain * fog_kernel(r_soft, alpha, r_peak) * noise
    return i_soft, directions * r_soft[:, None]


def apply_fog(cloud: PointCloud, beta: float, alpha: float | None = None, random_state=None, *,
              r_peak: float = 4.0, jitter: float = 0.3, gain: float = 1.0,
              segment_fraction: float = 0.95):
    """Fog corruption; ``alpha=None`` draws it per scan from :data:`FOG_ALPHAS`.

    Replaced points are tagged ``SCATTERER``; the rest keep their position
    with attenuated intensity and stay ``ORIGINAL``.
    """
    cloud = check_cloud(cloud)
    beta = check_fraction(beta, "beta", upper=None)
    if not 0 < segment_fraction < 1:
        raise LidarcError("segment_fraction must lie in (0, 1)")
    alpha = resolve_alpha(alpha, random_state)
    jitter_rng = spawn(random_state, 2)[1]

    xyz = cloud.xyz.astype(np.float64)
    intensity = cloud.intensity.astype(np.float64)
    dist = np.linalg.norm(xyz, axis=1)
    valid = dist > 0
    dirs = np.zeros_like(xyz)
    dirs[valid] = xyz[valid] / dist[valid, None]

    i_hard = attenuated_response(intensity, dist, alpha)
    i_soft, soft_xyz = soft_response(dirs, dist, intensity, beta, alpha, rng=jitter_rng,
                                     r_peak=r_peak, jitter=jitter, gain=gain,
                                     segment_fraction=segment_fraction)
    soft = valid & (i_soft > i_hard)

    out = cloud.data.copy()
    out[:, 3] = np.clip(np.where(soft, i_soft, i_hard), 0.0, 1.0)
    out[soft, :3] = soft_xyz[soft]
    tags = np.where(soft, Tag.SCATTERER, Tag.ORIGINAL).astype(np.uint8)
    return PointCloud(out), ProvenanceSet(tags, np.arange(len(cloud)))


def snow_particle_radius(rate: float, base: float = 0.01) -> float:
    """Flake radius in metres for a snowfall rate in mm/h."""
    return base * (1.0 + rate)


def snow_hit_density(rate: float, coef: float = 0.01, exponent: float = 0.1) -> float:
    """Expected flake encounters per metre of ray."""
    return coef * rate ** exponent


def _beam_width(r, waist: float = 0.0075, divergence: float = 0.0015):
    return waist + divergence * r


def apply_snowfall(cloud: PointCloud, beam_ids, rate: float, random_state=None, *,
                   density_coef: float = 0.01, density_exponent: float = 0.1,
                   radius_base: float = 0.01, extinction_coef: float = 0.002,
                   albedo: float = 0.5, min_range: float = 1.0, wet_ground: bool = False):
    """Snowfall corruption driven by per-beam flake sampling.

    ``beam_ids`` gives the beam of every point (any integer labelling).
    Replaced rays are tagged ``SCATTERER`` and carry the flake's return
    intensity (albedo times the fraction of the beam footprint the flake
    covers); kept rays are attenuated by snow extinction.
    """
    cloud = check_cloud(cloud)
    if beam_ids is None:
        raise MissingBeamIds("snowfall needs a beam id per point")
    beam_ids = np.asarray(beam_ids)
    if beam_ids.shape != (len(cloud),):
        raise MissingBeamIds(f"got {beam_ids.shape[0] if beam_ids.ndim else 0} beam ids for {len(cloud)} points")
    rate = check_fraction(rate, "rate", upper=None)
    rng = spawn(random_state, 1)[0]

    xyz = cloud.xyz.astype(np.float64)
    dist = np.linalg.norm(xyz, axis=1)
    az = np.arctan2(xyz[:, 1], xyz[:, 0])
    rho = snow_particle_radius(rate, radius_base)
    lam = snow_hit_density(rate, density_coef, density_exponent) if rate > 0 else 0.0
    # flakes per m^2 of the beam sheet giving `lam` encounters per metre of ray
    sheet_density = lam / (2.0 * rho) if rho > 0 else 0.0

    hit = np.full(len(cloud), np.inf)
    if sheet_density > 0:
        for b in np.unique(beam_ids):
            rays = np.flatnonzero((beam_ids == b) & (dist > 0))
            if len(rays) == 0:
                continue
            r_max = float(dist[rays].max())
            if r_max <= min_range:
                continue
            area = np.pi * (r_max ** 2 - min_range ** 2)
            n_flakes = rng.poisson(sheet_density * area)
            if n_flakes == 0:
                continue
            fr = np.sqrt(rng.uniform(min_range ** 2, r_max ** 2, n_flakes))
            fa = rng.uniform(-np.pi, np.pi, n_flakes)
            _hit_beam(rays, az[rays], dist[rays], fr, fa, rho, hit)

    replaced = hit < dist
    out = cloud.data.copy()
    kept_i = cloud.intensity.astype(np.float64) * np.exp(-2.0 * extinction_coef * rate * dist)
    if wet_ground and len(cloud):
        ground = xyz[:, 2] <= np.percentile(xyz[:, 2], 5) + 0.3
        kept_i = np.where(ground, kept_i * 0.7, kept_i)
    coverage = np.minimum(1.0, (rho / _beam_width(hit[replaced])) ** 2)
    snow_i = albedo * coverage * np.exp(-2.0 * extinction_coef * rate * hit[replaced])
    out[:, 3] = np.clip(kept_i, 0.0, 1.0)
    if replaced.any():
        scale = hit[replaced] / dist[replaced]
        out[replaced, :3] = xyz[replaced] * scale[:, None]
        out[replaced, 3] = np.clip(snow_i, 0.0, 1.0)
    tags = np.where(replaced, Tag.SCATTERER, Tag.ORIGINAL).astype(np.uint8)
    return PointCloud(out), ProvenanceSet(tags, np.arange(len(cloud)))


def _hit_beam(rays, ray_az, ray_dist, flake_r, flake_a, rho, hit):
    """Record the nearest flake-surface distance for every ray of one beam."""
    order = np.argsort(ray_az, kind="stable")
    sorted_az = ray_az[order]
    half = np.arcsin(np.minimum(1.0, rho / flake_r))
    pairs_ray, pairs_flake = [], []
    for shift in (-2 * np.pi, 0.0, 2 * np.pi):
        lo = np.searchsorted(sorted_az, flake_a + shift - half, side="left")
        hi = np.searchsorted(sorted_az, flake_a + shift + half, side="right")
        counts = hi - lo
        if not counts.any():
            continue
        flakes = np.repeat(np.arange(len(flake_r)), counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        pairs_ray.append(order[np.repeat(lo, counts) + offs])
        pairs_flake.append(flakes)
    if not pairs_ray:
        return
    ri = np.concatenate(pairs_ray)
    fi = np.concatenate(pairs_flake)
    delta = np.abs(np.angle(np.exp(1j * (ray_az[ri] - flake_a[fi]))))
    r = flake_r[fi]
    perp = r * np.sin(delta)
    ok = perp <= rho
    ri, r, perp, delta = ri[ok], r[ok], perp[ok], delta[ok]
    d = r * np.cos(delta) - np.sqrt(rho * rho - perp * perp)
    ok = (d > 0) & (d < ray_dist[ri])
    np.minimum.at(hit, rays[ri[ok]], d[ok])


class FogSimulator(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`apply_fog`.

    After :meth:`corrupt`, ``alpha_`` holds the attenuation actually used.
    """

    def __init__(self, beta: float = 0.06, alpha: float | None = None, random_state=None,
                 r_peak: float = 4.0, jitter: float = 0.3, gain: float = 1.0):
        self.beta = beta
        self.alpha = alpha
        self.random_state = random_state
        self.r_peak = r_peak
        self.jitter = jitter
        self.gain = gain

    def fit(self, X=None, y=None):
        return self

    def corrupt(self, X):
        self.alpha_ = resolve_alpha(self.alpha, self.random_state)
        return apply_fog(X, self.beta, self.alpha_, self.random_state, r_peak=self.r_peak,
                         jitter=self.jitter, gain=self.gain)

    def transform(self, X):
        return self.corrupt(X)[0].data


class SnowSimulator(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`apply_snowfall`.

    Without explicit ``beam_ids`` the beams are recovered with
    :class:`lidarc.device.BeamKMeans` using ``n_beams`` clusters.
    """

    def __init__(self, rate: float = 1.5, random_state=None, n_beams: int = 64,
                 wet_ground: bool = False):
        self.rate = rate
        self.random_state = random_state
        self.n_beams = n_beams
        self.wet_ground = wet_ground

    def fit(self, X=None, y=None):
        return self

    def corrupt(self, X, beam_ids=None):
        cloud = check_cloud(X)
        if beam_ids is None:
            beam_ids = assign_beam_labels(cloud, self.n_beams).beam_of
        self.particle_radius_ = snow_particle_radius(self.rate)
        return apply_snowfall(cloud, beam_ids, self.rate, self.random_state, wet_ground=self.wet_ground)

    def transform(self, X):
        return self.corrupt(X)[0].data
