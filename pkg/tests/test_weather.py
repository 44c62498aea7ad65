import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from lidarc.errors import MissingBeamIds
from lidarc.labels import Tag
from lidarc.scan_io import PointCloud
from lidarc.weather import (
    FOG_ALPHAS,
    FogSimulator,
    SnowSimulator,
    _hit_beam,
    apply_fog,
    apply_snowfall,
    attenuated_response,
    fog_kernel,
    resolve_alpha,
    snow_hit_density,
    snow_particle_radius,
    soft_response,
)


def test_attenuated_response_values():
    assert attenuated_response(1.0, 10.0, 0.0) == 1.0
    assert attenuated_response(1.0, 10.0, 0.06) == pytest.approx(np.exp(-1.2))
    assert attenuated_response(1.0, 10.0, 0.06) == pytest.approx(0.30119, abs=1e-5)
    assert attenuated_response(0.0, 37.0, 0.03) == 0.0


def test_kernel_peaks_at_r_peak_without_attenuation():
    r = np.linspace(0.1, 20, 2000)
    k = fog_kernel(r, 0.0, 4.0)
    assert r[k.argmax()] == pytest.approx(4.0, abs=0.01)
    assert k.max() == pytest.approx(1.0, abs=1e-4)


def test_soft_response_zero_beta_and_segment():
    dirs = np.array([[1.0, 0.0, 0.0]])
    i_soft, _ = soft_response(dirs, np.array([50.0]), np.array([0.8]), 0.0, 0.03)
    assert i_soft[0] == 0.0
    _, pos = soft_response(dirs, np.array([50.0]), np.array([0.8]), 0.2, 0.03)
    r = np.linalg.norm(pos[0])
    assert 0 < r < 50


def test_soft_wins_more_often_in_thicker_fog():
    rng = np.random.default_rng(0)
    n = 10_000
    d = rng.uniform(1, 80, n)
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    i = rng.uniform(0.05, 1, n)
    fractions = []
    for beta in (0.005, 0.2):
        i_soft, _ = soft_response(dirs, d, i, beta, 0.03, rng=np.random.default_rng(1))
        fractions.append(np.mean(i_soft > attenuated_response(i, d, 0.03)))
    assert fractions[1] > fractions[0]


def test_fog_identity_parameters(small_scene):
    out, prov = apply_fog(small_scene.cloud, 0.0, 0.0, 0)
    assert out == small_scene.cloud
    assert prov.count(Tag.ORIGINAL) == len(out)


def test_fog_scatterers_cluster_near_sensor(scene):
    out, prov = apply_fog(scene.cloud, 0.2, 0.03, 0)
    sc = prov.mask(Tag.SCATTERER)
    r = out.ranges()
    assert np.median(r[sc]) < np.median(r[~sc])


def test_fog_alpha_sampling_is_seeded():
    drawn = {resolve_alpha(None, seed) for seed in range(200)}
    assert drawn == set(FOG_ALPHAS)
    assert resolve_alpha(None, 5) == resolve_alpha(None, 5)
    assert resolve_alpha(0.02, 5) == 0.02


def test_fog_estimator_records_alpha(small_scene):
    est = FogSimulator(beta=0.2, random_state=4)
    est.corrupt(small_scene.cloud)
    assert est.alpha_ == resolve_alpha(None, 4)
    assert np.array_equal(clone(est).transform(small_scene.cloud), est.transform(small_scene.cloud))


def test_snow_zero_rate_is_identity(small_scene):
    out, prov = apply_snowfall(small_scene.cloud, small_scene.beam_ids, 0.0, 0)
    assert out == small_scene.cloud
    assert prov.count(Tag.ORIGINAL) == len(out)


def test_snow_requires_beam_ids(small_scene):
    with pytest.raises(MissingBeamIds):
        apply_snowfall(small_scene.cloud, None, 1.5, 0)
    with pytest.raises(MissingBeamIds):
        apply_snowfall(small_scene.cloud, small_scene.beam_ids[:-1], 1.5, 0)


def test_snow_spread_exceeds_fog(scene):
    snow, sprov = apply_snowfall(scene.cloud, scene.beam_ids, 1.5, 0)
    fog, fprov = apply_fog(scene.cloud, 0.2, 0.03, 0)
    snow_std = snow.ranges()[sprov.mask(Tag.SCATTERER)].std()
    fog_std = fog.ranges()[fprov.mask(Tag.SCATTERER)].std()
    assert snow_std > fog_std


def test_snow_scatterers_on_ray_and_closer(scene):
    out, prov = apply_snowfall(scene.cloud, scene.beam_ids, 2.5, 3)
    sc = prov.mask(Tag.SCATTERER)
    s, o = out.xyz[sc].astype(np.float64), scene.cloud.xyz[sc].astype(np.float64)
    cross = np.linalg.norm(np.cross(s, o), axis=1) / (np.linalg.norm(s, axis=1) * np.linalg.norm(o, axis=1))
    assert np.all(cross < 1e-6)
    assert np.all(np.linalg.norm(s, axis=1) < np.linalg.norm(o, axis=1))


def test_snow_radius_and_density_laws():
    assert snow_particle_radius(0.5) < snow_particle_radius(1.5) < snow_particle_radius(2.5)
    assert snow_hit_density(2.5) / snow_hit_density(0.5) == pytest.approx(5 ** 0.1)


def test_wet_ground_darkens_low_points(small_scene):
    dry, _ = apply_snowfall(small_scene.cloud, small_scene.beam_ids, 1.0, 2)
    wet, prov = apply_snowfall(small_scene.cloud, small_scene.beam_ids, 1.0, 2, wet_ground=True)
    keep = prov.mask(Tag.ORIGINAL)
    assert np.all(wet.intensity[keep] <= dry.intensity[keep])
    assert np.any(wet.intensity[keep] < dry.intensity[keep])


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.02, 0.5))
def test_flake_hits_match_brute_force(seed, rho):
    rng = np.random.default_rng(seed)
    n_rays, n_flakes = 60, 40
    ray_az = rng.uniform(-np.pi, np.pi, n_rays)
    ray_dist = rng.uniform(2, 30, n_rays)
    fr = rng.uniform(1, 30, n_flakes)
    fa = rng.uniform(-np.pi, np.pi, n_flakes)
    hit = np.full(n_rays, np.inf)
    _hit_beam(np.arange(n_rays), ray_az, ray_dist, fr, fa, rho, hit)

    expected = np.full(n_rays, np.inf)
    for i in range(n_rays):
        u = np.array([np.cos(ray_az[i]), np.sin(ray_az[i])])
        for j in range(n_flakes):
            c = fr[j] * np.array([np.cos(fa[j]), np.sin(fa[j])])
            b = u @ c
            disc = b * b - (c @ c - rho * rho)
            if disc < 0:
                continue
            t = b - np.sqrt(disc)
            if 0 < t < ray_dist[i]:
                expected[i] = min(expected[i], t)
    assert np.array_equal(np.isinf(hit), np.isinf(expected))
    finite = np.isfinite(hit)
    assert np.allclose(hit[finite], expected[finite], rtol=0, atol=1e-9)


def test_snow_estimator_clusters_beams(small_scene):
    est = SnowSimulator(rate=2.5, random_state=1, n_beams=16)
    out, prov = est.corrupt(small_scene.cloud)
    ref, _ = apply_snowfall(small_scene.cloud, small_scene.beam_ids, 2.5, 1)
    assert est.particle_radius_ == snow_particle_radius(2.5)
    assert len(out) == len(small_scene.cloud)
    assert est.get_params()["rate"] == 2.5
