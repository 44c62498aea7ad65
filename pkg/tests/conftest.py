import numpy as np
import pytest

from lidarc.scan_io import ManifestEntry, ScanManifest, save_manifest, write_labels, write_scan
from lidarc.synth import CLASS_NAMES, SceneSpec, generate

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one of the ten acceptance criteria")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        previous = _ACCEPTANCE.get(number, (title, "passed"))[1]
        _ACCEPTANCE[number] = (title, rep.outcome if previous == "passed" else previous)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome = _ACCEPTANCE[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {verdict}: {title}")


@pytest.fixture(scope="session")
def scene():
    return generate(SceneSpec(seed=7))


@pytest.fixture(scope="session")
def small_scene():
    return generate(SceneSpec(n_beams=16, points_per_beam=256, seed=3, n_cars=4, n_poles=3))


def make_manifest(root, n_scans=3, seed=0, **spec_kw):
    """Write ``n_scans`` synthetic scans under ``root`` and return the manifest path."""
    (root / "velodyne").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_scans):
        cloud, labels, _ = generate(SceneSpec(seed=seed + i, **spec_kw))
        sp, lp = root / "velodyne" / f"{i:06d}.bin", root / "labels" / f"{i:06d}.label"
        write_scan(cloud, sp)
        write_labels(labels, lp)
        entries.append(ManifestEntry(f"{i:06d}", sp, lp))
    path = root / "manifest.json"
    save_manifest(ScanManifest(tuple(entries), "synthetic", dict(CLASS_NAMES)), path)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
