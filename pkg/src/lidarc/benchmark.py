"""The 16-setting corruption table and the batch runner behind the CLI.

Output layout::

    <out>/run_manifest.json
    <out>/<kind>/<level>/<scan_id>.bin     corrupted scan
    <out>/<kind>/<level>/<scan_id>.label   remapped labels (if the input had labels)
    <out>/<kind>/<level>/<scan_id>.prov    one provenance tag byte per point

Every scan gets its own seed, ``blake2b(global_seed, kind, level,
scan_id)``, so outputs do not depend on worker count or scheduling.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import derive_seed
from .device import assign_beam_labels, simulate_device
from .errors import LidarcError
from .labels import Tag, remap_labels, write_provenance
from .noise import DISTORTION_FRACTION, apply_global_outliers, apply_local_distortion
from .scan_io import (
    MANIFEST_SCHEMA_VERSION,
    ManifestEntry,
    ScanManifest,
    read_labels,
    read_scan,
    write_labels,
    write_scan,
)
from .weather import apply_fog, apply_snowfall, resolve_alpha

logger = logging.getLogger(__name__)

RUN_SCHEMA_VERSION = 1
WORKERS_ENV = "LIDARC_WORKERS"
SEED_RULE = "blake2b-64(global_seed | kind | level | scan_id), little-endian"

KINDS = ("fog", "snow", "global-outliers", "local-distortion", "cross-device-32", "cross-device-16")

LEVEL_PARAMS = {
    "fog": {"light": {"beta": 0.005}, "moderate": {"beta": 0.06}, "heavy": {"beta": 0.2}},
    "snow": {"light": {"rate": 0.5}, "moderate": {"rate": 1.5}, "heavy": {"rate": 2.5}},
    "global-outliers": {"light": {"ratio": 0.001}, "moderate": {"ratio": 0.05}, "heavy": {"ratio": 0.5}},
    "local-distortion": {
        "light": {"sigma": 0.05, "fraction": DISTORTION_FRACTION},
        "moderate": {"sigma": 0.1, "fraction": DISTORTION_FRACTION},
        "heavy": {"sigma": 0.2, "fraction": DISTORTION_FRACTION},
    },
    "cross-device-32": {"dense": {"beams": 32, "sparse": False}, "sparse": {"beams": 32, "sparse": True}},
    "cross-device-16": {"dense": {"beams": 16, "sparse": False}, "sparse": {"beams": 16, "sparse": True}},
}

ALLOWED_PARAMS = {
    "fog": {"beta", "alpha", "r_peak", "jitter", "gain"},
    "snow": {"rate", "wet_ground", "n_beams"},
    "global-outliers": {"ratio"},
    "local-distortion": {"sigma", "fraction"},
    "cross-device-32": {"beams", "sparse", "keep_ratio", "n_beams"},
    "cross-device-16": {"beams", "sparse", "keep_ratio", "n_beams"},
}


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    level: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LidarcError(f"unknown corruption kind {self.kind!r}; expected one of {KINDS}")
        extra = set(self.params) - ALLOWED_PARAMS[self.kind]
        if extra:
            raise LidarcError(f"{self.kind} does not take parameters {sorted(extra)}")

    @classmethod
    def from_level(cls, kind: str, level: str, seed: int = 0, **extra) -> "CorruptionSpec":
        if kind not in LEVEL_PARAMS:
            raise LidarcError(f"unknown corruption kind {kind!r}")
        if level not in LEVEL_PARAMS[kind]:
            raise LidarcError(f"{kind} has no level {level!r}; choose from {sorted(LEVEL_PARAMS[kind])}")
        return cls(kind, level, {**LEVEL_PARAMS[kind][level], **extra}, seed)

    @classmethod
    def custom(cls, kind: str, params: dict, seed: int = 0) -> "CorruptionSpec":
        label = "custom-" + "-".join(f"{k}={params[k]}" for k in sorted(params))
        return cls(kind, label.replace("/", "_"), dict(params), seed)

    def scan_seed(self, scan_id: str) -> int:
        return derive_seed(self.seed, self.kind, self.level, scan_id)

    def to_json(self) -> dict:
        return {"kind": self.kind, "level": self.level, "params": _jsonable(self.params), "seed": self.seed}


def benchmark_specs(seed: int = 0) -> list[CorruptionSpec]:
    """All 16 settings in table order."""
    return [CorruptionSpec.from_level(k, lvl, seed) for k in KINDS for lvl in LEVEL_PARAMS[k]]


def _jsonable(params: dict) -> dict:
    return {k: (str(v) if not isinstance(v, (int, float, bool, str, type(None))) else v)
            for k, v in sorted(params.items())}


def corrupt_cloud(spec: CorruptionSpec, cloud, labels=None, scan_id: str = "scan"):
    """Apply one spec to one scan. Returns ``(cloud, labels, prov, extras)``."""
    seed = spec.scan_seed(scan_id)
    p = spec.params
    extras = {}
    if spec.kind == "fog":
        alpha = resolve_alpha(p.get("alpha"), seed)
        extras["alpha"] = alpha
        out, prov = apply_fog(cloud, p["beta"], alpha, seed, r_peak=p.get("r_peak", 4.0),
                              jitter=p.get("jitter", 0.3), gain=p.get("gain", 1.0))
    elif spec.kind == "snow":
        beams = assign_beam_labels(cloud, p.get("n_beams", 64)).beam_of
        out, prov = apply_snowfall(cloud, beams, p["rate"], seed, wet_ground=p.get("wet_ground", False))
    elif spec.kind == "global-outliers":
        out, prov = apply_global_outliers(cloud, p["ratio"], seed)
    elif spec.kind == "local-distortion":
        out, prov = apply_local_distortion(cloud, p["sigma"], p.get("fraction", DISTORTION_FRACTION), seed)
    else:
        assignment = assign_beam_labels(cloud, p.get("n_beams", 64))
        out, _, prov = simulate_device(cloud, None, assignment, p["beams"], p.get("sparse", False),
                                       p.get("keep_ratio"))
    new_labels = remap_labels(labels, prov) if labels is not None else None
    return out, new_labels, prov, extras


def run_scan(spec: CorruptionSpec, entry: ManifestEntry, out_dir: str | os.PathLike) -> dict:
    cloud = read_scan(entry.scan_path)
    labels = read_labels(entry.label_path) if entry.label_path is not None else None
    if labels is not None and len(labels) != len(cloud):
        raise LidarcError(f"{entry.scan_id}: {len(labels)} labels for {len(cloud)} points")
    out, new_labels, prov, extras = corrupt_cloud(spec, cloud, labels, entry.scan_id)
    dest = Path(out_dir) / spec.kind / spec.level
    dest.mkdir(parents=True, exist_ok=True)
    write_scan(out, dest / f"{entry.scan_id}.bin")
    if new_labels is not None:
        write_labels(new_labels, dest / f"{entry.scan_id}.label")
    write_provenance(prov, dest / f"{entry.scan_id}.prov")
    return {
        "kind": spec.kind,
        "level": spec.level,
        "scan_id": entry.scan_id,
        "seed": spec.scan_seed(entry.scan_id),
        "n_in": len(cloud),
        "n_out": len(out),
        "n_ignore_tags": prov.count(Tag.SCATTERER, Tag.INJECTED),
        **extras,
    }


def _task(args):
    spec, entry, out_dir = args
    try:
        return run_scan(spec, entry, out_dir), None
    except Exception as exc:  # reported with scan context by the caller
        return None, f"{spec.kind}/{spec.level}/{entry.scan_id}: {type(exc).__name__}: {exc}"


def default_workers() -> int:
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunResult:
    manifest: dict
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def run_corruptions(specs: list[CorruptionSpec], manifest: ScanManifest, out_dir: str | os.PathLike,
                    manifest_arg: str = "", workers: int | None = None, strict: bool = False) -> RunResult:
    """Corrupt every scan of ``manifest`` under every spec.

    The run manifest is written before any scan is processed and rewritten
    at the end with per-scan records, in manifest order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = default_workers() if workers is None else max(1, workers)
    run = {
        "toolkit_version": __version__,
        "run_schema_version": RUN_SCHEMA_VERSION,
        "manifest_schema_version": MANIFEST_SCHEMA_VERSION,
        "input_manifest": manifest_arg,
        "input_manifest_sha256": _sha256(Path(manifest_arg)) if manifest_arg and Path(manifest_arg).exists() else None,
        "output_dir": ".",
        "layout": "<kind>/<level>/<scan_id>.{bin,label,prov}",
        "seed_rule": SEED_RULE,
        "specs": [s.to_json() for s in specs],
        "status": "running",
    }
    run_path = out_dir / "run_manifest.json"
    run_path.write_text(json.dumps(run, indent=2) + "\n")

    tasks = [(s, e, str(out_dir)) for s in specs for e in manifest.entries]
    records, failures = [], []
    if workers == 1:
        for t in tasks:
            rec, err = _task(t)
            if err:
                failures.append(err)
                logger.error(err)
                if strict:
                    break
            else:
                records.append(rec)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec, err in pool.map(_task, tasks, chunksize=1):
                if err:
                    failures.append(err)
                    logger.error(err)
                else:
                    records.append(rec)
            if strict and failures:
                pool.shutdown(cancel_futures=True)

    run["scans"] = records
    run["failures"] = failures
    run["status"] = "complete" if not failures else "failed"
    run_path.write_text(json.dumps(run, indent=2) + "\n")
    return RunResult(run, failures)


def evaluate_tree(gt_dir, pred_dir, manifest: ScanManifest, num_classes: int | None = None,
                  strict: bool = False):
    """Score predictions against a corrupted tree and the clean manifest labels.

    Predictions live at ``<pred>/clean/<scan_id>.label`` and
    ``<pred>/<kind>/<level>/<scan_id>.label``.
    """
    from .metrics import ConfusionMatrix, RobustnessReport, corruption_score, robustness_summary

    gt_dir, pred_dir = Path(gt_dir), Path(pred_dir)
    if num_classes is None:
        num_classes = _infer_classes(gt_dir, manifest)

    def score(pairs, setting):
        cm = ConfusionMatrix(num_classes)
        n = 0
        for gt_path, pred_path in pairs:
            if not pred_path.exists():
                msg = f"missing prediction {pred_path}"
                if strict:
                    raise LidarcError(msg)
                logger.warning(msg)
                continue
            cm = cm.accumulate(read_labels(gt_path), read_labels(pred_path))
            n += 1
        if n == 0:
            return None, None
        iou = cm.iou()
        return cm.miou(), {k: float(v * 100) for k, v in enumerate(iou) if not np.isnan(v)}

    per_class = {}
    clean_pairs = [(e.label_path, pred_dir / "clean" / f"{e.scan_id}.label")
                   for e in manifest.entries if e.label_path is not None]
    clean, ious = score(clean_pairs, "clean")
    if ious is not None:
        per_class["clean"] = ious

    per_intensity = {}
    for kind in KINDS:
        kdir = gt_dir / kind
        if not kdir.is_dir():
            continue
        for level_dir in sorted(p for p in kdir.iterdir() if p.is_dir()):
            pairs = [(level_dir / f"{e.scan_id}.label", pred_dir / kind / level_dir.name / f"{e.scan_id}.label")
                     for e in manifest.entries if (level_dir / f"{e.scan_id}.label").exists()]
            m, ious = score(pairs, f"{kind}/{level_dir.name}")
            if m is not None:
                per_intensity.setdefault(kind, {})[level_dir.name] = m
                per_class[f"{kind}/{level_dir.name}"] = ious

    scores = {k: corruption_score(v.values()) for k, v in per_intensity.items()}
    if clean is not None and clean > 0 and len(scores) == len(KINDS):
        report = robustness_summary(clean, {k: scores[k] for k in KINDS}, per_intensity)
    else:
        from .metrics import CorruptionResult

        report = RobustnessReport(
            clean if clean is not None else float("nan"),
            [CorruptionResult(k, per_intensity[k], s, (s / clean * 100.0) if clean else float("nan"))
             for k, s in scores.items()],
        )
    report.per_class_iou = per_class
    return report


def _infer_classes(gt_dir: Path, manifest: ScanManifest) -> int:
    if manifest.class_names:
        return max(manifest.class_names) + 1
    top = 0
    for e in manifest.entries:
        if e.label_path is not None:
            top = max(top, int(read_labels(e.label_path).semantic.max(initial=0)))
    for p in gt_dir.rglob("*.label"):
        top = max(top, int(read_labels(p).semantic.max(initial=0)))
    return max(top + 1, 2)
