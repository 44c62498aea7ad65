"""Command-line front end: ``lidarc corrupt|evaluate|gen|inspect|augment``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import derive_seed
from .augment import instance_cutmix, mix3d
from .benchmark import (
    KINDS,
    RUN_SCHEMA_VERSION,
    WORKERS_ENV,
    CorruptionSpec,
    benchmark_specs,
    evaluate_tree,
    run_corruptions,
)
from .errors import LidarcError
from .representation import polar_project, range_project, render_range_image, voxelize, write_pgm
from .scan_io import (
    MANIFEST_SCHEMA_VERSION,
    ManifestEntry,
    ScanManifest,
    load_manifest,
    read_labels,
    read_scan,
    save_manifest,
    write_labels,
    write_scan,
)
from .synth import CLASS_NAMES, SceneSpec, generate

logger = logging.getLogger("lidarc")

# flags that replace a level's parameters; --alpha and --wet-ground only refine one
LEVEL_OVERRIDES = {
    "fog": ("beta",),
    "snow": ("rate",),
    "global-outliers": ("ratio",),
    "local-distortion": ("sigma", "fraction"),
    "cross-device": ("keep_ratio",),
}


def _version_text() -> str:
    return f"lidarc {__version__} (manifest schema {MANIFEST_SCHEMA_VERSION}, run schema {RUN_SCHEMA_VERSION})"


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return w, h


def _parse_ratio(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a ratio: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lidarc", description=__doc__)
    parser.add_argument("--version", action="version", version=_version_text())
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrupt", help="write corrupted copies of every scan in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=[*KINDS[:4], "cross-device"])
    p.add_argument("--level")
    p.add_argument("--all", action="store_true", help="all 16 benchmark settings")
    p.add_argument("--beta", type=float)
    p.add_argument("--alpha", type=float, help="pin the fog attenuation instead of sampling it")
    p.add_argument("--rate", type=float, help="snowfall rate in mm/h")
    p.add_argument("--wet-ground", action="store_true")
    p.add_argument("--ratio", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--fraction", type=float)
    p.add_argument("--beams", type=int, choices=(32, 16))
    p.add_argument("--sparse", action="store_true")
    p.add_argument("--keep-ratio", type=_parse_ratio, help="azimuth keep ratio such as 1/2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    p.add_argument("--strict", action="store_true", help="stop at the first failing scan")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("evaluate", help="score predictions on a corrupted tree")
    p.add_argument("--manifest", required=True, help="clean manifest")
    p.add_argument("--gt-dir", required=True, help="output of `corrupt`")
    p.add_argument("--pred-dir", required=True, help="clean/ plus <kind>/<level>/ prediction labels")
    p.add_argument("--num-classes", type=int)
    p.add_argument("--report", help="write the JSON report here as well as stdout")
    p.add_argument("--strict", action="store_true", help="fail on missing predictions")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen", help="generate synthetic labelled scans")
    p.add_argument("--out", required=True)
    p.add_argument("--n-scans", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beams", type=int, default=64)
    p.add_argument("--points-per-beam", type=int, default=1863)
    p.add_argument("--zenith-jitter", type=float, default=0.0, help="degrees")
    p.add_argument("--n-cars", type=int, default=10)
    p.add_argument("--n-poles", type=int, default=8)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("inspect", help="project one scan to a range image, polar BEV or voxels")
    p.add_argument("scan")
    p.add_argument("--repr", dest="representation", choices=("range", "bev", "voxel"), default="range")
    p.add_argument("--size", type=_parse_size, help="WxH (range default 2048x64, bev 360x480)")
    p.add_argument("--channel", choices=("range", "intensity"), default="range")
    p.add_argument("--out", help="PGM image for range/bev, .npz for voxel")
    p.add_argument("--fov-up", type=float, default=3.0, help="degrees")
    p.add_argument("--fov-down", type=float, default=-25.0, help="degrees")
    p.add_argument("--planar-radius", action="store_true")
    p.add_argument("--mode", choices=("grid", "cylinder"), default="grid")
    p.add_argument("--voxel-size", type=float, nargs="+")
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("augment", help="mix each scan with the next one in the manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("mix3d", "cutmix"), required=True)
    p.add_argument("--classes", help="comma-separated instance classes for cutmix (default: all with instances)")
    p.add_argument("--max-instances", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_augment)
    return parser


def _overrides(args) -> dict:
    names = ("beta", "rate", "ratio", "sigma", "fraction", "keep_ratio")
    return {n: getattr(args, n) for n in names if getattr(args, n) is not None}


def corruption_specs(args) -> list[CorruptionSpec]:
    """Turn parsed ``corrupt`` flags into specs, rejecting contradictory ones."""
    if args.all:
        if args.kind or args.level or _overrides(args):
            raise LidarcError("--all cannot be combined with --kind, --level or parameter overrides")
        return benchmark_specs(args.seed)
    if not args.kind:
        raise LidarcError("give --kind (with --level or parameter flags) or --all")

    kind = args.kind
    extra = {}
    if kind == "fog" and args.alpha is not None:
        extra["alpha"] = args.alpha
    if kind == "snow" and args.wet_ground:
        extra["wet_ground"] = True
    if kind == "cross-device":
        if args.beams is None:
            raise LidarcError("cross-device needs --beams 32|16")
        kind = f"cross-device-{args.beams}"
        level = args.level or ("sparse" if args.sparse else None)
        if args.sparse and args.level == "dense":
            raise LidarcError("--sparse contradicts --level dense")
        if args.keep_ratio is not None:
            if args.level:
                raise LidarcError("--keep-ratio replaces --level; give only one")
            return [CorruptionSpec.custom(kind, {"beams": args.beams, "sparse": True,
                                                 "keep_ratio": args.keep_ratio}, args.seed)]
        return [CorruptionSpec.from_level(kind, level or "dense", args.seed)]
    if args.beams is not None or args.sparse or args.keep_ratio is not None:
        raise LidarcError("--beams, --sparse and --keep-ratio only apply to cross-device")

    allowed = LEVEL_OVERRIDES[kind]
    given = _overrides(args)
    stray = set(given) - set(allowed)
    if stray:
        raise LidarcError(f"{kind} does not take {sorted(stray)}")
    if args.level:
        if given:
            raise LidarcError(f"--level and {sorted(given)} are mutually exclusive")
        return [CorruptionSpec.from_level(kind, args.level, args.seed, **extra)]
    if allowed[0] not in given:
        raise LidarcError(f"{kind} needs --level or --{allowed[0]}")
    return [CorruptionSpec.custom(kind, {**given, **extra}, args.seed)]


def cmd_corrupt(args) -> int:
    specs = corruption_specs(args)
    manifest = load_manifest(args.manifest)
    result = run_corruptions(specs, manifest, args.out, manifest_arg=args.manifest,
                             workers=args.workers, strict=args.strict)
    n = len(result.manifest["scans"])
    print(f"{n} corrupted scans written to {args.out} ({len(specs)} settings x {len(manifest)} scans)")
    for failure in result.failures:
        print(f"FAILED {failure}", file=sys.stderr)
    return 0 if result.ok and n == len(specs) * len(manifest) else 1


def cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest)
    report = evaluate_tree(args.gt_dir, args.pred_dir, manifest, args.num_classes, args.strict)
    text = json.dumps(report.to_json(), indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)
    return 0


def cmd_gen(args) -> int:
    out = Path(args.out)
    (out / "velodyne").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(args.n_scans):
        scan_id = f"{i:06d}"
        spec = SceneSpec(n_beams=args.beams, points_per_beam=args.points_per_beam,
                         zenith_jitter=args.zenith_jitter, n_cars=args.n_cars, n_poles=args.n_poles,
                         seed=derive_seed(args.seed, "gen", scan_id))
        cloud, labels, _ = generate(spec)
        scan_path, label_path = out / "velodyne" / f"{scan_id}.bin", out / "labels" / f"{scan_id}.label"
        write_scan(cloud, scan_path)
        write_labels(labels, label_path)
        entries.append(ManifestEntry(scan_id, scan_path, label_path))
    save_manifest(ScanManifest(tuple(entries), "synthetic", dict(CLASS_NAMES)), out / "manifest.json")
    print(f"{args.n_scans} scans written to {out}")
    return 0


def cmd_inspect(args) -> int:
    cloud = read_scan(args.scan)
    summary = {"scan": str(args.scan), "points": len(cloud), "repr": args.representation}
    if args.representation == "range":
        width, height = args.size or (2048, 64)
        img = range_project(cloud, width, height, np.deg2rad(args.fov_up), np.deg2rad(args.fov_down))
        summary.update(width=width, height=height, valid_pixels=int(img.mask.sum()),
                       points_lost=len(cloud) - int(img.mask.sum()))
        if args.out:
            render_range_image(img, args.channel, args.out)
    elif args.representation == "bev":
        width, height = args.size or (360, 480)
        bev = polar_project(cloud, height, width, planar_radius=args.planar_radius)
        summary.update(width=width, height=height, occupied_cells=int((bev.counts > 0).sum()),
                       points_outside=bev.n_dropped)
        if args.out:
            write_pgm(bev.counts, bev.counts > 0, args.out)
    else:
        size = None
        if args.voxel_size:
            size = args.voxel_size[0] if len(args.voxel_size) == 1 else tuple(args.voxel_size)
        grid = voxelize(cloud, args.mode, size, normalize=not args.no_normalize,
                        planar_radius=args.planar_radius)
        summary.update(mode=grid.mode, voxel_size=list(grid.voxel_size), voxels=len(grid),
                       max_points_per_voxel=int(grid.counts.max()))
        if args.out:
            with open(args.out, "wb") as fh:
                np.savez(fh, coords=grid.coords, counts=grid.counts, features=grid.features,
                         centroids=grid.centroids, voxel_of=grid.voxel_of)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_augment(args) -> int:
    manifest = load_manifest(args.manifest)
    if len(manifest) < 2:
        raise LidarcError("augment pairs scans, so the manifest needs at least two")
    if any(e.label_path is None for e in manifest):
        raise LidarcError("augment needs labels for every scan")
    out = Path(args.out)
    (out / "velodyne").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    entries = list(manifest.entries)
    written = []
    for i, entry in enumerate(entries):
        other = entries[(i + 1) % len(entries)]
        a = (read_scan(entry.scan_path), read_labels(entry.label_path))
        b = (read_scan(other.scan_path), read_labels(other.label_path))
        if args.kind == "mix3d":
            cloud, labels = mix3d(a, b)
        else:
            if args.classes:
                classes = [int(c) for c in args.classes.split(",")]
            else:
                classes = np.unique(b[1].semantic[b[1].instance > 0]).tolist()
            seed = derive_seed(args.seed, args.kind, entry.scan_id, other.scan_id)
            cloud, labels = instance_cutmix(a, b, classes, seed, args.max_instances)
        scan_id = f"{entry.scan_id}+{other.scan_id}"
        scan_path, label_path = out / "velodyne" / f"{scan_id}.bin", out / "labels" / f"{scan_id}.label"
        write_scan(cloud, scan_path)
        write_labels(labels, label_path)
        written.append(ManifestEntry(scan_id, scan_path, label_path))
    save_manifest(ScanManifest(tuple(written), f"{manifest.dataset_name}-{args.kind}", manifest.class_names),
                  out / "manifest.json")
    print(f"{len(written)} augmented scans written to {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LidarcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
