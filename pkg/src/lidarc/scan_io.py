"""KITTI-format scan and label files, plus JSON dataset manifests.

Scan files are ``N x 16`` bytes of little-endian ``float32`` quadruples
``(x, y, z, intensity)``. Label files hold one little-endian ``uint32`` per
point: the low 16 bits are the semantic class, the high 16 bits the instance
id. Semantic class 0 is ``ignore``.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    LengthMismatch,
    LidarcError,
    NonFinitePoint,
    SizeNotMultipleOf4,
    SizeNotMultipleOf16,
)

logger = logging.getLogger(__name__)

SCAN_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("<u4")
IGNORE = 0

MANIFEST_SCHEMA_VERSION = 1


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered set of points in the sensor frame.

    ``data`` is an ``(N, 4)`` float32 array of ``x, y, z, intensity`` and is
    read-only once wrapped.
    """

    data: np.ndarray
    n_clamped: int = field(default=0, compare=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise LidarcError(f"expected an (N, 4) array, got shape {arr.shape}")
        if arr is self.data:
            arr = arr.copy()
        object.__setattr__(self, "data", _frozen(arr))

    @classmethod
    def from_xyzi(cls, xyz, intensity) -> "PointCloud":
        xyz = np.asarray(xyz, dtype=np.float32).reshape(-1, 3)
        intensity = np.asarray(intensity, dtype=np.float32).reshape(-1, 1)
        return cls(np.hstack([xyz, intensity]))

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 4), dtype=np.float32))

    def __len__(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.data.shape == other.data.shape and self.data.tobytes() == other.data.tobytes()

    __hash__ = None

    @property
    def xyz(self) -> np.ndarray:
        return self.data[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.data[:, 3]

    def ranges(self) -> np.ndarray:
        """Euclidean distance of every point from the sensor, in float64."""
        return np.linalg.norm(self.xyz.astype(np.float64), axis=1)

    def take(self, idx) -> "PointCloud":
        return PointCloud(self.data[idx])

    def concat(self, other: "PointCloud") -> "PointCloud":
        return PointCloud(np.vstack([self.data, other.data]))


@dataclass(frozen=True, eq=False)
class LabelSet:
    """Per-point packed ``uint32`` labels (instance << 16 | semantic)."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 1:
            raise LidarcError(f"labels must be 1-D, got shape {arr.shape}")
        if arr.size and arr.dtype != np.uint32:
            if arr.dtype.kind not in "iu" or arr.min() < 0 or arr.max() > 0xFFFFFFFF:
                raise LidarcError("labels must be unsigned 32-bit integers")
        arr = np.array(arr, dtype=np.uint32, copy=True)
        object.__setattr__(self, "labels", _frozen(arr))

    @classmethod
    def from_parts(cls, semantic, instance=None) -> "LabelSet":
        semantic = np.asarray(semantic, dtype=np.uint32)
        if instance is None:
            instance = np.zeros_like(semantic)
        instance = np.asarray(instance, dtype=np.uint32)
        if np.any(semantic > 0xFFFF) or np.any(instance > 0xFFFF):
            raise LidarcError("semantic and instance ids must fit in 16 bits")
        return cls((instance << np.uint32(16)) | semantic)

    @classmethod
    def empty(cls) -> "LabelSet":
        return cls(np.zeros(0, dtype=np.uint32))

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelSet):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    __hash__ = None

    @property
    def semantic(self) -> np.ndarray:
        return self.labels & np.uint32(0xFFFF)

    @property
    def instance(self) -> np.ndarray:
        return self.labels >> np.uint32(16)

    def take(self, idx) -> "LabelSet":
        return LabelSet(self.labels[idx])

    def concat(self, other: "LabelSet") -> "LabelSet":
        return LabelSet(np.concatenate([self.labels, other.labels]))


def check_paired(cloud: PointCloud, labels: LabelSet | None) -> None:
    """Reject a cloud/label pair whose lengths differ."""
    if labels is not None and len(labels) != len(cloud):
        raise LengthMismatch(
            f"label count {len(labels)} does not match point count {len(cloud)}"
        )


def read_scan(path: str | os.PathLike) -> PointCloud:
    """Read a KITTI velodyne ``.bin`` file.

    Intensities outside ``[0, 1]`` are clamped; the number of clamped values
    is logged and kept on ``PointCloud.n_clamped``.
    """
    path = Path(path)
    size = path.stat().st_size
    if size % 16:
        raise SizeNotMultipleOf16(f"{path}: {size} bytes is not a multiple of 16")
    raw = np.fromfile(path, dtype=SCAN_DTYPE).reshape(-1, 4)
    finite = np.isfinite(raw).all(axis=1)
    if not finite.all():
        raise NonFinitePoint(int(np.flatnonzero(~finite)[0]), path)
    intensity = raw[:, 3]
    bad = (intensity < 0) | (intensity > 1)
    n_clamped = int(bad.sum())
    if n_clamped:
        logger.warning("%s: clamped %d intensities to [0, 1]", path, n_clamped)
        raw = raw.copy()
        np.clip(raw[:, 3], 0.0, 1.0, out=raw[:, 3])
    return PointCloud(raw.astype(np.float32), n_clamped=n_clamped)


def write_scan(cloud: PointCloud, path: str | os.PathLike) -> None:
    if not np.isfinite(cloud.data).all():
        bad = int(np.flatnonzero(~np.isfinite(cloud.data).all(axis=1))[0])
        raise NonFinitePoint(bad, path)
    Path(path).write_bytes(cloud.data.astype(SCAN_DTYPE, copy=False).tobytes())


def read_labels(path: str | os.PathLike) -> LabelSet:
    path = Path(path)
    size = path.stat().st_size
    if size % 4:
        raise SizeNotMultipleOf4(f"{path}: {size} bytes is not a multiple of 4")
    return LabelSet(np.fromfile(path, dtype=LABEL_DTYPE).astype(np.uint32))


def write_labels(labels: LabelSet, path: str | os.PathLike) -> None:
    Path(path).write_bytes(labels.labels.astype(LABEL_DTYPE, copy=False).tobytes())


@dataclass(frozen=True)
class ManifestEntry:
    scan_id: str
    scan_path: Path
    label_path: Path | None = None


@dataclass(frozen=True)
class ScanManifest:
    """A list of scans with optional labels plus dataset metadata.

    On disk this is JSON::

        {
          "schema_version": 1,
          "dataset_name": "synthetic",
          "class_names": {"0": "unlabeled", "1": "road"},
          "entries": [
            {"scan_id": "000000", "scan_path": "scans/000000.bin",
             "label_path": "labels/000000.label"}
          ]
        }

    Relative paths are resolved against the manifest's directory.
    """

    entries: tuple[ManifestEntry, ...]
    dataset_name: str = "unnamed"
    class_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        ids = [e.scan_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise LidarcError(f"duplicate scan ids in manifest: {dupes}")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def get(self, scan_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.scan_id == scan_id:
                return e
        raise KeyError(scan_id)

    def to_json(self, base_dir: str | os.PathLike | None = None) -> dict:
        def rel(p):
            if p is None:
                return None
            p = Path(p)
            if base_dir is not None:
                try:
                    return p.resolve().relative_to(Path(base_dir).resolve()).as_posix()
                except ValueError:
                    pass
            return p.as_posix()

        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "dataset_name": self.dataset_name,
            "class_names": {str(k): v for k, v in sorted(self.class_names.items())},
            "entries": [
                {"scan_id": e.scan_id, "scan_path": rel(e.scan_path), "label_path": rel(e.label_path)}
                for e in self.entries
            ],
        }


def load_manifest(path: str | os.PathLike) -> ScanManifest:
    path = Path(path)
    doc = json.loads(path.read_text())
    base = path.parent
    entries = []
    for raw in doc["entries"]:
        scan_path = base / raw["scan_path"]
        label_path = base / raw["label_path"] if raw.get("label_path") else None
        for p in (scan_path, label_path):
            if p is not None and not p.exists():
                raise LidarcError(f"manifest entry {raw['scan_id']!r}: missing file {p}")
        entries.append(ManifestEntry(str(raw["scan_id"]), scan_path, label_path))
    return ScanManifest(
        entries=tuple(entries),
        dataset_name=doc.get("dataset_name", "unnamed"),
        class_names={int(k): v for k, v in doc.get("class_names", {}).items()},
    )


def save_manifest(manifest: ScanManifest, path: str | os.PathLike) -> None:
    path = Path(path)
    text = json.dumps(manifest.to_json(path.parent), indent=2, sort_keys=False)
    path.write_text(text + "\n")
