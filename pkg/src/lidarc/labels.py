"""Per-point provenance of corrupted clouds and annotation remapping.

Every corruption returns a :class:`ProvenanceSet` next to the corrupted
cloud. Points that still correspond to a clean point (``ORIGINAL`` or
``DISPLACED``) inherit that point's label; points produced by the corruption
itself (``SCATTERER`` for fog/snow returns, ``INJECTED`` for outliers) are
labeled ``ignore``.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyCloud, IndexOutOfRange, LengthMismatch, LidarcError
from .scan_io import IGNORE, LabelSet, PointCloud


class Tag(enum.IntEnum):
    ORIGINAL = 0
    DISPLACED = 1
    SCATTERER = 2
    INJECTED = 3


_KEEPS_LABEL = np.array([True, True, False, False])


@dataclass(frozen=True, eq=False)
class ProvenanceSet:
    """Origin of each corrupted point.

    ``tags`` holds :class:`Tag` values as uint8. ``source`` is the index of
    the clean point each output point derives from, or -1 for injected
    points. Scatterers keep the index of the ray they replaced.
    """

    tags: np.ndarray
    source: np.ndarray

    def __post_init__(self):
        tags = np.array(self.tags, dtype=np.uint8, copy=True)
        source = np.array(self.source, dtype=np.int64, copy=True)
        if tags.ndim != 1 or tags.shape != source.shape:
            raise LidarcError("tags and source must be 1-D arrays of equal length")
        if tags.size and tags.max() > max(Tag):
            raise LidarcError(f"unknown provenance tag {int(tags.max())}")
        tags.flags.writeable = False
        source.flags.writeable = False
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "source", source)

    @classmethod
    def identity(cls, n: int) -> "ProvenanceSet":
        return cls(np.full(n, Tag.ORIGINAL, dtype=np.uint8), np.arange(n))

    def __len__(self) -> int:
        return self.tags.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProvenanceSet):
            return NotImplemented
        return np.array_equal(self.tags, other.tags) and np.array_equal(self.source, other.source)

    __hash__ = None

    def count(self, *tags: Tag) -> int:
        return int(np.isin(self.tags, np.asarray(tags, dtype=np.uint8)).sum())

    def mask(self, *tags: Tag) -> np.ndarray:
        return np.isin(self.tags, np.asarray(tags, dtype=np.uint8))

    def take(self, idx) -> "ProvenanceSet":
        return ProvenanceSet(self.tags[idx], self.source[idx])

    def compose(self, inner: "ProvenanceSet") -> "ProvenanceSet":
        """Provenance of ``outer(inner(clean))`` given this as the outer step.

        Sources are mapped back through ``inner``; the stronger tag wins
        (an injected point stays injected, a displaced original stays
        displaced).
        """
        src = self.source
        valid = src >= 0
        tags = self.tags.copy()
        source = np.full_like(src, -1)
        source[valid] = inner.source[src[valid]]
        tags[valid] = np.maximum(tags[valid], inner.tags[src[valid]])
        return ProvenanceSet(tags, source)


def remap_labels(clean_labels: LabelSet, prov: ProvenanceSet) -> LabelSet:
    """Labels for a corrupted cloud from the clean labels and provenance."""
    keep = _KEEPS_LABEL[prov.tags]
    src = prov.source
    if np.any(keep & ((src < 0) | (src >= len(clean_labels)))):
        bad = int(np.flatnonzero(keep & ((src < 0) | (src >= len(clean_labels))))[0])
        raise IndexOutOfRange(
            f"point {bad} refers to clean index {int(src[bad])}, "
            f"but only {len(clean_labels)} clean labels exist"
        )
    out = np.full(len(prov), IGNORE, dtype=np.uint32)
    out[keep] = clean_labels.labels[src[keep]]
    return LabelSet(out)


_NEIGHBOURS = np.array(
    [(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)], dtype=np.int64
)


def nearest_within(clean_xyz: np.ndarray, query_xyz: np.ndarray, radius: float,
                   chunk: int = 1 << 16) -> np.ndarray:
    """Index of the nearest clean point within ``radius`` of each query, else -1.

    Uniform-grid hash with cell size ``radius`` (coarsened for huge extents
    so keys fit in int64): only the 27 surrounding cells can hold a match.
    Ties go to the lowest clean index.
    """
    clean = np.asarray(clean_xyz, dtype=np.float64)
    query = np.asarray(query_xyz, dtype=np.float64)
    result = np.full(len(query), -1, dtype=np.int64)
    if len(clean) == 0 or len(query) == 0:
        return result

    origin = clean.min(axis=0)
    extent = float((clean.max(axis=0) - origin).max())
    cell = max(radius, extent / 1e6)
    cells = np.floor((clean - origin) / cell).astype(np.int64)
    # two padding cells per side keep every neighbour key of a relevant query in range
    dims = cells.max(axis=0) + 5
    cells += 2

    def key(c):
        return (c[:, 0] * dims[1] + c[:, 1]) * dims[2] + c[:, 2]

    ckey = key(cells)
    order = np.argsort(ckey, kind="stable")
    sorted_keys = ckey[order]
    r2 = radius * radius

    for start in range(0, len(query), chunk):
        q = query[start:start + chunk]
        qcell = np.floor((q - origin) / cell).astype(np.int64) + 2
        inside = np.all((qcell >= 1) & (qcell <= dims - 2), axis=1)
        best_d = np.full(len(q), np.inf)
        best_i = np.full(len(q), -1, dtype=np.int64)
        qi_all = np.flatnonzero(inside)
        for off in _NEIGHBOURS:
            nk = key(qcell[qi_all] + off)
            lo = np.searchsorted(sorted_keys, nk, side="left")
            hi = np.searchsorted(sorted_keys, nk, side="right")
            counts = hi - lo
            if not counts.any():
                continue
            qi = np.repeat(qi_all, counts)
            # positions lo..hi-1 for every query, flattened
            offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
            ci = order[np.repeat(lo, counts) + offsets]
            d = ((q[qi] - clean[ci]) ** 2).sum(axis=1)
            ok = d <= r2
            qi, ci, d = qi[ok], ci[ok], d[ok]
            # process candidates by (distance, index) so the first hit per query wins
            srt = np.lexsort((ci, d))
            qi, ci, d = qi[srt], ci[srt], d[srt]
            first = np.unique(qi, return_index=True)[1]
            qi, ci, d = qi[first], ci[first], d[first]
            better = (d < best_d[qi]) | ((d == best_d[qi]) & (ci < best_i[qi]))
            best_d[qi[better]] = d[better]
            best_i[qi[better]] = ci[better]
        result[start:start + len(q)] = best_i
    return result


def remap_labels_by_nn(clean_cloud: PointCloud, clean_labels: LabelSet,
                       corrupted_cloud: PointCloud, radius: float = 1e-4) -> LabelSet:
    """Label each corrupted point from its nearest clean point within ``radius``.

    Fallback for corrupted clouds produced elsewhere, without provenance.
    Points with no clean neighbour inside the radius become ``ignore``.
    """
    if not radius > 0:
        raise LidarcError(f"radius must be positive, got {radius!r}")
    if len(clean_cloud) == 0:
        raise EmptyCloud("cannot query an empty clean cloud")
    if len(clean_labels) != len(clean_cloud):
        raise LengthMismatch(f"{len(clean_labels)} labels for {len(clean_cloud)} clean points")
    nn = nearest_within(clean_cloud.xyz, corrupted_cloud.xyz, radius)
    out = np.full(len(corrupted_cloud), IGNORE, dtype=np.uint32)
    hit = nn >= 0
    out[hit] = clean_labels.labels[nn[hit]]
    return LabelSet(out)


def write_provenance(prov: ProvenanceSet, path: str | os.PathLike) -> None:
    """One byte per point holding the tag value."""
    Path(path).write_bytes(prov.tags.astype(np.uint8).tobytes())


def read_provenance_tags(path: str | os.PathLike) -> np.ndarray:
    return np.fromfile(path, dtype=np.uint8)
