"""Fixed-radius neighbour counting on a uniform cell grid, plus the brute-force oracle.

The index sorts points by their integer cell coordinates (lexicographically)
and answers a radius-h query by visiting the 3^k cells around the query's
own cell. Both the grid path and the oracle accumulate squared distances in
the same coordinate order and apply the same mass rule, so their results
agree bit for bit, including ties at distance exactly h.

Mass rule: for a uniform measure on N atoms the mass of a hit set is
count / N; otherwise it is the sequential sum of the weights taken in
increasing point-index order.
"""

from __future__ import annotations

import itertools
from typing import Optional

import numpy as np
from numba import njit

# Cells are slightly larger than the query radius so that float rounding of
# y / cell can never separate two points within the radius by two cells.
_CELL_PAD = 1.0 + 1e-9
_MAX_CELL_COORD = 2.0**62


@njit(cache=True, nogil=True)
def _cmp_row(uniq, m, key):
    for c in range(key.shape[0]):
        a = uniq[m, c]
        b = key[c]
        if a < b:
            return -1
        if a > b:
            return 1
    return 0


@njit(cache=True, nogil=True)
def _find(uniq, key):
    lo = 0
    hi = uniq.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        c = _cmp_row(uniq, mid, key)
        if c < 0:
            lo = mid + 1
        elif c > 0:
            hi = mid
        else:
            return mid
    return -1


@njit(cache=True, nogil=True)
def _count_kernel(coords, uniq, starts, offsets, qcoords, qcells, r2, out):
    k = coords.shape[1]
    key = np.empty(k, dtype=np.int64)
    for q in range(qcoords.shape[0]):
        cnt = 0
        for o in range(offsets.shape[0]):
            for c in range(k):
                key[c] = qcells[q, c] + offsets[o, c]
            m = _find(uniq, key)
            if m < 0:
                continue
            for p in range(starts[m], starts[m + 1]):
                d2 = 0.0
                for c in range(k):
                    diff = coords[p, c] - qcoords[q, c]
                    d2 += diff * diff
                if d2 <= r2:
                    cnt += 1
        out[q] = cnt


@njit(cache=True, nogil=True)
def _weighted_kernel(coords, ids, uniq, starts, offsets, qcoords, qcells, r2, weights, out):
    k = coords.shape[1]
    key = np.empty(k, dtype=np.int64)
    buf = np.empty(coords.shape[0], dtype=np.int64)
    for q in range(qcoords.shape[0]):
        cnt = 0
        for o in range(offsets.shape[0]):
            for c in range(k):
                key[c] = qcells[q, c] + offsets[o, c]
            m = _find(uniq, key)
            if m < 0:
                continue
            for p in range(starts[m], starts[m + 1]):
                d2 = 0.0
                for c in range(k):
                    diff = coords[p, c] - qcoords[q, c]
                    d2 += diff * diff
                if d2 <= r2:
                    buf[cnt] = ids[p]
                    cnt += 1
        hits = np.sort(buf[:cnt])
        s = 0.0
        for i in range(cnt):
            s += weights[hits[i]]
        out[q] = s


@njit(cache=True, nogil=True)
def _pair_work_kernel(uniq, starts, offsets):
    k = uniq.shape[1]
    key = np.empty(k, dtype=np.int64)
    total = 0
    for m in range(uniq.shape[0]):
        own = starts[m + 1] - starts[m]
        for o in range(offsets.shape[0]):
            for c in range(k):
                key[c] = uniq[m, c] + offsets[o, c]
            j = _find(uniq, key)
            if j >= 0:
                total += own * (starts[j + 1] - starts[j])
    return total


def neighbour_offsets(k: int, lo: int = -1, hi: int = 1) -> np.ndarray:
    combos = list(itertools.product(range(lo, hi + 1), repeat=k))
    return np.array(combos, dtype=np.int64).reshape(len(combos), k)


def cell_coords(coords: np.ndarray, cell: float) -> np.ndarray:
    scaled = np.floor(np.asarray(coords, dtype=float) / cell)
    if scaled.size and not np.all(np.abs(scaled) < _MAX_CELL_COORD):
        raise ValueError("coordinates too large relative to the cell size for an integer grid")
    return scaled.astype(np.int64)


def squared_distances(coords: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances from each row of coords to q, coordinate order fixed."""
    d2 = (coords[:, 0] - q[0]) ** 2
    for c in range(1, coords.shape[1]):
        d2 = d2 + (coords[:, c] - q[c]) ** 2
    return d2


def hit_mass(hit_ids: np.ndarray, weights: np.ndarray, uniform: bool) -> float:
    """Mass of a set of atoms under the shared mass rule."""
    if uniform:
        return len(hit_ids) / len(weights)
    if len(hit_ids) == 0:
        return 0.0
    return float(np.cumsum(weights[np.sort(hit_ids)])[-1])


def brute_masses(coords, radius, weights, uniform, queries=None, active=None) -> np.ndarray:
    """O(N^2) oracle: closed-ball mass around each query, scanning every point.

    ``coords`` holds the images of all atoms; ``active`` optionally restricts
    which atoms may be counted; ``queries`` are image-space query points
    (defaults to all atoms).
    """
    coords = np.asarray(coords, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if queries is None:
        queries = coords
    queries = np.asarray(queries, dtype=float)
    ids = np.arange(len(coords)) if active is None else np.flatnonzero(active)
    sub = coords[ids]
    r2 = radius * radius
    out = np.empty(len(queries))
    if coords.shape[1] == 0:
        out[:] = hit_mass(ids, weights, uniform)
        return out
    for i, q in enumerate(queries):
        out[i] = hit_mass(ids[squared_distances(sub, q) <= r2], weights, uniform)
    return out


class GridIndex:
    """Bucket index over points in an image space, cell size matched to a query radius.

    ``ids`` maps the indexed rows back to atom indices of the owning measure,
    so an index over a subset answers restricted-mass queries directly.
    """

    def __init__(self, coords, cell_size: float, ids=None, offset_range=(-1, 1)):
        coords = np.ascontiguousarray(coords, dtype=float)
        if coords.ndim != 2:
            raise ValueError("coords must be an (N, k) array")
        if not cell_size > 0:
            raise ValueError("cell_size must be positive")
        self.k = coords.shape[1]
        self.cell_size = float(cell_size)
        self._cell = self.cell_size * _CELL_PAD
        ids = np.arange(len(coords), dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        cells = cell_coords(coords, self._cell)
        if self.k and len(coords):
            order = np.lexsort(cells.T[::-1])
        else:
            order = np.arange(len(coords))
        cells = cells[order]
        self.coords = np.ascontiguousarray(coords[order])
        self.ids = np.ascontiguousarray(ids[order])
        if len(cells):
            new = np.ones(len(cells), dtype=bool)
            if self.k:
                new[1:] = np.any(cells[1:] != cells[:-1], axis=1)
            else:
                new[1:] = False
            first = np.flatnonzero(new)
        else:
            first = np.zeros(0, dtype=np.int64)
        self.uniq = np.ascontiguousarray(cells[first])
        self.starts = np.append(first, len(cells)).astype(np.int64)
        self.offsets = neighbour_offsets(self.k, *offset_range)

    def __len__(self):
        return len(self.coords)

    @property
    def buckets(self) -> dict:
        return {
            tuple(int(v) for v in self.uniq[m]): sorted(self.ids[self.starts[m] : self.starts[m + 1]].tolist())
            for m in range(len(self.uniq))
        }

    def pair_work(self) -> int:
        """Number of candidate pairs a self-query would examine."""
        if len(self.coords) == 0:
            return 0
        return int(_pair_work_kernel(self.uniq, self.starts, self.offsets))

    def _prepare(self, queries):
        queries = np.ascontiguousarray(queries, dtype=float)
        if queries.ndim != 2:
            queries = queries.reshape(-1, self.k)
        return queries, cell_coords(queries, self._cell)

    def counts(self, queries, radius: Optional[float] = None) -> np.ndarray:
        radius = self.cell_size if radius is None else radius
        if radius > self.cell_size:
            raise ValueError("query radius exceeds the index cell size")
        queries, qcells = self._prepare(queries)
        out = np.zeros(len(queries), dtype=np.int64)
        if self.k == 0:
            out[:] = len(self.coords)
        elif len(self.coords) and len(queries):
            _count_kernel(self.coords, self.uniq, self.starts, self.offsets, queries, qcells, radius * radius, out)
        return out

    def masses(self, queries, weights, uniform: bool, radius: Optional[float] = None) -> np.ndarray:
        weights = np.asarray(weights, dtype=float)
        if uniform:
            return self.counts(queries, radius) / len(weights)
        radius = self.cell_size if radius is None else radius
        if radius > self.cell_size:
            raise ValueError("query radius exceeds the index cell size")
        queries, qcells = self._prepare(queries)
        out = np.zeros(len(queries))
        if self.k == 0:
            out[:] = hit_mass(self.ids, weights, False)
        elif len(self.coords) and len(queries):
            _weighted_kernel(
                self.coords, self.ids, self.uniq, self.starts, self.offsets, queries, qcells, radius * radius, weights, out
            )
        return out
