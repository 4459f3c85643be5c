"""Uniform spatial hash over the axis-aligned boxes of primitive supports."""
from __future__ import annotations

import logging

import numpy as np

from src.errors import InvalidInputError

logger = logging.getLogger(__name__)

_KEY_BITS = 21
_KEY_OFFSET = 1 << (_KEY_BITS - 1)
_KEY_MASK = (1 << _KEY_BITS) - 1
# primitives spanning more cells than this are kept in a side list
OVERSIZED_CELLS = 4096


def expand_boxes(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Enumerate integer cells of inclusive boxes [lo, hi].

    Returns (owner row, cell coords (M, 3)); owners ascend, cells of one owner
    are x-fastest.
    """
    lo = np.asarray(lo, dtype=np.int64).reshape(-1, 3)
    hi = np.asarray(hi, dtype=np.int64).reshape(-1, 3)
    ext = np.maximum(hi - lo + 1, 0)
    counts = ext[:, 0] * ext[:, 1] * ext[:, 2]
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 3), dtype=np.int64)
    owner = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
    starts = np.cumsum(counts) - counts
    off = np.arange(total, dtype=np.int64) - starts[owner]
    nx = ext[owner, 0]
    ny = ext[owner, 1]
    cells = np.empty((total, 3), dtype=np.int64)
    cells[:, 0] = lo[owner, 0] + off % nx
    cells[:, 1] = lo[owner, 1] + (off // nx) % ny
    cells[:, 2] = lo[owner, 2] + off // (nx * ny)
    return owner, cells


def encode_cells(cells: np.ndarray) -> np.ndarray:
    c = np.asarray(cells, dtype=np.int64) + _KEY_OFFSET
    if c.size and (c.min() < 0 or c.max() > _KEY_MASK):
        raise InvalidInputError("spatial hash cell coordinate out of range; check scene scale")
    return (c[..., 0] << (2 * _KEY_BITS)) | (c[..., 1] << _KEY_BITS) | c[..., 2]


def decode_keys(keys: np.ndarray) -> np.ndarray:
    k = np.asarray(keys, dtype=np.int64)
    cells = np.stack([(k >> (2 * _KEY_BITS)) & _KEY_MASK, (k >> _KEY_BITS) & _KEY_MASK, k & _KEY_MASK], axis=-1)
    return cells - _KEY_OFFSET


class SpatialHashIndex:
    """Cell -> primitive ids, stored as a sorted key table.

    Insertion only appends (key, id) pairs; the table is compacted on the next
    query, so a batch insert followed by reads costs one sort.
    """

    def __init__(self, cell_size: float | None = None) -> None:
        self.cell_size = cell_size
        self._pending_keys: list[np.ndarray] = []
        self._pending_ids: list[np.ndarray] = []
        self._oversized: list[np.ndarray] = []
        self._keys = np.zeros(0, dtype=np.int64)
        self._starts = np.zeros(1, dtype=np.int64)
        self._ids = np.zeros(0, dtype=np.int64)
        self._oversized_ids = np.zeros(0, dtype=np.int64)

    def __len__(self) -> int:
        self._compact()
        return int(self._keys.size)

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        return np.floor(np.asarray(points, dtype=np.float64) / self.cell_size).astype(np.int64)

    def add(self, first_id: int, lo: np.ndarray, hi: np.ndarray) -> None:
        """Register boxes [lo, hi] (world units) for ids first_id, first_id+1, ..."""
        n = lo.shape[0]
        if n == 0:
            return
        if self.cell_size is None:
            extent = np.median(np.max(hi - lo, axis=1))
            self.cell_size = float(extent) if extent > 0 else 1e-3
            logger.debug("spatial hash cell size %.6g m", self.cell_size)
        clo = self.cell_of(lo)
        chi = self.cell_of(hi)
        ext = chi - clo + 1
        ncell = ext[:, 0] * ext[:, 1] * ext[:, 2]
        ids = np.arange(first_id, first_id + n, dtype=np.int64)
        big = ncell > OVERSIZED_CELLS
        if np.any(big):
            self._oversized.append(ids[big])
        small = ~big
        owner, cells = expand_boxes(clo[small], chi[small])
        self._pending_keys.append(encode_cells(cells))
        self._pending_ids.append(ids[small][owner])

    def _compact(self) -> None:
        if not self._pending_keys and not self._oversized:
            return
        keys = np.concatenate([self._expanded_keys(), *self._pending_keys])
        ids = np.concatenate([self._ids, *self._pending_ids])
        order = np.lexsort((ids, keys))
        keys = keys[order]
        self._ids = ids[order]
        if keys.size:
            boundary = np.flatnonzero(np.diff(keys)) + 1
            self._keys = keys[np.concatenate([[0], boundary])]
            self._starts = np.concatenate([[0], boundary, [keys.size]]).astype(np.int64)
        else:
            self._keys = keys
            self._starts = np.zeros(1, dtype=np.int64)
        if self._oversized:
            self._oversized_ids = np.sort(np.concatenate([self._oversized_ids, *self._oversized]))
        self._pending_keys.clear()
        self._pending_ids.clear()
        self._oversized.clear()

    def _expanded_keys(self) -> np.ndarray:
        return np.repeat(self._keys, np.diff(self._starts))

    def _gather(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(query row, primitive id) for every id stored under each key."""
        pos = np.searchsorted(self._keys, keys)
        pos_c = np.minimum(pos, max(self._keys.size - 1, 0))
        found = (pos < self._keys.size) & (self._keys[pos_c] == keys) if self._keys.size else np.zeros(keys.shape, bool)
        rows = np.flatnonzero(found)
        begin = self._starts[pos_c[rows]]
        count = self._starts[pos_c[rows] + 1] - begin
        total = int(count.sum())
        if total == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        q = np.repeat(rows, count)
        off = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(count) - count, count)
        return q, self._ids[np.repeat(begin, count) + off]

    def candidates_at(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Candidate (point row, primitive id) pairs whose boxes may contain each point."""
        self._compact()
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if self.cell_size is None or pts.shape[0] == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        q, ids = self._gather(encode_cells(self.cell_of(pts)))
        if self._oversized_ids.size:
            q = np.concatenate([q, np.repeat(np.arange(pts.shape[0]), self._oversized_ids.size)])
            ids = np.concatenate([ids, np.tile(self._oversized_ids, pts.shape[0])])
        return q, ids

    def candidates_in_box(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Sorted unique primitive ids whose boxes may overlap [lo, hi]."""
        self._compact()
        if self.cell_size is None:
            return np.zeros(0, dtype=np.int64)
        clo = self.cell_of(lo)
        chi = self.cell_of(hi)
        ncell = int(np.prod(np.maximum(chi - clo + 1, 0)))
        if ncell <= self._keys.size:
            _, cells = expand_boxes(clo[None, :], chi[None, :])
            keys = encode_cells(cells)
        else:
            stored = decode_keys(self._keys)
            inside = np.all((stored >= clo) & (stored <= chi), axis=1)
            keys = self._keys[inside]
        _, ids = self._gather(keys)
        return np.unique(np.concatenate([ids, self._oversized_ids]))
