"""Exact KD-tree spatial index for segment linking and scalp attachment.

Thin wrapper around scipy's cKDTree adding stable id payloads and fully
deterministic tie-breaking (distance, then lowest id). All queries are
exact; results match a linear scan bit for bit.
"""

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError


class SpatialIndex:
    """Immutable KD-tree over 3D points with integer id payloads."""

    def __init__(self, points, ids=None):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if ids is None:
            ids = np.arange(len(points), dtype=np.int64)
        else:
            ids = np.asarray(ids, dtype=np.int64).reshape(-1)
            if len(ids) != len(points):
                raise DataError("points and ids length mismatch")
        self.points = points
        self.ids = ids
        self._tree = cKDTree(points, balanced_tree=True) if len(points) else None

    def __len__(self):
        return len(self.points)

    def query_radius_batch(self, queries, r):
        """Ids within distance r of each query, sorted by (distance, id).

        Returns a list of (ids, distances) pairs, one per query.
        """
        if r < 0:
            raise DataError(f"radius must be non-negative, got {r}")
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        if self._tree is None:
            return [(np.empty(0, np.int64), np.empty(0))] * len(queries)
        hits = self._tree.query_ball_point(queries, r)
        out = []
        for q, idx in zip(queries, hits):
            idx = np.asarray(idx, dtype=np.int64)
            if len(idx) == 0:
                out.append((np.empty(0, np.int64), np.empty(0)))
                continue
            d = np.linalg.norm(self.points[idx] - q, axis=1)
            order = np.lexsort((self.ids[idx], d))
            out.append((self.ids[idx][order], d[order]))
        return out

    def nearest(self, q):
        """Globally nearest (id, distance); ties resolved to the lowest id."""
        if self._tree is None:
            raise DataError("nearest() on an empty index")
        q = np.asarray(q, dtype=np.float64).reshape(3)
        d0, _ = self._tree.query(q)
        # re-examine everything at the minimal distance so ties go to lowest id
        idx = np.asarray(self._tree.query_ball_point(q, d0 * (1 + 1e-12) + 1e-12), dtype=np.int64)
        d = np.linalg.norm(self.points[idx] - q, axis=1)
        dmin = d.min()
        at_min = idx[d == dmin]
        return int(self.ids[at_min].min()), float(dmin)

    def nearest_batch(self, queries):
        """Vectorized nearest for (N, 3) queries; same tie rule as nearest()."""
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        if self._tree is None:
            raise DataError("nearest_batch() on an empty index")
        d, i = self._tree.query(queries)
        ids = self.ids[i]
        return ids.astype(np.int64), d
