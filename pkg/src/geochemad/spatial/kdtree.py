"""Exact k-nearest-neighbour search on a balanced 2-D KD-tree.

Nodes split at the median of the active axis, alternating x and y with depth.
Leaves hold up to ``leafsize`` points. Results are ordered by (distance,
point index), so equidistant points come back lowest index first, exactly as a
brute-force scan sorted the same way would return them.
"""

from __future__ import annotations

import heapq

import numpy as np

from ..errors import ValidationError


def point_distances(points: np.ndarray, q) -> np.ndarray:
    """Euclidean distances from ``q`` to every row of ``points``.

    Shared by the tree and the brute-force reference so both produce
    bit-identical distances.
    """
    dx = points[:, 0] - q[0]
    dy = points[:, 1] - q[1]
    return np.sqrt(dx * dx + dy * dy)


def brute_force_knn(points: np.ndarray, q, k: int, exclude: int | None = None):
    d = point_distances(np.asarray(points, dtype=float), q)
    idx = np.arange(len(d))
    if exclude is not None:
        keep = idx != exclude
        d, idx = d[keep], idx[keep]
    order = np.lexsort((idx, d))[:k]
    return [(int(idx[o]), float(d[o])) for o in order]


class SpatialIndex:
    """Immutable KD-tree over N planar points."""

    def __init__(self, points, leafsize: int = 16):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValidationError("points must be an N x 2 array")
        if len(pts) == 0:
            raise ValidationError("cannot build a spatial index over zero points")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("point coordinates must be finite")
        pts.setflags(write=False)
        self.points = pts
        self.leafsize = max(1, int(leafsize))
        # node arrays: axis (-1 for leaf), split value, children, leaf slice
        self._axis: list[int] = []
        self._split: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._start: list[int] = []
        self._stop: list[int] = []
        self._perm = np.arange(len(pts))
        self._build(0, len(pts), 0)
        self._perm.setflags(write=False)
        self._perm_points = pts[self._perm]

    def __len__(self):
        return len(self.points)

    def _new_node(self) -> int:
        for lst, v in ((self._axis, -1), (self._split, 0.0), (self._left, -1), (self._right, -1),
                       (self._start, 0), (self._stop, 0)):
            lst.append(v)
        return len(self._axis) - 1

    def _build(self, start: int, stop: int, depth: int) -> int:
        node = self._new_node()
        self._start[node], self._stop[node] = start, stop
        n = stop - start
        if n <= self.leafsize:
            return node
        axis = depth % 2
        seg = self._perm[start:stop]
        coords = self.points[seg, axis]
        order = np.lexsort((seg, coords))
        self._perm[start:stop] = seg[order]
        mid = start + n // 2
        self._axis[node] = axis
        self._split[node] = float(self.points[self._perm[mid], axis])
        left = self._build(start, mid, depth + 1)
        right = self._build(mid, stop, depth + 1)
        self._left[node], self._right[node] = left, right
        return node

    def query(self, q, k: int, exclude: int | None = None) -> list[tuple[int, float]]:
        """The ``k`` nearest points to ``q`` as ``(index, distance)``, ascending."""
        if k < 1:
            raise ValidationError("k must be >= 1")
        if exclude is not None and not 0 <= exclude < len(self.points):
            raise ValidationError(f"exclude index {exclude} out of range")
        qx, qy = float(q[0]), float(q[1])
        limit = min(k, len(self.points) - (exclude is not None))
        if limit <= 0:
            return []
        heap: list[tuple[float, int]] = []  # (-dist, -index): heap[0] is the current worst
        stack = [(0, 0.0)]  # (node, lower bound on distance to any point below it)
        axis_, split_, left_, right_ = self._axis, self._split, self._left, self._right
        while stack:
            node, bound = stack.pop()
            # ties at the bound must still be visited: a farther-side point may win on index
            if len(heap) == limit and bound > -heap[0][0]:
                continue
            axis = axis_[node]
            if axis < 0:
                s, e = self._start[node], self._stop[node]
                d = point_distances(self._perm_points[s:e], (qx, qy))
                idxs = self._perm[s:e]
                cand = np.flatnonzero(d <= -heap[0][0]) if len(heap) == limit else range(len(d))
                for c in cand:
                    i = int(idxs[c])
                    if i == exclude:
                        continue
                    di = float(d[c])
                    if len(heap) < limit:
                        heapq.heappush(heap, (-di, -i))
                    elif (di, i) < (-heap[0][0], -heap[0][1]):
                        heapq.heapreplace(heap, (-di, -i))
                continue
            diff = (qx if axis == 0 else qy) - split_[node]
            near, far = (left_[node], right_[node]) if diff < 0 else (right_[node], left_[node])
            stack.append((far, max(bound, abs(diff))))
            stack.append((near, bound))
        out = sorted((-nd, -ni) for nd, ni in heap)
        return [(i, d) for d, i in out]

    def query_many(self, queries, k: int, exclude_self: bool = False):
        """kNN for each row of ``queries``; returns (indices, distances) arrays.

        With ``exclude_self`` the queries must be the indexed points themselves
        and row i excludes point i. Rows with fewer than k hits are padded with
        index -1 and distance inf.
        """
        queries = np.asarray(queries, dtype=float)
        m = len(queries)
        idx = np.full((m, k), -1, dtype=np.int64)
        dist = np.full((m, k), np.inf)
        for r in range(m):
            res = self.query(queries[r], k, exclude=r if exclude_self else None)
            for j, (i, d) in enumerate(res):
                idx[r, j] = i
                dist[r, j] = d
        return idx, dist


def build_index(points, leafsize: int = 16) -> SpatialIndex:
    return SpatialIndex(points, leafsize=leafsize)


def knn_query(index: SpatialIndex, query, k: int, exclude: int | None = None):
    return index.query(query, k, exclude=exclude)


def average_sampling_distance(index: SpatialIndex) -> float:
    """Mean distance from each point to its nearest other point."""
    n = len(index)
    if n < 2:
        raise ValidationError("average sampling distance needs at least two points")
    _, dist = index.query_many(index.points, 1, exclude_self=True)
    return float(dist[:, 0].mean())
