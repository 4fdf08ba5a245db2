"""
Spatial - axis-aligned bounding-box tree for broad-phase queries
Used for point location during binding and for contact candidate pairs.
"""

import logging
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)

LEAF_SIZE = 8


class AABBTree:
    """
    Static bounding-box hierarchy over a set of boxes.

    Nodes are stored in flat arrays; queries traverse all query boxes at once
    with a frontier of (query, node) pairs.
    """

    def __init__(self, lower: np.ndarray, upper: np.ndarray, leaf_size: int = LEAF_SIZE):
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        self.n_items = len(self.lower)
        self.leaf_size = leaf_size
        self._build()

    @classmethod
    def from_simplices(cls, positions: np.ndarray, simplices: np.ndarray, inflate: float = 0.0) -> "AABBTree":
        corners = positions[simplices]
        return cls(corners.min(axis=1) - inflate, corners.max(axis=1) + inflate)

    def _build(self):
        order = np.arange(self.n_items)
        centers = 0.5 * (self.lower + self.upper)
        node_lo, node_hi, left, right, start, stop = [], [], [], [], [], []

        def new_node(lo_idx, hi_idx):
            items = order[lo_idx:hi_idx]
            node_lo.append(self.lower[items].min(axis=0))
            node_hi.append(self.upper[items].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(lo_idx)
            stop.append(hi_idx)
            return len(node_lo) - 1

        if self.n_items:
            stack = [new_node(0, self.n_items)]
            while stack:
                node = stack.pop()
                lo_idx, hi_idx = start[node], stop[node]
                if hi_idx - lo_idx <= self.leaf_size:
                    continue
                items = order[lo_idx:hi_idx]
                axis = int(np.argmax(node_hi[node] - node_lo[node]))
                ranked = items[np.argsort(centers[items, axis], kind="stable")]
                order[lo_idx:hi_idx] = ranked
                mid = (lo_idx + hi_idx) // 2
                left[node] = new_node(lo_idx, mid)
                right[node] = new_node(mid, hi_idx)
                stack.extend([left[node], right[node]])

        dim = self.lower.shape[1] if self.lower.ndim == 2 else 0
        self.order = order
        self.node_lower = np.array(node_lo, dtype=np.float64).reshape(-1, dim)
        self.node_upper = np.array(node_hi, dtype=np.float64).reshape(-1, dim)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.stop = np.array(stop, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def query(self, q_lower: np.ndarray, q_upper: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        All (query, item) pairs whose boxes overlap, sorted by query then item.
        """
        q_lower = np.atleast_2d(np.asarray(q_lower, dtype=np.float64))
        q_upper = np.atleast_2d(np.asarray(q_upper, dtype=np.float64))
        empty = np.zeros(0, dtype=np.int64)
        if not self.n_items or not len(q_lower):
            return empty, empty

        queries = np.arange(len(q_lower))
        nodes = np.zeros(len(q_lower), dtype=np.int64)
        hit_q, hit_items = [], []
        while len(queries):
            overlap = np.all(
                (q_lower[queries] <= self.node_upper[nodes]) & (q_upper[queries] >= self.node_lower[nodes]), axis=1
            )
            queries, nodes = queries[overlap], nodes[overlap]
            leaf = self.left[nodes] < 0

            # expand leaves into their items
            lq, ln = queries[leaf], nodes[leaf]
            counts = self.stop[ln] - self.start[ln]
            offsets = np.repeat(self.start[ln] - np.cumsum(counts) + counts, counts) + np.arange(counts.sum())
            items = self.order[offsets]
            lq = np.repeat(lq, counts)
            keep = np.all((q_lower[lq] <= self.upper[items]) & (q_upper[lq] >= self.lower[items]), axis=1)
            hit_q.append(lq[keep])
            hit_items.append(items[keep])

            inner_q, inner_n = queries[~leaf], nodes[~leaf]
            queries = np.concatenate([inner_q, inner_q])
            nodes = np.concatenate([self.left[inner_n], self.right[inner_n]])

        hit_q = np.concatenate(hit_q)
        hit_items = np.concatenate(hit_items)
        ranked = np.lexsort((hit_items, hit_q))
        return hit_q[ranked], hit_items[ranked]

    def query_points(self, points: np.ndarray, radius: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(points)
        return self.query(points - radius, points + radius)
