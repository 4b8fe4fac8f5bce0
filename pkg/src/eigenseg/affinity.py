"""Pixel-affinity graph built from thresholded cosine similarity of feature vectors.

Each pixel of the feature grid is a node; an edge (i, j) with weight
cos(f_i, f_j) exists exactly when the cosine is strictly positive.
Exact zeros (orthogonal features) and the diagonal carry no edge, so the
resulting matrix is sparse, symmetric and entrywise in (0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFeatureError
from .tensor_io import FeatureMap

WEIGHT_UPPER_SLACK = 1e-7  # rounding headroom above the exact cosine bound of 1


@dataclass(frozen=True)
class AffinityGraph:
    """Sparse symmetric affinity matrix, stored as its strict upper triangle.

    ``rows[k] < cols[k]`` for every stored entry; the symmetric counterpart
    is implied. ``grid_shape`` keeps the originating (h, w) so downstream
    stages can reshape per-pixel vectors back onto the image grid.
    """

    num_nodes: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    grid_shape: tuple[int, int]

    def __post_init__(self):
        h, w = self.grid_shape
        if h * w != self.num_nodes:
            raise ValueError(f"grid {h}x{w} does not cover {self.num_nodes} nodes")
        if not (self.rows.shape == self.cols.shape == self.weights.shape):
            raise ValueError("edge arrays must have identical shapes")
        if self.rows.size:
            if self.rows.min() < 0 or self.cols.max() >= self.num_nodes:
                raise ValueError("edge endpoint out of range")
            if not (self.rows < self.cols).all():
                raise ValueError("entries must satisfy i < j (upper triangle only)")
            if self.weights.min() <= 0.0:
                raise ValueError("stored weights must be strictly positive")
            if self.weights.max() > 1.0 + WEIGHT_UPPER_SLACK:
                raise ValueError("weight exceeds the cosine bound of 1")

    @property
    def num_edges(self) -> int:
        return int(self.rows.size)

    def density(self) -> float:
        """Stored edges as a fraction of all possible pairs."""
        pairs = self.num_nodes * (self.num_nodes - 1) // 2
        return self.num_edges / pairs if pairs else 0.0

    def to_dense(self) -> np.ndarray:
        """Full symmetric matrix; intended for small graphs and tests."""
        dense = np.zeros((self.num_nodes, self.num_nodes))
        dense[self.rows, self.cols] = self.weights
        dense[self.cols, self.rows] = self.weights
        return dense


def build_affinity(fm: FeatureMap, block_size: int = 1024) -> AffinityGraph:
    """Thresh-at-zero cosine affinity graph of a feature map.

    Rows of the cosine matrix are computed in fixed-order blocks of
    ``block_size`` pixels, so the edge list is deterministic for a given
    input regardless of how the blocks are scheduled.
    """
    feats = fm.as_matrix().astype(np.float64)
    norms = np.linalg.norm(feats, axis=1)
    dead = np.flatnonzero(norms == 0.0)
    if dead.size:
        raise DegenerateFeatureError(
            f"pixel {int(dead[0])} has a zero-norm feature vector"
        )
    unit = feats / norms[:, None]

    s = fm.num_pixels
    col_index = np.arange(s)
    rows_out: list[np.ndarray] = []
    cols_out: list[np.ndarray] = []
    weights_out: list[np.ndarray] = []
    for start in range(0, s, block_size):
        stop = min(start + block_size, s)
        cosines = unit[start:stop] @ unit.T
        keep = (cosines > 0.0) & (col_index[None, :] > np.arange(start, stop)[:, None])
        r, c = np.nonzero(keep)
        rows_out.append(r.astype(np.int64) + start)
        cols_out.append(c.astype(np.int64))
        weights_out.append(cosines[keep])

    return AffinityGraph(
        num_nodes=s,
        rows=np.concatenate(rows_out) if rows_out else np.empty(0, np.int64),
        cols=np.concatenate(cols_out) if cols_out else np.empty(0, np.int64),
        weights=np.concatenate(weights_out) if weights_out else np.empty(0),
        grid_shape=(fm.height, fm.width),
    )


def degree_vector(g: AffinityGraph) -> np.ndarray:
    """Row sums of the symmetric affinity matrix; isolated nodes get 0."""
    deg = np.bincount(g.rows, weights=g.weights, minlength=g.num_nodes)
    deg += np.bincount(g.cols, weights=g.weights, minlength=g.num_nodes)
    return deg
