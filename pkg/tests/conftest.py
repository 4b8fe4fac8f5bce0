"""Shared builders: random graphs, oracle assemblies, synthetic frames."""

from __future__ import annotations

import numpy as np
import pytest

from eigenseg.affinity import AffinityGraph
from eigenseg.tensor_io import FeatureMap, LabelMask


def random_graph(rng: np.random.Generator, s: int, density: float) -> AffinityGraph:
    """Random upper-triangular support with continuous weights in (0, 1]."""
    iu, ju = np.triu_indices(s, k=1)
    keep = rng.random(iu.size) < density
    iu, ju = iu[keep], ju[keep]
    weights = rng.uniform(0.05, 1.0, iu.size)
    return AffinityGraph(s, iu.astype(np.int64), ju.astype(np.int64), weights, (1, s))


def connected_random_graph(rng: np.random.Generator, s: int, extra: float) -> AffinityGraph:
    """Random spanning tree plus extra random edges; guaranteed connected."""
    edges = {}
    order = rng.permutation(s)
    for idx in range(1, s):
        a = int(order[idx])
        b = int(order[int(rng.integers(idx))])
        edges[(min(a, b), max(a, b))] = float(rng.uniform(0.05, 1.0))
    iu, ju = np.triu_indices(s, k=1)
    keep = rng.random(iu.size) < extra
    for a, b in zip(iu[keep], ju[keep]):
        edges.setdefault((int(a), int(b)), float(rng.uniform(0.05, 1.0)))
    pairs = sorted(edges)
    rows = np.array([p[0] for p in pairs], dtype=np.int64)
    cols = np.array([p[1] for p in pairs], dtype=np.int64)
    weights = np.array([edges[p] for p in pairs])
    return AffinityGraph(s, rows, cols, weights, (1, s))


def dense_laplacian_oracle(g: AffinityGraph, eps_degree: float = 1e-12) -> np.ndarray:
    """Independent dense assembly: I - D^{-1/2} W D^{-1/2} with guarded degrees."""
    dense_w = np.zeros((g.num_nodes, g.num_nodes))
    for i, j, w in zip(g.rows, g.cols, g.weights):
        dense_w[i, j] += w
        dense_w[j, i] += w
    deg = dense_w.sum(axis=1)
    dm = 1.0 / np.sqrt(np.maximum(deg, eps_degree))
    lap = np.eye(g.num_nodes) - dm[:, None] * dense_w * dm[None, :]
    return lap


def principal_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Largest principal angle between the column spans of a and b."""
    sv = np.linalg.svd(a.T @ b, compute_uv=False)
    return float(np.arccos(np.clip(sv.min(), -1.0, 1.0)))


def two_block_toy_graph() -> tuple[AffinityGraph, list[int]]:
    """16 nodes on a 4x4 grid: a 3-node block strongly tied inside, weakly across."""
    block = [0, 1, 2]
    rows, cols, weights = [], [], []
    for i in range(16):
        for j in range(i + 1, 16):
            same = (i in block) == (j in block)
            rows.append(i)
            cols.append(j)
            weights.append(1.0 if same else 0.05)
    g = AffinityGraph(
        16,
        np.array(rows, dtype=np.int64),
        np.array(cols, dtype=np.int64),
        np.array(weights),
        (4, 4),
    )
    return g, block


def population_frame(
    shape_labels: np.ndarray,
    channels: int = 8,
    seed: int = 0,
    common: float = 0.15,
    noise: float = 0.01,
) -> FeatureMap:
    """Feature map whose pixels cluster by the integer labels in shape_labels.

    Population prototypes are orthogonal unit axes plus a shared positive
    component, so intra-population cosine is near 1, cross-population cosine
    is small but positive (the affinity graph stays connected).
    """
    h, w = shape_labels.shape
    n_pop = int(shape_labels.max()) + 1
    if channels < n_pop + 1:
        raise ValueError("need channels >= populations + 1")
    rng = np.random.default_rng(seed)
    protos = np.zeros((n_pop, channels))
    for p in range(n_pop):
        protos[p, p] = 1.0
    shared = np.zeros(channels)
    shared[n_pop] = 1.0
    data = protos[shape_labels.ravel()] + common * shared
    data = data + noise * rng.standard_normal((h * w, channels))
    return FeatureMap(h, w, channels, data.reshape(h, w, channels).astype(np.float32))


def _rect(labels: np.ndarray, value: int, bounds: tuple[float, float, float, float]) -> None:
    g = labels.shape[0]
    r0, r1, c0, c1 = (int(round(b * g)) for b in bounds)
    labels[r0:r1, c0:c1] = value


def two_population_scene(grid: int = 28, seed: int = 0):
    """Minority rectangle (label 1) on background; returns (frame, lowres truth)."""
    labels = np.zeros((grid, grid), dtype=np.int32)
    _rect(labels, 1, (0.14, 0.46, 0.21, 0.57))
    frame = population_frame(labels, seed=seed)
    return frame, LabelMask(grid, grid, labels)


def three_population_scene(grid: int = 28, seed: int = 0):
    labels = np.zeros((grid, grid), dtype=np.int32)
    _rect(labels, 1, (0.11, 0.39, 0.14, 0.46))
    _rect(labels, 2, (0.57, 0.89, 0.54, 0.86))
    frame = population_frame(labels, seed=seed)
    assert labels.max() == 2, "grid too small to host both shapes"
    return frame, LabelMask(grid, grid, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
