"""Low-resolution segmentation from an eigenbasis.

Two routes:

* salient detection: the second-smallest eigenvector (Fiedler vector) is
  oriented minority-positive and either rendered as a saliency map or
  thresholded into a binary foreground mask;
* clustering: the first g eigenvectors become per-pixel coordinates and a
  deterministic k-means (k-means++ seeding, Lloyd iterations, fixed restart
  stream) partitions the pixels.

Cluster labels are renumbered by first occurrence in row-major order, so the
output mask does not depend on internal centroid indexing, and sign flips of
any eigenvector column leave the partition unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, InfeasibleClusteringError
from .spectral import EigenBasis
from .tensor_io import LabelMask, SaliencyMap, minmax_normalize


@dataclass(frozen=True)
class SpectralEmbedding:
    """Per-pixel coordinates taken from the first g eigenvectors."""

    height: int
    width: int
    coords: np.ndarray

    def __post_init__(self):
        if self.coords.ndim != 2 or self.coords.shape[0] != self.height * self.width:
            raise DataError(
                f"coords shape {self.coords.shape} does not cover a "
                f"{self.height}x{self.width} grid"
            )
        if self.coords.shape[1] < 1:
            raise DataError("embedding needs at least one eigenvector")
        if not np.isfinite(self.coords).all():
            raise DataError("embedding contains NaN or Inf")

    @property
    def g(self) -> int:
        return int(self.coords.shape[1])


@dataclass(frozen=True)
class ClusterParams:
    k: int
    g: int
    seed: int = 0
    restarts: int = 10
    max_iters: int = 300
    rel_tol: float = 1e-6

    def __post_init__(self):
        # k = 1 is degenerate but well-defined (single all-zero label)
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.g < 1:
            raise ValueError("g must be at least 1")
        if self.restarts < 1 or self.max_iters < 1 or self.rel_tol <= 0:
            raise ValueError("restarts/max_iters/rel_tol must be positive")


def orient_fiedler(v: np.ndarray) -> np.ndarray:
    """Orient so the strictly positive side is the minority.

    On a tie, the side containing pixel 0 is made positive; an exactly zero
    pixel 0 leaves the vector as given.
    """
    positive = int((v > 0).sum())
    negative = int((v < 0).sum())
    if positive > negative:
        return -v
    if positive == negative and v[0] < 0:
        return -v
    return v.copy()


def _fiedler(basis: EigenBasis, height: int, width: int) -> np.ndarray:
    if basis.m < 2:
        raise ValueError("need at least two eigenvectors for the Fiedler vector")
    if basis.num_nodes != height * width:
        raise ValueError(
            f"basis covers {basis.num_nodes} nodes, grid is {height}x{width}"
        )
    return orient_fiedler(basis.eigenvectors[:, 1])


def fiedler_saliency(basis: EigenBasis, height: int, width: int) -> SaliencyMap:
    """Min-max normalized rendering of the oriented Fiedler vector."""
    v = _fiedler(basis, height, width)
    return SaliencyMap(height, width, minmax_normalize(v.reshape(height, width)))


def fiedler_binary_mask(
    basis: EigenBasis, height: int, width: int, tau: float = 0.0
) -> LabelMask:
    """Foreground (label 1) where the oriented Fiedler vector exceeds ``tau``."""
    v = _fiedler(basis, height, width)
    labels = (v > tau).astype(np.int32).reshape(height, width)
    return LabelMask(height, width, labels)


def stack_eigenvectors(
    basis: EigenBasis, g: int, height: int, width: int
) -> SpectralEmbedding:
    """Coordinates (v_1[i], ..., v_g[i]) per pixel, in eigenvalue order."""
    if g < 1 or g > basis.m:
        raise ValueError(f"g must be in [1, {basis.m}], got {g}")
    if basis.num_nodes != height * width:
        raise ValueError(
            f"basis covers {basis.num_nodes} nodes, grid is {height}x{width}"
        )
    return SpectralEmbedding(height, width, basis.eigenvectors[:, :g].copy())


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # (x - c)^2 form: exactly invariant under sign flips of any coordinate
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def _assign(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, float]:
    """Nearest-center labels with empty clusters re-seeded deterministically.

    An empty center is replaced by the point currently farthest from its own
    center (ties to the lowest point index), then distances are refreshed.
    """
    k = centers.shape[0]
    d2 = _squared_distances(points, centers)
    labels = d2.argmin(axis=1)
    own = d2[np.arange(points.shape[0]), labels]
    for _ in range(k):  # each pass fills one empty cluster
        empties = np.flatnonzero(np.bincount(labels, minlength=k) == 0)
        if empties.size == 0:
            break
        empty = int(empties[0])
        farthest = int(own.argmax())
        centers[empty] = points[farthest]
        d2[:, empty] = ((points - centers[empty]) ** 2).sum(axis=1)
        labels = d2.argmin(axis=1)
        own = d2[np.arange(points.shape[0]), labels]
    return labels, float(own.sum())


def _lloyd(
    points: np.ndarray,
    centers: np.ndarray,
    max_iters: int,
    rel_tol: float,
) -> KMeansResult:
    n, dims = points.shape
    k = centers.shape[0]
    centers = centers.copy()
    labels, inertia = _assign(points, centers)
    for _ in range(max_iters):
        sums = np.zeros((k, dims))
        np.add.at(sums, labels, points)
        counts = np.bincount(labels, minlength=k)
        occupied = counts > 0
        centers[occupied] = sums[occupied] / counts[occupied, None]
        new_labels, new_inertia = _assign(points, centers)
        unchanged = bool((new_labels == labels).all())
        converged = abs(inertia - new_inertia) <= rel_tol * max(new_inertia, 1e-300)
        labels, inertia = new_labels, new_inertia
        if unchanged or converged:
            break
    return KMeansResult(labels, centers, inertia)


def run_kmeans(points: np.ndarray, params: ClusterParams) -> KMeansResult:
    """Best-inertia Lloyd run over ``params.restarts`` k-means++ starts.

    One RNG stream seeded by ``params.seed`` drives every restart in order,
    so the result with r restarts is never worse than the same-seed result
    with fewer.
    """
    points = np.asarray(points, dtype=np.float64)
    distinct = np.unique(points, axis=0).shape[0]
    if params.k > distinct:
        raise InfeasibleClusteringError(
            f"k={params.k} exceeds the {distinct} distinct points"
        )
    rng = np.random.default_rng(params.seed)
    best: KMeansResult | None = None
    for _ in range(params.restarts):
        init = _kmeanspp_init(points, params.k, rng)
        result = _lloyd(points, init, params.max_iters, params.rel_tol)
        if best is None or result.inertia < best.inertia:
            best = result
    assert best is not None
    return best


def canonical_relabel(labels: np.ndarray) -> np.ndarray:
    """Renumber labels by first occurrence in flat scan order."""
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = uniq[np.argsort(first)]
    lut = np.empty(int(flat.max()) + 1, dtype=np.int32)
    lut[order] = np.arange(order.size, dtype=np.int32)
    return lut[flat].reshape(labels.shape)


def kmeans_cluster(emb: SpectralEmbedding, params: ClusterParams) -> LabelMask:
    """Cluster the spectral embedding into k canonical row-major labels."""
    if params.g != emb.g:
        raise ValueError(f"params.g={params.g} but embedding has g={emb.g}")
    result = run_kmeans(emb.coords, params)
    labels = canonical_relabel(result.labels.reshape(emb.height, emb.width))
    return LabelMask(emb.height, emb.width, labels)
