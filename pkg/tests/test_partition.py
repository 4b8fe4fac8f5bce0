"""Fiedler-vector detection and deterministic k-means clustering."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from eigenseg.errors import InfeasibleClusteringError, SolverError
from eigenseg.partition import (
    ClusterParams,
    SpectralEmbedding,
    canonical_relabel,
    fiedler_binary_mask,
    fiedler_saliency,
    kmeans_cluster,
    orient_fiedler,
    run_kmeans,
    stack_eigenvectors,
)
from eigenseg.spectral import EigenBasis, build_laplacian, smallest_eigenpairs

from conftest import two_block_toy_graph


def _basis_with_v2(v2: np.ndarray) -> EigenBasis:
    """Fabricate a basis whose second column is (normalized) v2."""
    n = v2.size
    v2 = v2 / np.linalg.norm(v2)
    v1 = np.full(n, 1.0 / np.sqrt(n))
    v1 -= (v1 @ v2) * v2
    v1 /= np.linalg.norm(v1)
    vecs = np.stack([v1, v2], axis=1)
    return EigenBasis(np.array([0.0, 0.5]), vecs, np.zeros(2))


class TestFiedler:
    def test_minority_positive_saliency(self):
        basis = _basis_with_v2(np.array([-1.0, -1.0, -1.0, 2.0]))
        sal = fiedler_saliency(basis, 2, 2)
        assert sal.values[1, 1] == 1.0
        assert np.all(sal.values.ravel()[:3] == 0.0)

    def test_negated_input_same_saliency(self):
        v = np.array([-0.8, 0.2, -0.3, -0.1, 0.9, -0.5])
        a = fiedler_saliency(_basis_with_v2(v), 2, 3)
        b = fiedler_saliency(_basis_with_v2(-v), 2, 3)
        assert np.array_equal(a.values, b.values)

    def test_orientation_flips_majority_positive(self):
        v = np.array([1.0, 1.0, 1.0, -2.0])
        assert np.array_equal(orient_fiedler(v), -v)

    def test_orientation_tie_pixel0_side_positive(self):
        v = np.array([-0.5, 0.3, -0.1, 0.7])
        oriented = orient_fiedler(v)
        assert oriented[0] > 0  # tie between sides: pixel 0's side becomes positive
        assert np.array_equal(oriented, -v)

    def test_binary_mask_thresholds_oriented_vector(self):
        basis = _basis_with_v2(np.array([-0.5, -0.3, -0.1, 0.7]))
        mask = fiedler_binary_mask(basis, 2, 2)
        assert mask.labels.ravel().tolist() == [0, 0, 0, 1]

    def test_binary_mask_infinite_tau_all_background(self):
        basis = _basis_with_v2(np.array([-0.5, -0.3, -0.1, 0.7]))
        mask = fiedler_binary_mask(basis, 2, 2, tau=np.inf)
        assert mask.labels.max() == 0

    def test_two_block_toy_graph(self):
        g, block = two_block_toy_graph()
        basis = smallest_eigenpairs(build_laplacian(g), 2)
        sal = fiedler_saliency(basis, 4, 4)
        top3 = np.argsort(sal.values.ravel())[-3:]
        assert sorted(top3.tolist()) == block
        mask = fiedler_binary_mask(basis, 4, 4)
        assert sorted(np.flatnonzero(mask.labels.ravel()).tolist()) == block

    def test_grid_mismatch_rejected(self):
        basis = _basis_with_v2(np.array([-1.0, 1.0, 0.0, 0.0]))
        with pytest.raises(ValueError):
            fiedler_saliency(basis, 3, 2)

    def test_needs_two_eigenvectors(self):
        basis = EigenBasis(np.array([0.0]), np.ones((4, 1)) / 2.0, np.zeros(1))
        with pytest.raises(ValueError):
            fiedler_binary_mask(basis, 2, 2)


class TestStack:
    def test_single_vector(self):
        basis = _basis_with_v2(np.array([-1.0, 1.0, 0.5, -0.5]))
        emb = stack_eigenvectors(basis, 1, 2, 2)
        assert np.array_equal(emb.coords[:, 0], basis.eigenvectors[:, 0])

    def test_full_rows(self):
        basis = _basis_with_v2(np.array([-1.0, 1.0, 0.5, -0.5]))
        emb = stack_eigenvectors(basis, 2, 2, 2)
        assert np.array_equal(emb.coords, basis.eigenvectors)

    def test_g_too_large(self):
        basis = _basis_with_v2(np.array([-1.0, 1.0, 0.5, -0.5]))
        with pytest.raises(ValueError):
            stack_eigenvectors(basis, 3, 2, 2)

    def test_descending_eigenvalues_rejected_by_validation(self):
        basis = EigenBasis(np.array([0.5, 0.0]), np.eye(4)[:, :2], np.zeros(2))
        with pytest.raises(SolverError):
            basis.validate()


def _oracle_lloyd(points: np.ndarray, centers: np.ndarray) -> float:
    """Plain Lloyd iteration, independent of the library implementation."""
    centers = centers.copy()
    for _ in range(200):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        new_centers = centers.copy()
        for c in range(centers.shape[0]):
            chosen = points[labels == c]
            if chosen.size:
                new_centers[c] = chosen.mean(axis=0)
        if np.allclose(new_centers, centers, atol=0, rtol=0):
            break
        centers = new_centers
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).sum())


def _blob_points(rng, per_blob=(14, 13, 13)):
    centers = np.array([[0.0, 0.0], [1.5, 0.0], [0.0, 1.5]])
    points = []
    membership = []
    for b, count in enumerate(per_blob):
        points.append(centers[b] + 0.01 * rng.standard_normal((count, 2)))
        membership += [b] * count
    return np.concatenate(points), np.array(membership)


class TestKMeans:
    def test_two_separated_groups(self):
        pts = np.concatenate([np.zeros((5, 2)), np.ones((7, 2)) * 4.0])
        pts += 0.01 * np.arange(12)[:, None]  # keep points distinct
        emb = SpectralEmbedding(3, 4, pts)
        mask = kmeans_cluster(emb, ClusterParams(k=2, g=2, seed=0))
        labels = mask.labels.ravel()
        assert labels[:5].tolist() == [0] * 5
        assert labels[5:].tolist() == [1] * 7

    def test_k1_all_zero(self):
        emb = SpectralEmbedding(2, 2, np.arange(8, dtype=float).reshape(4, 2))
        mask = kmeans_cluster(emb, ClusterParams(k=1, g=2, seed=0))
        assert mask.labels.max() == 0

    def test_blobs_match_exhaustive_optimum(self, rng):
        points, membership = _blob_points(rng)
        result = run_kmeans(points, ClusterParams(k=3, g=2, seed=0))
        # exhaustive oracle: Lloyd from every 3-subset of the points
        best = min(
            _oracle_lloyd(points, points[list(combo)])
            for combo in itertools.combinations(range(points.shape[0]), 3)
        )
        assert abs(result.inertia - best) < 1e-9
        # partition equals blob membership up to label naming
        canon = canonical_relabel(result.labels)
        canon_truth = canonical_relabel(membership)
        assert np.array_equal(canon, canon_truth)

    def test_sign_flip_invariance(self, rng):
        coords = rng.standard_normal((24, 3))
        emb = SpectralEmbedding(4, 6, coords)
        flipped = coords.copy()
        flipped[:, 1] = -flipped[:, 1]
        emb_flip = SpectralEmbedding(4, 6, flipped)
        params = ClusterParams(k=4, g=3, seed=9)
        a = kmeans_cluster(emb, params)
        b = kmeans_cluster(emb_flip, params)
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_restart_monotonicity(self, rng):
        points = rng.standard_normal((60, 2))
        single = run_kmeans(points, ClusterParams(k=5, g=2, seed=4, restarts=1))
        multi = run_kmeans(points, ClusterParams(k=5, g=2, seed=4, restarts=10))
        assert multi.inertia <= single.inertia + 1e-12

    def test_deterministic(self, rng):
        coords = rng.standard_normal((30, 4))
        emb = SpectralEmbedding(5, 6, coords)
        params = ClusterParams(k=6, g=4, seed=2)
        a = kmeans_cluster(emb, params)
        b = kmeans_cluster(emb, params)
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_infeasible_k(self):
        pts = np.tile(np.array([[1.0, 2.0], [3.0, 4.0]]), (3, 1))  # 2 distinct
        emb = SpectralEmbedding(2, 3, pts)
        with pytest.raises(InfeasibleClusteringError):
            kmeans_cluster(emb, ClusterParams(k=3, g=2, seed=0))

    def test_canonical_first_occurrence_numbering(self):
        labels = np.array([[5, 5, 2], [2, 9, 5]])
        out = canonical_relabel(labels)
        assert out.tolist() == [[0, 0, 1], [1, 2, 0]]
