"""Normalized graph Laplacian, smallest eigenpairs, and the normalized-cut cost.

The Laplacian is applied as the operator x -> x - D^{-1/2} W D^{-1/2} x with
degrees guarded below by ``eps_degree``, which turns isolated nodes into fixed
points (eigenpair (1, e_i)) instead of NaNs. Its spectrum lies in [0, 2].

Two solver paths return the m algebraically smallest eigenpairs:

* dense: assemble the full symmetric matrix and call LAPACK, used up to
  ``dense_cutoff`` nodes;
* Lanczos with full reorthogonalization on 2I - L, whose largest eigenpairs
  are the smallest of L. This avoids any shift-invert factorization, which
  near-dense thresholded cosine graphs can make badly conditioned.

Both paths canonicalize eigenvector signs (largest-magnitude coordinate made
positive, ties to the lowest index) so downstream outputs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .affinity import AffinityGraph, degree_vector
from .errors import DegeneratePartitionError, SolverError

DEFAULT_EPS_DEGREE = 1e-12
DEFAULT_EIG_TOL = 1e-6
DEFAULT_DENSE_CUTOFF = 2000
MATVEC_BUDGET_PER_PAIR = 50

EIGENVALUE_FLOOR = -1e-7
EIGENVALUE_CEIL = 2.0 + 1e-7


class NormalizedLaplacian:
    """Matrix-free symmetric positive semi-definite Laplacian operator."""

    def __init__(self, g: AffinityGraph, eps_degree: float = DEFAULT_EPS_DEGREE):
        if eps_degree <= 0.0:
            raise ValueError("eps_degree must be positive")
        self.num_nodes = g.num_nodes
        self.epsilon_degree = float(eps_degree)
        deg = degree_vector(g)
        self.inv_sqrt_degrees = 1.0 / np.sqrt(np.maximum(deg, eps_degree))
        self._upper = (g.rows, g.cols, g.weights)
        both_rows = np.concatenate([g.rows, g.cols])
        both_cols = np.concatenate([g.cols, g.rows])
        both_weights = np.concatenate([g.weights, g.weights])
        self._adjacency = sp.coo_matrix(
            (both_weights, (both_rows, both_cols)),
            shape=(g.num_nodes, g.num_nodes),
        ).tocsr()

    def apply(self, x: np.ndarray) -> np.ndarray:
        """L @ x for a vector or a column-stacked block of vectors."""
        scale = self.inv_sqrt_degrees if x.ndim == 1 else self.inv_sqrt_degrees[:, None]
        return x - scale * (self._adjacency @ (scale * x))

    def apply_complement(self, x: np.ndarray) -> np.ndarray:
        """(2I - L) @ x; spectrum-reversing companion used by the Lanczos path."""
        scale = self.inv_sqrt_degrees if x.ndim == 1 else self.inv_sqrt_degrees[:, None]
        return x + scale * (self._adjacency @ (scale * x))

    def to_dense(self) -> np.ndarray:
        """Exactly symmetric dense assembly (upper triangle mirrored)."""
        rows, cols, weights = self._upper
        scaled = weights * self.inv_sqrt_degrees[rows] * self.inv_sqrt_degrees[cols]
        dense = np.zeros((self.num_nodes, self.num_nodes))
        dense[rows, cols] = -scaled
        dense[cols, rows] = -scaled
        np.fill_diagonal(dense, 1.0)
        return dense


@dataclass(frozen=True)
class EigenBasis:
    """Ascending eigenvalues with column-stacked unit eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual_norms: np.ndarray

    @property
    def m(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def num_nodes(self) -> int:
        return int(self.eigenvectors.shape[0])

    def validate(self, tol: float = DEFAULT_EIG_TOL) -> None:
        lam = self.eigenvalues
        if (np.diff(lam) < 0).any():
            raise SolverError("eigenvalues are not sorted ascending")
        if lam.min() < EIGENVALUE_FLOOR or lam.max() > EIGENVALUE_CEIL:
            raise SolverError(
                f"eigenvalues outside [0, 2] bounds: [{lam.min()}, {lam.max()}]"
            )
        gram = self.eigenvectors.T @ self.eigenvectors
        if np.abs(gram - np.eye(self.m)).max() > 1e-6:
            raise SolverError("eigenvectors are not orthonormal to 1e-6")
        if self.residual_norms.max() > tol:
            raise SolverError(
                f"residual {self.residual_norms.max():.3e} above tolerance {tol:.0e}",
                residuals=self.residual_norms,
            )


@dataclass(frozen=True)
class Bipartition:
    """Two-way node split; both sides must be non-empty."""

    side_a: frozenset
    num_nodes: int

    def __post_init__(self):
        if not self.side_a:
            raise DegeneratePartitionError("side A is empty")
        if len(self.side_a) >= self.num_nodes:
            raise DegeneratePartitionError("side B is empty")
        if min(self.side_a) < 0 or max(self.side_a) >= self.num_nodes:
            raise ValueError("node index out of range")

    @property
    def side_b(self) -> frozenset:
        return frozenset(range(self.num_nodes)) - self.side_a

    def membership(self) -> np.ndarray:
        mask = np.zeros(self.num_nodes, dtype=bool)
        mask[np.fromiter(self.side_a, dtype=np.int64, count=len(self.side_a))] = True
        return mask


def build_laplacian(
    g: AffinityGraph, eps_degree: float = DEFAULT_EPS_DEGREE
) -> NormalizedLaplacian:
    return NormalizedLaplacian(g, eps_degree)


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude coordinate is positive."""
    out = vectors.copy()
    anchors = np.abs(out).argmax(axis=0)
    for col, row in enumerate(anchors):
        if out[row, col] < 0:
            out[:, col] = -out[:, col]
    return out


def _finish_basis(
    lap: NormalizedLaplacian, lam: np.ndarray, vecs: np.ndarray, tol: float
) -> EigenBasis:
    vecs = _canonical_signs(np.ascontiguousarray(vecs))
    residuals = np.linalg.norm(lap.apply(vecs) - vecs * lam[None, :], axis=0)
    basis = EigenBasis(lam.copy(), vecs, residuals)
    basis.validate(tol)
    return basis


def _dense_smallest(lap: NormalizedLaplacian, m: int, tol: float) -> EigenBasis:
    lam, vecs = np.linalg.eigh(lap.to_dense())
    return _finish_basis(lap, lam[:m], vecs[:, :m], tol)


def _lanczos_smallest(
    lap: NormalizedLaplacian, m: int, tol: float, seed: int
) -> EigenBasis:
    s = lap.num_nodes
    budget = MATVEC_BUDGET_PER_PAIR * m
    rng = np.random.default_rng(seed)

    capacity = min(s, max(2 * m + 16, 32))
    basis_vectors = np.empty((s, capacity))
    start = rng.standard_normal(s)
    basis_vectors[:, 0] = start / np.linalg.norm(start)
    alphas: list[float] = []
    betas: list[float] = []
    matvecs = 0
    breakdown = 1e-12

    def grow() -> None:
        nonlocal basis_vectors, capacity
        capacity = min(s, capacity * 2)
        grown = np.empty((s, capacity))
        grown[:, : basis_vectors.shape[1]] = basis_vectors
        basis_vectors = grown

    def ritz(t: int) -> tuple[np.ndarray, np.ndarray]:
        tri = np.diag(alphas)
        if t > 1:
            off = np.array(betas[: t - 1])
            tri += np.diag(off, 1) + np.diag(off, -1)
        return np.linalg.eigh(tri)

    def extract(t: int) -> EigenBasis:
        theta, coeffs = ritz(t)
        top = np.argsort(theta)[-m:]  # largest of 2I - L = smallest of L
        lam = 2.0 - theta[top]
        vecs = basis_vectors[:, :t] @ coeffs[:, top]
        vecs /= np.linalg.norm(vecs, axis=0)[None, :]
        order = np.argsort(lam, kind="stable")
        return _finish_basis(lap, lam[order], vecs[:, order], tol)

    t = 0
    while True:
        q = basis_vectors[:, t]
        z = lap.apply_complement(q)
        matvecs += 1
        alphas.append(float(q @ z))
        t = len(alphas)
        # full reorthogonalization (two passes) subsumes the alpha/beta updates
        block = basis_vectors[:, :t]
        z -= block @ (block.T @ z)
        z -= block @ (block.T @ z)
        beta = float(np.linalg.norm(z))

        if t == s:
            return extract(t)

        if t >= m:
            theta, coeffs = ritz(t)
            top = np.argsort(theta)[-m:]
            estimates = np.abs(beta * coeffs[-1, top])
            if estimates.max() <= 0.5 * tol:
                try:
                    return extract(t)
                except SolverError:
                    if matvecs >= budget:
                        raise
                    # estimate was optimistic; keep iterating within budget

        if matvecs >= budget:
            if t < m:
                _raise_budget(None)
            try:
                return extract(t)
            except SolverError as exc:
                _raise_budget(exc.residuals)

        if t == capacity:
            grow()
        if beta <= breakdown:
            # invariant subspace exhausted; restart the chain on a fresh
            # random direction orthogonal to everything found so far
            fresh = rng.standard_normal(s)
            block = basis_vectors[:, :t]
            fresh -= block @ (block.T @ fresh)
            fresh -= block @ (block.T @ fresh)
            norm = float(np.linalg.norm(fresh))
            if norm <= breakdown:
                return extract(t)
            basis_vectors[:, t] = fresh / norm
            betas.append(0.0)
        else:
            basis_vectors[:, t] = z / beta
            betas.append(beta)


def _raise_budget(residuals) -> EigenBasis:
    raise SolverError(
        "eigensolver did not converge within its matvec budget",
        residuals=residuals,
    )


def smallest_eigenpairs(
    lap: NormalizedLaplacian,
    m: int,
    tol: float = DEFAULT_EIG_TOL,
    seed: int = 0,
    dense_cutoff: int = DEFAULT_DENSE_CUTOFF,
) -> EigenBasis:
    """The m algebraically smallest eigenpairs of the normalized Laplacian.

    Deterministic for a fixed (graph, m, tol, seed); raises SolverError with
    the achieved residuals if the iterative path cannot reach ``tol``.
    """
    if not 2 <= m <= lap.num_nodes:
        raise ValueError(f"need 2 <= m <= {lap.num_nodes}, got {m}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if lap.num_nodes <= dense_cutoff:
        return _dense_smallest(lap, m, tol)
    return _lanczos_smallest(lap, m, tol, seed)


def ncut_cost(g: AffinityGraph, p: Bipartition) -> float:
    """Normalized-cut cost: cut(A,B)/assoc(A,P) + cut(A,B)/assoc(B,P)."""
    if p.num_nodes != g.num_nodes:
        raise ValueError("partition and graph node counts differ")
    mask = p.membership()
    crossing = mask[g.rows] != mask[g.cols]
    cut = float(g.weights[crossing].sum())
    deg = degree_vector(g)
    assoc_a = float(deg[mask].sum())
    assoc_b = float(deg[~mask].sum())
    if assoc_a <= 0.0 or assoc_b <= 0.0:
        raise DegeneratePartitionError(
            "a partition side has zero total association"
        )
    return cut / assoc_a + cut / assoc_b
