"""Task similarity and spectral bipartitioning of clusters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .pauli import PaddedTaskSet

SIGMA_FLOOR = 1e-15
KERNEL_FLOOR = float(np.finfo(float).tiny)


class ClusteringError(ValueError):
    pass


class TooFewMembers(ClusteringError):
    pass


class UnsplittableCluster(ClusteringError):
    pass


class NotSymmetric(ClusteringError):
    pass


@dataclass(frozen=True)
class SimilarityMatrix:
    values: np.ndarray
    sigma: float
    unsplittable: bool = False

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Bipartition:
    group_a: tuple[int, ...]
    group_b: tuple[int, ...]

    def __post_init__(self):
        a, b = set(self.group_a), set(self.group_b)
        if not a or not b or a & b:
            raise ClusteringError(f"invalid bipartition {self.group_a} | {self.group_b}")

    def as_sets(self) -> frozenset[frozenset[int]]:
        return frozenset((frozenset(self.group_a), frozenset(self.group_b)))


def distance_matrix(p: PaddedTaskSet, members: Sequence[int] | None = None) -> np.ndarray:
    """Pairwise l1 distances between padded coefficient rows."""
    members = range(p.n_tasks) if members is None else list(members)
    rows = p.coeff_vectors[list(members)]
    if len(rows) < 2:
        raise TooFewMembers("distance matrix needs at least two members")
    return np.abs(rows[:, None, :] - rows[None, :, :]).sum(axis=2)


def rbf_kernel(D: np.ndarray) -> SimilarityMatrix:
    """Gaussian kernel with bandwidth set to the median off-diagonal distance."""
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    upper = D[np.triu_indices(n, k=1)]
    sigma = float(np.median(upper)) if upper.size else 0.0
    if sigma < SIGMA_FLOOR:
        # median can vanish while some distances are nonzero; fall back to the largest
        sigma = float(upper.max()) if upper.size else 0.0
    if sigma < SIGMA_FLOOR:
        return SimilarityMatrix(np.ones((n, n)), sigma, unsplittable=True)
    # floor keeps far pairs strictly positive instead of underflowing to 0
    S = np.maximum(np.exp(-(D**2) / (2.0 * sigma**2)), KERNEL_FLOOR)
    np.fill_diagonal(S, 1.0)
    return SimilarityMatrix(S, sigma)


def jacobi_eigensolve(M: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi rotations. Returns ascending eigenvalues and column eigenvectors."""
    A = np.array(M, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-12, rtol=0):
        raise NotSymmetric("Jacobi eigensolve needs a symmetric matrix")
    A = 0.5 * (A + A.T)
    V = np.eye(n)

    offdiag = ~np.eye(n, dtype=bool)

    def off(a):
        return np.sqrt(np.sum(a[offdiag] ** 2))

    for _ in range(max_sweeps):
        if off(A) < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta**2 + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t**2 + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) Givens rotation
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def normalized_laplacian(S: np.ndarray) -> np.ndarray:
    deg = S.sum(axis=1)
    d = 1.0 / np.sqrt(deg)
    return np.eye(len(S)) - d[:, None] * S * d[None, :]


def _kmeans2(X: np.ndarray, max_iter: int = 100) -> np.ndarray:
    """Two-means with the farthest pair of points as initial centers."""
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    i, j = np.unravel_index(np.argmax(d2), d2.shape)
    centers = X[[i, j]].copy()
    labels = np.full(len(X), -1)
    for _ in range(max_iter):
        dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(dist, axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        for k in (0, 1):
            if np.any(labels == k):
                centers[k] = X[labels == k].mean(axis=0)
    return labels


def spectral_bipartition(S: SimilarityMatrix | np.ndarray) -> Bipartition:
    if isinstance(S, SimilarityMatrix):
        if S.unsplittable:
            raise UnsplittableCluster("all members identical")
        S = S.values
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    if n < 2:
        raise TooFewMembers("bipartition needs at least two members")
    if n == 2:
        return Bipartition((0,), (1,))
    _, vecs = jacobi_eigensolve(normalized_laplacian(S))
    emb = vecs[:, :2]
    norms = np.linalg.norm(emb, axis=1)
    emb = emb / np.where(norms > 0, norms, 1.0)[:, None]
    labels = _kmeans2(emb)
    if labels.min() == labels.max():
        centroid = emb.mean(axis=0)
        far = int(np.argmax(((emb - centroid) ** 2).sum(axis=1)))
        labels = np.zeros(n, dtype=int)
        labels[far] = 1
    a = tuple(int(k) for k in np.flatnonzero(labels == labels[0]))
    b = tuple(int(k) for k in np.flatnonzero(labels != labels[0]))
    return Bipartition(a, b)


def normalized_cut(S: np.ndarray, group: Sequence[int]) -> float:
    """Ncut(A, B) = cut/vol(A) + cut/vol(B)."""
    S = np.asarray(S, dtype=float)
    mask = np.zeros(len(S), dtype=bool)
    mask[list(group)] = True
    cut = S[mask][:, ~mask].sum()
    return float(cut / S[mask].sum() + cut / S[~mask].sum())
