"""Compact SVD via the smaller Gram matrix, and the rotated ridge problem.

The decomposition is always obtained from a symmetric eigendecomposition of
X'X (n >= p) or XX' (n < p), never a general SVD, so the preprocessing cost
is O(max(n,p) * min(n,p)^2). Both solvers share the resulting cache: squared
singular values s^2, rotated targets c = s * (U'y), and the factors U, V.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError

# Multiples of ulp(s_max) below which a singular value counts as zero.
_DROP_SAFETY = 100.0


@dataclass(frozen=True)
class CompactSvd:
    """X = U diag(s) V' restricted to the r' singular values above the drop
    threshold; s is descending, U (n x r') and V (p x r') semi-orthonormal."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    n: int
    p: int

    @property
    def rank(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class RotatedProblem:
    """The r'-dimensional equivalent ridge problem plus what LOOCV needs.

    c[:, t] = s * (U' y_t); y_sq_norms[t] = ||y_t||^2. n_dropped_directions
    counts the p - r' coefficient directions with zero singular value.
    """

    s2: np.ndarray
    c: np.ndarray
    y_sq_norms: np.ndarray
    U: np.ndarray
    V: np.ndarray
    n: int
    p: int

    @property
    def rank(self) -> int:
        return self.s2.shape[0]

    @property
    def n_dropped_directions(self) -> int:
        return self.p - self.rank

    @property
    def q(self) -> int:
        return self.c.shape[1]


def _gram_eig_descending(G: np.ndarray):
    """Eigendecompose a symmetric Gram matrix; return (eigvals, eigvecs)
    sorted by descending eigenvalue with ties broken by original index."""
    evals, evecs = np.linalg.eigh(G)
    # eigh returns ascending order; a stable argsort on the negated values
    # keeps equal eigenvalues in original-index order.
    order = np.argsort(-evals, kind="stable")
    return evals[order], evecs[:, order]


def compact_svd(X: np.ndarray) -> CompactSvd:
    """Compact SVD of X through the smaller Gram matrix.

    For n >= p: X'X = V S^2 V', then U = X V S^-1; for n < p the transposed
    route. Negative eigenvalues are clamped to zero and singular values at or
    below 100 * max(n,p) * ulp(s_max) are dropped; an all-zero X yields rank
    zero rather than an error. V columns are signed so their first nonzero
    entry is positive (U flipped in tandem to preserve the product).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("X must be 2-D")
    n, p = X.shape
    if n < 1 or p < 1:
        raise DataError("need n >= 1 and p >= 1")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite entries in X")

    if n >= p:
        evals, V = _gram_eig_descending(X.T @ X)
    else:
        evals, U = _gram_eig_descending(X @ X.T)
    evals = np.maximum(evals, 0.0)
    s = np.sqrt(evals)

    s_max = s[0] if s.size else 0.0
    tol = _DROP_SAFETY * max(n, p) * np.spacing(s_max)
    keep = s > tol
    s = s[keep]
    r = s.shape[0]

    if n >= p:
        V = V[:, keep]
        U = (X @ V) / s if r else np.zeros((n, 0))
    else:
        U = U[:, keep]
        V = (X.T @ U) / s if r else np.zeros((p, 0))

    # Deterministic sign convention keyed to V.
    for j in range(r):
        col = V[:, j]
        nz = np.flatnonzero(col)
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
            U[:, j] = -U[:, j]

    return CompactSvd(U=U, s=s, V=V, n=n, p=p)


def rotate(svd: CompactSvd, Y: np.ndarray) -> RotatedProblem:
    """Build the rotated problem: c_t = s * (U' y_t), y_sq_norms[t] = y_t'y_t."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != svd.n:
        raise DataError(f"Y has {Y.shape[0]} rows, expected {svd.n}")
    c = svd.s[:, None] * (svd.U.T @ Y)
    y_sq_norms = np.einsum("ij,ij->j", Y, Y)
    return RotatedProblem(
        s2=svd.s**2,
        c=c,
        y_sq_norms=y_sq_norms,
        U=svd.U,
        V=svd.V,
        n=svd.n,
        p=svd.p,
    )


def rotated_ridge_solution(rp: RotatedProblem, lam: float, target: int = 0) -> np.ndarray:
    """alpha_j = c_{j,t} / (s_j^2 + lambda), the O(r') ridge solve in the
    rotated coordinates (lambda = 1/tau^2 for the EM caller)."""
    if lam <= 0:
        raise DataError("lambda must be positive")
    return rp.c[:, target] / (rp.s2 + lam)


def recover_beta(svd_or_rp, alpha: np.ndarray) -> np.ndarray:
    """Map a rotated solution back: beta = V @ alpha (O(p r'))."""
    V = svd_or_rp.V
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape[0] != V.shape[1]:
        raise DataError(f"alpha has length {alpha.shape[0]}, expected {V.shape[1]}")
    return V @ alpha
