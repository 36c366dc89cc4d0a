"""Fast leave-one-out cross-validation for ridge on the rotated problem.

Every candidate lambda is scored with the PRESS shortcut: the full-data
residuals and the hat-matrix diagonals give the exact LOOCV error without
refitting, at O(n * r') per lambda. Grid construction (a fixed log-spaced
ladder and a data-driven heuristic) lives here too.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .decomposition import RotatedProblem, recover_beta, rotated_ridge_solution
from .exceptions import DataError, DegenerateProblemError

# Leverages this close to 1 make the PRESS denominator meaningless.
_LEVERAGE_CEILING = 1.0 - 1e-12

# Relative slack when validating that consecutive grid ratios are constant.
_RATIO_TOL = 1e-12


class GridKind(enum.Enum):
    FIXED = "fixed"
    GLMNET = "glmnet"


@dataclass(frozen=True)
class LambdaGrid:
    """Descending, log-spaced candidate penalties.

    values must be strictly positive and strictly descending with a constant
    consecutive ratio (within 1e-12 relative); a single-value grid is
    allowed and trivially satisfies both.
    """

    values: np.ndarray
    kind: GridKind

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size < 1:
            raise DataError("grid must be a nonempty 1-D array")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise DataError("grid values must be positive and finite")
        if values.size > 1:
            if np.any(np.diff(values) >= 0):
                raise DataError("grid values must be strictly descending")
            ratios = values[1:] / values[:-1]
            if np.max(ratios) - np.min(ratios) > _RATIO_TOL * np.max(ratios):
                raise DataError("grid values must be log-spaced")

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class LoocvFit:
    """Scored grid plus the winning penalty and its coefficient vector."""

    grid: LambdaGrid
    cve: np.ndarray
    lambda_star: float
    beta: np.ndarray


def fixed_grid(l: int = 100) -> LambdaGrid:
    """l log-spaced penalties from 1e10 down to 1e-10, endpoints exact."""
    if l < 2:
        raise DataError("fixed_grid requires l >= 2")
    values = np.logspace(10.0, -10.0, l)
    # Endpoints are part of the contract; pin them against logspace rounding.
    values[0] = 1e10
    values[-1] = 1e-10
    return LambdaGrid(values=values, kind=GridKind.FIXED)


def _pin_ratio(values: np.ndarray, kappa: float) -> np.ndarray:
    """Nudge the grid endpoints by ulps until values[-1]/values[0] rounds to
    exactly kappa. Multiplication followed by division is not an exact
    roundtrip in floating point, so the product alone can miss by an ulp."""
    top = values[0]
    for _ in range(8):
        bottom = top * kappa
        down = up = bottom
        for _ in range(8):
            for candidate in (down, up):
                if candidate / top == kappa:
                    values[0] = top
                    values[-1] = candidate
                    return values
            down = math.nextafter(down, 0.0)
            up = math.nextafter(up, math.inf)
        # No representable bottom divides back to kappa for this top.
        top = math.nextafter(top, math.inf)
    raise DegenerateProblemError("could not pin the grid min/max ratio")


def glmnet_grid(
    X_std: np.ndarray,
    y_centered: np.ndarray,
    l: int = 100,
    rescale: bool = True,
) -> LambdaGrid:
    """Data-driven grid in the style of coordinate-descent lasso solvers.

    The top of the grid is lambda_g_max = max_j |x_j'y| / (n * 0.001) (the
    elastic-net entry point at mixing weight 0.001) and the bottom is
    kappa * lambda_g_max with kappa = 1e-4 when n >= p and 1e-2 otherwise.
    The min/max ratio of the returned grid equals kappa exactly.

    With rescale=True (default) each value is converted from the
    per-observation penalty scale to this library's scale via
    lambda = n * (1 - 0.001) * lambda_g; pass rescale=False to keep raw
    values for cross-tool comparison.
    """
    if l < 2:
        raise DataError("glmnet_grid requires l >= 2")
    X_std = np.asarray(X_std, dtype=float)
    y = np.asarray(y_centered, dtype=float).ravel()
    if X_std.ndim != 2 or X_std.shape[0] != y.shape[0]:
        raise DataError("X_std and y_centered have incompatible shapes")
    n, p = X_std.shape
    lam_g_max = float(np.max(np.abs(X_std.T @ y))) / (n * 0.001)
    if lam_g_max <= 0:
        raise DataError("y_centered is orthogonal to every column; grid top is 0")
    kappa = 1e-4 if n >= p else 1e-2
    if rescale:
        top = n * (1.0 - 0.001) * lam_g_max
    else:
        top = lam_g_max
    values = np.logspace(math.log10(top), math.log10(top * kappa), l)
    values[0] = top
    values[-1] = top * kappa
    values = _pin_ratio(values, kappa)
    return LambdaGrid(values=values, kind=GridKind.GLMNET)


def hat_diagonals(U: np.ndarray, s2: np.ndarray, lam: float) -> np.ndarray:
    """Leverages h_i = sum_j u_ij^2 * s_j^2/(s_j^2 + lambda), each in [0, 1)."""
    if lam <= 0:
        raise DataError("lambda must be positive")
    shrink = s2 / (s2 + lam)
    return (U * U) @ shrink


def press(rp: RotatedProblem, y: np.ndarray, lam: float, target: int = 0) -> float:
    """Exact LOOCV mean squared error at one penalty, without refitting.

    CVE = (1/n) * sum_i (e_i / (1 - h_i))^2 with e = y - U (s * alpha).
    y must be the same centered target column the rotated problem was built
    from; the residuals need all n entries, which the rotated cache alone
    does not carry. Cost O(n * r').

    When every direction survived (r' = n, so U is square-orthonormal),
    e and 1 - h are evaluated in the complement form
    e = U (w * U'y), 1 - h = (U*U) w with w = lam/(s^2 + lam): both are then
    sums of positive-weighted terms of size O(lam), instead of differences
    of O(1) quantities that cancel to O(lam), which at small penalties
    would cost ~log10(s_max^2/lam) digits.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != rp.n:
        raise DataError(f"y has length {y.shape[0]}, expected {rp.n}")
    if lam <= 0:
        raise DataError("lambda must be positive")
    if rp.rank == rp.n:
        w = lam / (rp.s2 + lam)
        one_minus_h = (rp.U * rp.U) @ w
        e = rp.U @ (w * (rp.c[:, target] / np.sqrt(rp.s2)))
    else:
        one_minus_h = 1.0 - hat_diagonals(rp.U, rp.s2, lam)
        alpha = rotated_ridge_solution(rp, lam, target)
        e = y - rp.U @ (np.sqrt(rp.s2) * alpha)
    saturated = np.flatnonzero(one_minus_h <= 1.0 - _LEVERAGE_CEILING)
    if saturated.size:
        raise DegenerateProblemError(
            f"leverage saturated at observation(s) {saturated.tolist()}; "
            "LOOCV residuals are undefined there"
        )
    ratios = e / one_minus_h
    return float(ratios @ ratios) / rp.n


def loocv_fit(
    rp: RotatedProblem, y: np.ndarray, grid: LambdaGrid, target: int = 0
) -> LoocvFit:
    """Score every grid value with press and refit at the winner.

    Ties at the minimum go to the largest lambda, i.e. the earliest entry of
    the descending grid, so the selection is deterministic.
    """
    cve = np.empty(len(grid))
    for j, lam in enumerate(grid.values):
        cve[j] = press(rp, y, lam, target)
    best = int(np.argmin(cve))  # argmin takes the first, hence largest, lambda
    lambda_star = float(grid.values[best])
    alpha = rotated_ridge_solution(rp, lambda_star, target)
    return LoocvFit(grid=grid, cve=cve, lambda_star=lambda_star, beta=recover_beta(rp, alpha))
