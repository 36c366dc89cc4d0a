"""Dataset handling: CSV ingestion, standardization, prediction, and R^2.

Everything downstream of this module consumes standardized predictors
(zero mean, unit sample standard deviation) and centered targets; the
intercept is recovered when mapping coefficients back to the raw scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .exceptions import DataError


class Method(Enum):
    EM = "em"
    LOOCV_FIXED = "loocv-fixed"
    LOOCV_GLMNET = "loocv-glmnet"


@dataclass(frozen=True)
class Dataset:
    """Raw design matrix X (n x p) and targets Y (n x q, q >= 1)."""

    X: np.ndarray
    Y: np.ndarray
    column_names: list[str] | None = None
    target_names: list[str] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2:
            raise DataError("X must be 2-D and Y 1-D or 2-D")
        if X.shape[0] != Y.shape[0]:
            raise DataError(
                f"X has {X.shape[0]} rows but Y has {Y.shape[0]}"
            )
        if X.shape[0] < 1 or X.shape[1] < 1 or Y.shape[1] < 1:
            raise DataError("need n >= 1, p >= 1, q >= 1")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
            raise DataError("non-finite entries in X or Y")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class StandardizedDataset:
    """Standardized predictors and centered targets with the statistics
    needed to undo the transform.

    ``kept_columns`` indexes into the original p columns; columns whose
    sample standard deviation is exactly zero are dropped.
    """

    X_std: np.ndarray
    Y_centered: np.ndarray
    col_means: np.ndarray
    col_sds: np.ndarray
    y_means: np.ndarray
    kept_columns: np.ndarray

    @property
    def n(self) -> int:
        return self.X_std.shape[0]

    @property
    def p_kept(self) -> int:
        return self.X_std.shape[1]

    @property
    def p_original(self) -> int:
        return self.col_means.shape[0]

    @property
    def q(self) -> int:
        return self.Y_centered.shape[1]


@dataclass(frozen=True)
class FitResult:
    """A fitted model on the raw data scale.

    ``lambda_`` (and the EM-only diagnostics) hold one entry per target.
    The invariant lambda_[t] == 1/tau2[t] holds whenever tau2 is present.
    """

    beta_raw: np.ndarray
    intercepts: np.ndarray
    lambda_: np.ndarray
    method: Method
    tau2: np.ndarray | None = None
    sigma2: np.ndarray | None = None
    iterations: np.ndarray | None = None
    cve_curves: np.ndarray | None = None
    grid: np.ndarray | None = None
    grid_kind: str | None = None

    def __post_init__(self):
        beta = np.asarray(self.beta_raw, dtype=float)
        if beta.ndim == 1:
            beta = beta[:, None]
        object.__setattr__(self, "beta_raw", beta)
        object.__setattr__(
            self, "intercepts", np.atleast_1d(np.asarray(self.intercepts, dtype=float))
        )
        object.__setattr__(
            self, "lambda_", np.atleast_1d(np.asarray(self.lambda_, dtype=float))
        )
        if self.tau2 is not None:
            tau2 = np.atleast_1d(np.asarray(self.tau2, dtype=float))
            object.__setattr__(self, "tau2", tau2)
            rel = np.abs(self.lambda_ * tau2 - 1.0)
            if np.any(rel > 1e-12):
                raise DataError("lambda must equal 1/tau2")


def _parse_target_spec(target_spec, header: list[str]) -> list[int]:
    """Resolve a target spec (names, comma-joined names, or 'last k') to
    column indices within ``header``."""
    if isinstance(target_spec, str):
        spec = target_spec.strip()
        low = spec.lower()
        if low.startswith("last"):
            rest = low[4:].strip()
            k = 1 if rest == "" else int(rest.split()[0])
            if not 1 <= k <= len(header):
                raise DataError(f"'last {k}' out of range for {len(header)} columns")
            return list(range(len(header) - k, len(header)))
        names = [s.strip() for s in spec.split(",") if s.strip()]
    else:
        names = list(target_spec)
    idx = []
    for name in names:
        if name not in header:
            raise DataError(f"target column {name!r} not found in header")
        idx.append(header.index(name))
    if not idx:
        raise DataError("empty target spec")
    return idx


def load_csv(path, target_spec) -> Dataset:
    """Load a numeric CSV (one header row) into a Dataset.

    ``target_spec`` is either an iterable of column names, a comma-joined
    string of names, or ``"last k"`` selecting the trailing k columns.
    Non-target columns become X in file order.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}"
                )
            vals = []
            for j, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {cell!r} at row {lineno}, "
                        f"column {j + 1} ({header[j]})"
                    ) from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=float)
    t_idx = _parse_target_spec(target_spec, header)
    x_idx = [j for j in range(len(header)) if j not in t_idx]
    if not x_idx:
        raise DataError("all columns selected as targets; no predictors left")
    return Dataset(
        X=table[:, x_idx],
        Y=table[:, t_idx],
        column_names=[header[j] for j in x_idx],
        target_names=[header[j] for j in t_idx],
    )


def standardize(d: Dataset) -> StandardizedDataset:
    """Center and scale each column of X to sample sd 1 (denominator n-1),
    center each target; zero-sd columns are dropped and recorded."""
    if d.n < 2:
        raise DataError("standardize needs n >= 2")
    col_means = d.X.mean(axis=0)
    col_sds = d.X.std(axis=0, ddof=1)
    kept = np.flatnonzero(col_sds > 0.0)
    if kept.size == 0:
        raise DataError("all predictor columns have zero variance")
    X_std = (d.X[:, kept] - col_means[kept]) / col_sds[kept]
    y_means = d.Y.mean(axis=0)
    return StandardizedDataset(
        X_std=X_std,
        Y_centered=d.Y - y_means,
        col_means=col_means,
        col_sds=col_sds,
        y_means=y_means,
        kept_columns=kept,
    )


def destandardize(beta_std: np.ndarray, s: StandardizedDataset):
    """Map coefficients fit on X_std back to the raw scale.

    Returns ``(beta_raw, intercepts)`` with beta_raw of shape (p, q);
    dropped columns get coefficient 0 and the intercept absorbs the
    column means: intercept = y_mean - sum_j beta_raw[j] * col_means[j].
    """
    beta_std = np.asarray(beta_std, dtype=float)
    if beta_std.ndim == 1:
        beta_std = beta_std[:, None]
    if beta_std.shape[0] != s.p_kept:
        raise DataError(
            f"beta_std has {beta_std.shape[0]} rows, expected {s.p_kept}"
        )
    q = beta_std.shape[1]
    beta_raw = np.zeros((s.p_original, q))
    beta_raw[s.kept_columns] = beta_std / s.col_sds[s.kept_columns, None]
    intercepts = s.y_means[:q] - s.col_means @ beta_raw
    return beta_raw, intercepts


def predict(f: FitResult, X_new: np.ndarray) -> np.ndarray:
    """Predict targets for raw-scale rows: X_new @ beta_raw + intercepts."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[None, :]
    if X_new.shape[1] != f.beta_raw.shape[0]:
        raise DataError(
            f"X_new has {X_new.shape[1]} columns, model expects {f.beta_raw.shape[0]}"
        )
    return X_new @ f.beta_raw + f.intercepts


def r_squared(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """1 - SSE/SST with SST around the mean of y_true; may be negative."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise DataError("y_true and y_pred must have equal length")
    if y_true.size < 2:
        raise DataError("r_squared needs m >= 2")
    sst = float(np.sum((y_true - y_true.mean()) ** 2))
    if sst == 0.0:
        raise DataError("y_true has zero variance")
    sse = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - sse / sst
