"""Arm-specific L1-penalised linear outcome regression with K-fold CV.

The objective is the un-halved one, ``sum_i (y_i - b0 - x_i'a)^2 + lam * sum_j pf_j |a_j|``,
solved by cyclic coordinate descent on standardised columns (mean 0, population
standard deviation 1). Coefficients are reported on the original scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._cd import cd_gram
from ._validate import as_matrix, as_sample
from .errors import DegenerateDataError, SchemaError

TOL = 1e-7
MAX_SWEEPS = 100_000
LAMBDA_DECADES = 2.0


@dataclass
class LassoFit:
    coefficients: np.ndarray
    intercept: float
    lam: float
    arm: int | None = None
    names: tuple[str, ...] = ()
    converged: bool = True
    sweeps: int = 0
    # standardisation used internally, kept for KKT diagnostics
    x_mean: np.ndarray = field(default=None, repr=False)
    x_scale: np.ndarray = field(default=None, repr=False)
    history: np.ndarray | None = field(default=None, repr=False)

    @property
    def nonzero(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients != 0.0)

    @property
    def nonzero_set(self) -> list:
        idx = self.nonzero
        if self.names:
            return [self.names[j] for j in idx]
        return [int(j) for j in idx]


@dataclass
class CvReport:
    lambda_path: np.ndarray
    cv_error: np.ndarray
    cv_se: np.ndarray
    chosen_lambda: float
    chosen_index: int
    rule: str = "min"
    folds: int = 10


def _prepare(x, y, intercept):
    x = as_matrix(x, "x_sub")
    y = as_sample(y, "y_sub")
    if x.shape[0] != y.size:
        raise SchemaError(f"x_sub has {x.shape[0]} rows, y_sub has {y.size}")
    if y.size < 2:
        raise DegenerateDataError("outcome model needs at least 2 units in the arm")
    if intercept:
        xm = x.mean(axis=0)
        ym = float(y.mean())
    else:
        xm = np.zeros(x.shape[1])
        ym = 0.0
    xc = x - xm
    scale = np.sqrt(np.mean(xc * xc, axis=0))
    safe = np.where(scale > 0, scale, 1.0)
    xs = xc / safe
    xs[:, scale == 0] = 0.0
    return xs, y - ym, xm, ym, scale


def _penalty(pf, q):
    if pf is None:
        return np.ones(q)
    pf = np.asarray(pf, dtype=np.float64)
    if pf.shape != (q,) or np.any(pf < 0):
        raise SchemaError("penalty_factor must be a nonnegative vector, one entry per column")
    return pf


def _destandardise(b, xm, ym, scale):
    coef = np.where(scale > 0, b / np.where(scale > 0, scale, 1.0), 0.0)
    return coef, ym - float(xm @ coef)


def _lasso_path(x, y, lambdas, intercept=True, penalty_factor=None, tol=TOL,
                max_sweeps=MAX_SWEEPS):
    xs, yc, xm, ym, scale = _prepare(x, y, intercept)
    q = xs.shape[1]
    pf = _penalty(penalty_factor, q)
    G = 2.0 * (xs.T @ xs)
    c = 2.0 * (xs.T @ yc)
    b = np.zeros(q)
    none = np.empty(0)
    coefs = np.empty((len(lambdas), q))
    intercepts = np.empty(len(lambdas))
    ok = np.empty(len(lambdas), dtype=bool)
    for k, lam in enumerate(lambdas):
        _, conv = cd_gram(G, c, b, lam * pf, tol, max_sweeps, none)
        coefs[k], intercepts[k] = _destandardise(b, xm, ym, scale)
        ok[k] = conv
    return coefs, intercepts, ok


def fit_lasso(x_sub, y_sub, lam, *, intercept=True, penalty_factor=None, arm=None,
              names=(), tol=TOL, max_sweeps=MAX_SWEEPS, record_history=False) -> LassoFit:
    """Fit the penalised least-squares outcome model at a single ``lam``."""
    if not np.isfinite(lam) or lam < 0:
        raise SchemaError(f"lambda must be finite and >= 0, got {lam}")
    xs, yc, xm, ym, scale = _prepare(x_sub, y_sub, intercept)
    q = xs.shape[1]
    pf = _penalty(penalty_factor, q)
    G = 2.0 * (xs.T @ xs)
    c = 2.0 * (xs.T @ yc)
    b = np.zeros(q)
    history = np.full(max_sweeps + 1, np.nan) if record_history else np.empty(0)
    sweeps, conv = cd_gram(G, c, b, lam * pf, tol, max_sweeps, history)
    coef, b0 = _destandardise(b, xm, ym, scale)
    return LassoFit(
        coefficients=coef,
        intercept=b0,
        lam=float(lam),
        arm=arm,
        names=tuple(names),
        converged=bool(conv),
        sweeps=int(sweeps),
        x_mean=xm,
        x_scale=scale,
        history=history[: sweeps + 1] + float(yc @ yc) if record_history else None,
    )


def lambda_max(x_sub, y_sub, *, intercept=True, penalty_factor=None) -> float:
    """Smallest ``lam`` at which every penalised coefficient is zero."""
    xs, yc, _, _, _ = _prepare(x_sub, y_sub, intercept)
    pf = _penalty(penalty_factor, xs.shape[1])
    free = pf == 0
    r = yc
    if np.any(free):
        beta, *_ = np.linalg.lstsq(xs[:, free], yc, rcond=None)
        r = yc - xs[:, free] @ beta
    pen = ~free
    if not np.any(pen):
        return 0.0
    grad = np.abs(2.0 * (xs[:, pen].T @ r)) / pf[pen]
    return float(grad.max())


def lambda_grid(lmax: float, size: int, decades: float = LAMBDA_DECADES) -> np.ndarray:
    if size < 1:
        raise SchemaError("grid size must be >= 1")
    if lmax <= 0:
        lmax = 1.0  # flat outcome: every lambda gives the same fit
    if size == 1:
        return np.array([lmax])
    return lmax * np.logspace(0.0, -decades, size)


def fold_ids(n: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded shuffle, then contiguous blocks."""
    perm = rng.permutation(n)
    ids = np.empty(n, dtype=np.int64)
    for k, block in enumerate(np.array_split(perm, folds)):
        ids[block] = k
    return ids


def cv_select_lambda(x_sub, y_sub, folds=10, grid_size=50, *, seed=0, rng=None,
                     rule="min", intercept=True, penalty_factor=None) -> CvReport:
    """K-fold CV over a log-spaced grid spanning two decades below ``lambda_max``.

    The loss is a sum over units, so each training fold uses ``lam * n_train / n``
    to keep penalty strength comparable with the full-sample fit. Ties in CV
    error go to the larger ``lam``; ``rule="1se"`` picks the largest ``lam``
    within one standard error of the minimum.
    """
    x = as_matrix(x_sub, "x_sub")
    y = as_sample(y_sub, "y_sub")
    n = y.size
    if n < folds:
        raise DegenerateDataError(f"arm has {n} units, fewer than {folds} folds")
    if rule not in ("min", "1se"):
        raise SchemaError(f"unknown CV rule {rule!r}")
    grid = lambda_grid(lambda_max(x, y, intercept=intercept, penalty_factor=penalty_factor),
                       grid_size)
    if rng is None:
        rng = np.random.default_rng(seed)
    ids = fold_ids(n, folds, rng)
    errs = np.empty((folds, grid.size))
    for k in range(folds):
        test = ids == k
        train = ~test
        coefs, b0, _ = _lasso_path(x[train], y[train], grid * (train.sum() / n),
                                   intercept=intercept, penalty_factor=penalty_factor)
        pred = b0[None, :] + x[test] @ coefs.T
        errs[k] = np.mean((y[test, None] - pred) ** 2, axis=0)
    mean = errs.mean(axis=0)
    se = errs.std(axis=0, ddof=1) / np.sqrt(folds)
    best = int(np.argmin(mean))
    if rule == "1se":
        ok = np.flatnonzero(mean <= mean[best] + se[best])
        best = int(ok[0])
    return CvReport(grid, mean, se, float(grid[best]), best, rule, folds)


def predict(fit: LassoFit, x) -> np.ndarray | float:
    """``intercept + x @ coefficients`` for a row or a matrix of rows."""
    x = np.asarray(x, dtype=np.float64)
    q = fit.coefficients.size
    if x.shape[-1] != q:
        raise SchemaError(f"row has {x.shape[-1]} entries, fit has {q} coefficients")
    out = fit.intercept + x @ fit.coefficients
    return float(out) if x.ndim == 1 else out
