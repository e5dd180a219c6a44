"""Adaptive-Lasso logistic propensity score with outcome-free penalty weights.

Penalty weights come from the conditional ball covariance scores:
``w_j = (z * rho_j) ** gamma`` with ``z = 1 / max_j rho_j``, and coefficient
``j`` is penalised by ``lambda_d / w_j`` (columns with ``w_j = 0`` never enter).
The pair ``(gamma, lambda_d)`` is tuned by a weighted absolute mean difference
(wAMD) balance criterion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._cd import cd_gram
from ._validate import as_arms, as_matrix, check_arm_sizes
from .errors import DegenerateDataError, SchemaError

EPSILON = 0.01
TOL = 1e-7
MAX_ITER = 200
INNER_TOL = 1e-10
INNER_MAX_SWEEPS = 10_000
OBJ_SLACK = 1e-10
MAX_HALVINGS = 40

DEFAULT_GAMMAS = (0.5, 1.0, 2.0, 4.0)
DEFAULT_LAMBDA_SIZE = 25
LAMBDA_DECADES = 3.0

BALANCE_MODES = ("rho", "coefficient")


@dataclass
class AdaptiveWeights:
    rho_hat: np.ndarray
    z_hat: float
    gamma: float
    w_hat: np.ndarray


def compute_weights(rho_hat, gamma) -> AdaptiveWeights:
    rho = np.asarray(rho_hat, dtype=np.float64)
    if rho.ndim != 1 or rho.size == 0 or not np.all(np.isfinite(rho)):
        raise SchemaError("rho_hat must be a nonempty finite vector")
    if not gamma > 0:
        raise SchemaError(f"gamma must be > 0, got {gamma}")
    top = np.max(np.abs(rho))
    if top <= 0:
        raise DegenerateDataError("all screening scores are zero; adaptive weights undefined")
    z = 1.0 / top
    w = np.abs(z * rho) ** gamma
    # pin the normalised maximum at exactly 1 against rounding in z * rho
    w[np.abs(rho) == top] = 1.0
    return AdaptiveWeights(rho_hat=rho, z_hat=z, gamma=float(gamma), w_hat=w)


def expit(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def clamp(e, epsilon=EPSILON):
    return np.clip(e, epsilon, 1.0 - epsilon)


@dataclass
class PsFit:
    coefficients: np.ndarray
    intercept: float
    lambda_d: float
    gamma: float
    propensities: np.ndarray
    epsilon: float = EPSILON
    unpenalized_coefficients: np.ndarray = field(default_factory=lambda: np.empty(0))
    converged: bool = True
    iterations: int = 0
    names: tuple[str, ...] = ()
    history: np.ndarray | None = field(default=None, repr=False)

    @property
    def nonzero(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients != 0.0)

    @property
    def nonzero_set(self) -> list:
        if self.names:
            return [self.names[j] for j in self.nonzero]
        return [int(j) for j in self.nonzero]

    def linear_predictor(self, x, unpenalized=None) -> np.ndarray:
        eta = self.intercept + np.asarray(x) @ self.coefficients
        if unpenalized is not None and self.unpenalized_coefficients.size:
            eta = eta + np.asarray(unpenalized) @ self.unpenalized_coefficients
        return eta

    def predict(self, x, unpenalized=None) -> np.ndarray:
        return clamp(expit(self.linear_predictor(x, unpenalized)), self.epsilon)


def _design(x, d, unpenalized, intercept):
    x = as_matrix(x, "x_sub")
    n = x.shape[0]
    d = as_arms(d, n)
    if d.min() == d.max():
        raise DegenerateDataError("degenerate treatment split: propensity model needs both arms")
    blocks = []
    if intercept:
        blocks.append(np.ones((n, 1)))
    u = None
    if unpenalized is not None:
        u = as_matrix(unpenalized, "unpenalized", n=n)
        blocks.append(u)
    blocks.append(x)
    return np.hstack(blocks), d.astype(np.float64), x, u


def _penalties(q, n_free, lambda_d, w_hat):
    pen = np.zeros(n_free + q)
    w = np.asarray(w_hat, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        pen[n_free:] = np.where(w > 0, lambda_d / w, np.inf)
    return pen


def _neg_loglik(eta, d):
    # sum log(1 + e^eta) - d * eta, overflow safe
    return float(np.sum(np.logaddexp(0.0, eta) - d * eta))


def _objective(Z, d, beta, pen):
    active = beta != 0.0
    return _neg_loglik(Z @ beta, d) + float(np.sum(pen[active] * np.abs(beta[active])))


def _irls(Z, d, pen, beta, tol, max_iter, record):
    """Penalised IRLS with step halving; ``beta`` is updated in place."""
    f = _objective(Z, d, beta, pen)
    history = [f] if record else None
    none = np.empty(0)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        eta = Z @ beta
        p = np.clip(expit(eta), 1e-10, 1.0 - 1e-10)
        w = p * (1.0 - p)
        z = eta + (d - p) / w
        G = Z.T @ (w[:, None] * Z)
        c = Z.T @ (w * z)
        new = beta.copy()
        cd_gram(G, c, new, pen, INNER_TOL, INNER_MAX_SWEEPS, none)
        f_new = _objective(Z, d, new, pen)
        halvings = 0
        while f_new > f + OBJ_SLACK and halvings < MAX_HALVINGS:
            new = 0.5 * (beta + new)
            f_new = _objective(Z, d, new, pen)
            halvings += 1
        if f_new > f + OBJ_SLACK:
            # no descent direction left at this precision
            converged = True
            break
        change = float(np.max(np.abs(new - beta)))
        beta[:] = new
        f = f_new
        if record:
            history.append(f)
        if change < tol:
            converged = True
            break
    return it, converged, (np.array(history) if record else None)


def fit_alasso_logistic(x_sub, d, lambda_d, weights, *, unpenalized=None, intercept=True,
                        epsilon=EPSILON, tol=TOL, max_iter=MAX_ITER, names=(), start=None,
                        record_history=False) -> PsFit:
    """Minimise the Bernoulli negative log-likelihood plus ``sum_j (lambda_d / w_j) |b_j|``."""
    if not np.isfinite(lambda_d) or lambda_d < 0:
        raise SchemaError(f"lambda_d must be finite and >= 0, got {lambda_d}")
    Z, dd, x, u = _design(x_sub, d, unpenalized, intercept)
    q = x.shape[1]
    w_hat = weights.w_hat if isinstance(weights, AdaptiveWeights) else np.asarray(weights)
    if w_hat.shape != (q,):
        raise SchemaError(f"{w_hat.size} weights for {q} columns")
    n_free = Z.shape[1] - q
    pen = _penalties(q, n_free, lambda_d, w_hat)
    if start is not None:
        beta = np.array(start, dtype=np.float64)
        beta[np.isinf(pen)] = 0.0
    else:
        beta = np.zeros(Z.shape[1])
        if intercept:
            m = dd.mean()
            beta[0] = np.log(m / (1.0 - m))
    it, conv, hist = _irls(Z, dd, pen, beta, tol, max_iter, record_history)
    b0 = float(beta[0]) if intercept else 0.0
    ucoef = beta[int(intercept):n_free].copy()
    coef = beta[n_free:].copy()
    e = clamp(expit(Z @ beta), epsilon)
    gamma = weights.gamma if isinstance(weights, AdaptiveWeights) else float("nan")
    return PsFit(coefficients=coef, intercept=b0, lambda_d=float(lambda_d), gamma=gamma,
                 propensities=e, epsilon=epsilon, unpenalized_coefficients=ucoef,
                 converged=conv, iterations=it, names=tuple(names), history=hist)


def _packed(fit: PsFit, intercept: bool) -> np.ndarray:
    head = [fit.intercept] if intercept else []
    return np.concatenate([head, fit.unpenalized_coefficients, fit.coefficients])


def balance_gaps(e, x_sub, d) -> np.ndarray:
    """Per-column |tau-weighted treated mean - tau-weighted control mean|."""
    x = as_matrix(x_sub, "x_sub")
    d = as_arms(d, x.shape[0]).astype(np.float64)
    e = np.asarray(e, dtype=np.float64)
    tau = d / e + (1.0 - d) / (1.0 - e)
    t1 = tau * d
    t0 = tau * (1.0 - d)
    return np.abs((t1 @ x) / t1.sum() - (t0 @ x) / t0.sum())


def wamd(fit: PsFit, x_sub, d, importance=None) -> float:
    """Weighted absolute mean difference.

    ``importance`` defaults to ``|fit.coefficients|``; pass a fixed vector (such as
    the screening scores) to weight each column's imbalance by outcome relevance.
    """
    x = as_matrix(x_sub, "x_sub")
    if x.shape[1] != fit.coefficients.size:
        raise SchemaError(f"x_sub has {x.shape[1]} columns, fit has {fit.coefficients.size}")
    if np.asarray(fit.propensities).size != x.shape[0]:
        raise SchemaError("fit propensities do not match x_sub rows")
    imp = np.abs(fit.coefficients) if importance is None else np.abs(np.asarray(importance))
    if imp.shape != (x.shape[1],):
        raise SchemaError("importance must have one entry per column")
    if not np.any(imp):
        return 0.0
    gaps = balance_gaps(fit.propensities, x, d)
    return float(np.sum(imp * gaps))


def ps_lambda_max(x_sub, d, rho_hat, *, unpenalized=None, intercept=True) -> float:
    """Smallest ``lambda_d`` zeroing all penalised coefficients at ``gamma = 1``."""
    w = compute_weights(rho_hat, 1.0).w_hat
    x = as_matrix(x_sub, "x_sub")
    Z, dd, x, _ = _design(x, d, unpenalized, intercept)
    n_free = Z.shape[1] - x.shape[1]
    if n_free:
        free = Z[:, :n_free]
        beta = np.zeros(n_free)
        if intercept:
            m = dd.mean()
            beta[0] = np.log(m / (1.0 - m))
        _irls(free, dd, np.zeros(n_free), beta, TOL, MAX_ITER, False)
        p0 = expit(free @ beta)
    else:
        p0 = np.full(dd.size, 0.5)
    grad = np.abs(x.T @ (dd - p0))
    return float(np.max(grad * w))


@dataclass
class WamdReport:
    grid: list[tuple[float, float]]
    wamd: np.ndarray
    chosen: tuple[float, float]
    chosen_index: int
    fit: PsFit
    degenerate: bool
    balance: str = "rho"
    per_pair_fits: list[dict] = field(default_factory=list)


def tune(x_sub, d, rho_hat, gamma_grid=DEFAULT_GAMMAS, lambda_grid=None, *,
         lambda_grid_size=DEFAULT_LAMBDA_SIZE, unpenalized=None, intercept=True,
         epsilon=EPSILON, balance="rho", balance_power=None, names=(),
         importance=None) -> WamdReport:
    """Fit every (gamma, lambda_d) pair and keep the wAMD minimiser.

    ``balance="rho"`` weights column imbalance by ``(z * rho_j) ** balance_power``
    (default power: the largest gamma in the grid), so the many weak columns
    cannot outweigh the few strong ones. ``balance="coefficient"`` uses each
    fit's own ``|b_j|``, under which an all-zero fit scores exactly 0. A fixed
    ``importance`` vector overrides both.
    Ties go to larger ``lambda_d``, then larger ``gamma``.
    """
    if balance not in BALANCE_MODES:
        raise SchemaError(f"balance must be one of {BALANCE_MODES}")
    gammas = [float(g) for g in gamma_grid]
    if not gammas:
        raise SchemaError("gamma grid is empty")
    rho = np.asarray(rho_hat, dtype=np.float64)
    if lambda_grid is None:
        lmax = ps_lambda_max(x_sub, d, rho, unpenalized=unpenalized, intercept=intercept)
        if lmax <= 0:
            lmax = 1.0
        lambdas = lmax * np.logspace(0.0, -LAMBDA_DECADES, lambda_grid_size)
    else:
        lambdas = np.asarray(sorted(float(v) for v in lambda_grid)[::-1])
    if lambdas.size == 0:
        raise SchemaError("lambda grid is empty")
    if importance is not None:
        importance = np.abs(np.asarray(importance, dtype=np.float64))
    elif balance == "rho":
        power = max(gammas) if balance_power is None else float(balance_power)
        importance = compute_weights(rho, power).w_hat

    grid, values, fits, summaries = [], [], [], []
    for g in gammas:
        w = compute_weights(rho, g)
        start = None
        for lam in lambdas:
            fit = fit_alasso_logistic(x_sub, d, lam, w, unpenalized=unpenalized,
                                      intercept=intercept, epsilon=epsilon, names=names,
                                      start=start)
            start = _packed(fit, intercept)
            val = wamd(fit, x_sub, d, importance)
            grid.append((g, float(lam)))
            values.append(val)
            fits.append(fit)
            summaries.append({
                "gamma": g,
                "lambda_d": float(lam),
                "wamd": val,
                "n_nonzero": int(fit.nonzero.size),
                "converged": fit.converged,
            })
    values = np.asarray(values)
    keys = sorted(range(len(grid)), key=lambda k: (values[k], -grid[k][1], -grid[k][0]))
    best = keys[0]
    chosen = fits[best]
    return WamdReport(grid=grid, wamd=values, chosen=grid[best], chosen_index=best,
                      fit=chosen, degenerate=not np.any(chosen.coefficients),
                      balance=balance, per_pair_fits=summaries)
