"""End-to-end causal ball screening: screen, fit both nuisance models, estimate."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._validate import as_arms, as_sample, check_arm_sizes
from .dr_estimator import DrEstimate, estimate
from .errors import ConvergenceError, DegenerateDataError, SchemaError
from .outcome_lasso import LassoFit, cv_select_lambda, fit_lasso, predict
from .ps_alasso import BALANCE_MODES, DEFAULT_GAMMAS, DEFAULT_LAMBDA_SIZE, WamdReport, tune
from .rng import METHOD, STREAM_CV, philox
from .screening import DEFAULT_Q, FeatureMatrix, ScreenResult, resolve_q, screen


@dataclass(frozen=True)
class RunConfig:
    q: int | str = DEFAULT_Q
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMAS
    lambda_d_grid_size: int = DEFAULT_LAMBDA_SIZE
    lambda_y_grid_size: int = 50
    epsilon: float = 0.01
    cv_folds: int = 10
    cv_rule: str = "min"
    alpha: float = 0.05
    seed: int = 0
    unpenalized: tuple[str, ...] = ()
    outcome_intercept: bool = True
    ps_intercept: bool = True
    balance: str = "rho"
    balance_power: float | None = None
    n_jobs: int = 1
    strict: bool = False

    def __post_init__(self):
        if self.q != "nlogn" and int(self.q) < 1:
            raise SchemaError("q must be >= 1 or 'nlogn'")
        if self.lambda_d_grid_size < 1 or self.lambda_y_grid_size < 1 or not self.gamma_grid:
            raise SchemaError("grid sizes must be >= 1")
        if any(g <= 0 for g in self.gamma_grid):
            raise SchemaError("gamma values must be > 0")
        if not 0.0 < self.epsilon < 0.5:
            raise SchemaError("epsilon must lie in (0, 0.5)")
        if not 0.0 < self.alpha < 1.0:
            raise SchemaError("alpha must lie in (0, 1)")
        if self.cv_folds < 2:
            raise SchemaError("cv_folds must be >= 2")
        if self.balance_power is not None and not self.balance_power > 0:
            raise SchemaError("balance_power must be > 0")
        if self.balance not in BALANCE_MODES:
            raise SchemaError(f"balance must be one of {BALANCE_MODES}")
        object.__setattr__(self, "gamma_grid", tuple(float(g) for g in self.gamma_grid))
        object.__setattr__(self, "unpenalized", tuple(self.unpenalized))

    def digest(self) -> str:
        # thread count never changes results, so it stays out of the hash
        fields = {k: v for k, v in asdict(self).items() if k != "n_jobs"}
        blob = json.dumps(fields, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class CausalData:
    x: FeatureMatrix
    y: np.ndarray
    d: np.ndarray
    unpenalized: FeatureMatrix | None = None
    outcome_name: str = "Y"
    treatment_name: str = "D"

    def __post_init__(self):
        if not isinstance(self.x, FeatureMatrix):
            self.x = FeatureMatrix.from_array(self.x)
        self.y = as_sample(self.y, "outcome")
        if self.x.n != self.y.size:
            raise SchemaError(f"covariates have {self.x.n} rows, outcome has {self.y.size}")
        self.d = as_arms(self.d, self.y.size, "treatment")
        if self.unpenalized is not None:
            if not isinstance(self.unpenalized, FeatureMatrix):
                self.unpenalized = FeatureMatrix.from_array(self.unpenalized, prefix="U")
            if self.unpenalized.n != self.y.size:
                raise SchemaError("unpenalized block has the wrong number of rows")
        roles = [self.outcome_name, self.treatment_name, *self.x.names]
        if self.unpenalized is not None:
            roles += list(self.unpenalized.names)
        if len(set(roles)) != len(roles):
            raise SchemaError("a column may play only one role")

    def __iter__(self):
        return iter((self.x, self.y, self.d))

    @property
    def n(self) -> int:
        return self.y.size

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.x.values, self.y, self.d):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update("\x1f".join(self.x.names).encode())
        if self.unpenalized is not None:
            h.update(np.ascontiguousarray(self.unpenalized.values).tobytes())
            h.update("\x1f".join(self.unpenalized.names).encode())
        return h.hexdigest()


@dataclass
class AnalysisReport:
    estimate: DrEstimate
    screen: ScreenResult
    screened: list[str]
    dropped_duplicates: list[str]
    selected_or: list[str]
    selected_ps: list[str]
    lambda_y: dict[int, float]
    lambda_d: float
    gamma: float
    wamd: WamdReport
    outcome_fits: dict[int, LassoFit]
    convergence: dict[str, bool]
    provenance: dict[str, str]
    ps_screen: ScreenResult | None = None
    ps_screened: list[str] = field(default_factory=list)
    unpenalized: list[str] = field(default_factory=list)

    @property
    def delta_hat(self) -> float:
        return self.estimate.delta_hat

    def to_dict(self, top_k=None) -> dict:
        est = self.estimate
        sr = self.screen
        order = list(np.lexsort((np.arange(sr.scores.size), -sr.scores)))
        if top_k is not None:
            order = order[:top_k]
        out = {
            "estimate": {
                "delta_hat": est.delta_hat,
                "v_hat": est.v_hat,
                "se": est.se,
                "ci_lower": est.ci_lower,
                "ci_upper": est.ci_upper,
                "alpha": est.level,
                "n": est.n,
                "caveat": est.caveat,
                "influence": est.influence.tolist(),
            },
            "screening": {
                "q": sr.q,
                "selected": sr.selected_names,
                "scores": [{"rank": r + 1, "column": sr.names[j], "score": float(sr.scores[j])}
                           for r, j in enumerate(order)],
            },
            "screened": self.screened,
            "dropped_duplicates": self.dropped_duplicates,
            "unpenalized": self.unpenalized,
            "selected_or": self.selected_or,
            "selected_ps": self.selected_ps,
            "tuning": {
                "lambda_y0": self.lambda_y[0],
                "lambda_y1": self.lambda_y[1],
                "lambda_d": self.lambda_d,
                "gamma": self.gamma,
                "balance": self.wamd.balance,
                "ps_degenerate": self.wamd.degenerate,
            },
            "coefficients": coefficient_rows(self),
            "wamd_surface": self.wamd.per_pair_fits,
            "convergence": self.convergence,
            "provenance": self.provenance,
        }
        if self.ps_screen is not None:
            out["ps_screening"] = {"selected": self.ps_screen.selected_names}
            out["ps_screened"] = self.ps_screened
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=2, sort_keys=True)


def coefficient_rows(report: AnalysisReport) -> list[dict]:
    rows = []
    for arm in (0, 1):
        fit = report.outcome_fits[arm]
        rows.append({"model": f"outcome_arm{arm}", "column": "(intercept)",
                     "coefficient": fit.intercept})
        rows += [{"model": f"outcome_arm{arm}", "column": name, "coefficient": float(c)}
                 for name, c in zip(fit.names, fit.coefficients)]
    ps = report.wamd.fit
    rows.append({"model": "propensity", "column": "(intercept)", "coefficient": ps.intercept})
    for name, c in zip(report.unpenalized, ps.unpenalized_coefficients):
        rows.append({"model": "propensity", "column": name, "coefficient": float(c)})
    rows += [{"model": "propensity", "column": name, "coefficient": float(c)}
             for name, c in zip(ps.names, ps.coefficients)]
    return rows


def residualize(y, u) -> np.ndarray:
    """Least-squares residuals of ``y`` on an intercept and the columns of ``u``."""
    design = np.column_stack([np.ones(y.size), u])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return y - design @ beta


def dedupe(x: FeatureMatrix, cols) -> tuple[list[int], list[int]]:
    """Drop exact duplicate columns, keeping the lowest original index of each group."""
    keep_for = {}
    for j in sorted(cols):
        key = x.values[:, j].tobytes()
        keep_for.setdefault(key, j)
    kept = [j for j in cols if keep_for[x.values[:, j].tobytes()] == j]
    dropped = [j for j in cols if keep_for[x.values[:, j].tobytes()] != j]
    return kept, dropped


def _screen_if_needed(x, y_screen, d, q, n_jobs, given):
    if given is not None:
        if given.scores.size != x.p:
            raise SchemaError("precomputed screening result does not match the design")
        return given
    return screen(x, y_screen, d, q, n_jobs=n_jobs)


def run_cbs(data: CausalData, config: RunConfig = RunConfig(), *, ps_x: FeatureMatrix | None = None,
            screen_result: ScreenResult | None = None,
            ps_screen_result: ScreenResult | None = None) -> AnalysisReport:
    """Run the full procedure on one data set.

    ``ps_x`` supplies a different analyst design for the propensity model (for
    example squared covariates); it is screened against the same outcome.
    """
    x, y, d = data.x, data.y, data.d
    n0, n1 = check_arm_sizes(d)
    if min(n0, n1) < config.cv_folds:
        raise DegenerateDataError(
            f"degenerate treatment split: arms of size {n0}/{n1} are smaller than "
            f"{config.cv_folds} CV folds")
    u = data.unpenalized
    y_screen = residualize(y, u.values) if u is not None else y
    q = resolve_q(config.q, data.n)

    sr = _screen_if_needed(x, y_screen, d, q, config.n_jobs, screen_result)
    if not np.any(sr.scores > 0):
        raise DegenerateDataError("all screening scores are zero")
    or_cols, or_dropped = dedupe(x, sr.selected)
    dropped = [x.names[j] for j in or_dropped]

    if ps_x is None:
        ps_design, ps_sr, ps_cols = x, sr, or_cols
    else:
        if ps_x.n != data.n:
            raise SchemaError("propensity design has the wrong number of rows")
        ps_design = ps_x
        ps_sr = _screen_if_needed(ps_x, y_screen, d, q, config.n_jobs, ps_screen_result)
        if not np.any(ps_sr.scores > 0):
            raise DegenerateDataError("all propensity-design screening scores are zero")
        ps_cols, ps_dropped = dedupe(ps_x, ps_sr.selected)
        dropped += [ps_x.names[j] for j in ps_dropped if ps_x.names[j] not in dropped]

    u_vals = u.values if u is not None else np.empty((data.n, 0))
    u_names = list(u.names) if u is not None else []

    # outcome models, one per arm
    x_or = np.hstack([x.values[:, or_cols], u_vals])
    or_names = tuple(x.names[j] for j in or_cols) + tuple(u_names)
    pf = np.concatenate([np.ones(len(or_cols)), np.zeros(len(u_names))])
    fits, lambdas = {}, {}
    for arm in (0, 1):
        rows = d == arm
        cv = cv_select_lambda(x_or[rows], y[rows], folds=config.cv_folds,
                              grid_size=config.lambda_y_grid_size,
                              rng=philox(config.seed, STREAM_CV + arm), rule=config.cv_rule,
                              intercept=config.outcome_intercept, penalty_factor=pf)
        fits[arm] = fit_lasso(x_or[rows], y[rows], cv.chosen_lambda,
                              intercept=config.outcome_intercept, penalty_factor=pf,
                              arm=arm, names=or_names)
        lambdas[arm] = cv.chosen_lambda

    # propensity model
    x_ps = ps_design.values[:, ps_cols]
    ps_names = tuple(ps_design.names[j] for j in ps_cols)
    rep = tune(x_ps, d, ps_sr.scores[ps_cols], config.gamma_grid,
               lambda_grid_size=config.lambda_d_grid_size,
               unpenalized=u_vals if u_names else None, intercept=config.ps_intercept,
               epsilon=config.epsilon, balance=config.balance,
               balance_power=config.balance_power, names=ps_names)

    b1 = predict(fits[1], x_or)
    b0 = predict(fits[0], x_or)
    est = estimate(y, d, rep.fit.propensities, b1, b0, config.alpha)

    n_or = len(or_cols)
    sel_or = [x.names[or_cols[j]] for j in range(n_or)
              if fits[0].coefficients[j] != 0 or fits[1].coefficients[j] != 0]
    convergence = {
        "outcome_arm0": fits[0].converged,
        "outcome_arm1": fits[1].converged,
        "propensity": rep.fit.converged,
        "propensity_grid": all(s["converged"] for s in rep.per_pair_fits),
    }
    if config.strict and not all(convergence.values()):
        failed = [k for k, v in convergence.items() if not v]
        raise ConvergenceError(f"non-converged fits: {', '.join(failed)}")

    provenance = {
        "config_sha256": config.digest(),
        "input_sha256": data.digest(),
        "seed": str(config.seed),
        "rng": METHOD,
        "version": __version__,
    }
    return AnalysisReport(
        estimate=est,
        screen=sr,
        screened=[x.names[j] for j in or_cols],
        dropped_duplicates=dropped,
        selected_or=sel_or,
        selected_ps=rep.fit.nonzero_set,
        lambda_y=lambdas,
        lambda_d=rep.chosen[1],
        gamma=rep.chosen[0],
        wamd=rep,
        outcome_fits=fits,
        convergence=convergence,
        provenance=provenance,
        ps_screen=None if ps_x is None else ps_sr,
        ps_screened=list(ps_names),
        unpenalized=u_names,
    )


# ---------------------------------------------------------------- ingestion


@dataclass
class Schema:
    treatment: str
    outcome: str
    covariates: tuple[str, ...] | None = None  # None: every other column
    unpenalized: tuple[str, ...] = ()


def _parse_float(tok):
    v = float(tok)
    if not math.isfinite(v):
        raise ValueError("non-finite")
    return v


_MISSING = {"", "na", "nan", "null", "none", "?", "."}


def ingest_csv(path, schema: Schema, delimiter=",") -> CausalData:
    """Read a header-first delimited file into a :class:`CausalData`.

    Rows with missing cells are rejected (no imputation); all problems are
    collected and reported together with 1-based data-row numbers.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        rows = list(reader)
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names in header")
    unpen = tuple(schema.unpenalized)
    named = [schema.treatment, schema.outcome, *unpen]
    if schema.covariates is None:
        covs = tuple(h for h in header if h not in named)
    else:
        covs = tuple(schema.covariates)
    roles = [*named, *covs]
    if len(set(roles)) != len(roles):
        raise SchemaError("a column may play only one role")
    missing = [c for c in roles if c not in header]
    if missing:
        raise SchemaError(f"missing columns: {', '.join(missing)}")
    if not covs:
        raise SchemaError("no covariate columns")
    rows = [r for r in rows if any(tok.strip() for tok in r)]
    if not rows:
        raise SchemaError(f"{path} has a header but no data rows")

    col = {h: k for k, h in enumerate(header)}
    wanted = [schema.treatment, schema.outcome, *unpen, *covs]
    idx = [col[c] for c in wanted]
    out = np.empty((len(rows), len(wanted)))
    errors = []
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            errors.append(f"row {r}: expected {len(header)} fields, found {len(row)}")
            continue
        for k, (c, ci) in enumerate(zip(wanted, idx)):
            tok = row[ci].strip()
            if tok.lower() in _MISSING:
                errors.append(f"row {r}, column {c!r}: missing value")
                continue
            if k == 0:
                if tok not in ("0", "1"):
                    errors.append(f"row {r}, column {c!r}: treatment must be 0 or 1, got {tok!r}")
                    continue
                out[r - 1, k] = float(tok)
                continue
            try:
                out[r - 1, k] = _parse_float(tok)
            except ValueError:
                errors.append(f"row {r}, column {c!r}: not a finite number: {tok!r}")
    if errors:
        shown = errors[:50]
        more = f" (+{len(errors) - 50} more)" if len(errors) > 50 else ""
        raise SchemaError("; ".join(shown) + more)
    k_u = 2 + len(unpen)
    return CausalData(
        x=FeatureMatrix(out[:, k_u:], covs),
        y=out[:, 1],
        d=out[:, 0].astype(np.int8),
        unpenalized=FeatureMatrix(out[:, 2:k_u], unpen) if unpen else None,
        outcome_name=schema.outcome,
        treatment_name=schema.treatment,
    )


def write_csv_tables(report: AnalysisReport, outdir) -> dict[str, str]:
    """Flat scores / coefficients / estimate tables; returns name -> text."""
    d = report.to_dict()
    tables = {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "column", "score", "screened"])
    screened = set(d["screening"]["selected"])
    for row in d["screening"]["scores"]:
        w.writerow([row["rank"], row["column"], repr(row["score"]), int(row["column"] in screened)])
    tables["scores.csv"] = buf.getvalue()

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "column", "coefficient"])
    for row in d["coefficients"]:
        w.writerow([row["model"], row["column"], repr(row["coefficient"])])
    tables["coefficients.csv"] = buf.getvalue()

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    e = d["estimate"]
    t = d["tuning"]
    w.writerow(["delta_hat", "se", "ci_lower", "ci_upper", "alpha", "n", "lambda_y0",
                "lambda_y1", "lambda_d", "gamma"])
    w.writerow([repr(e["delta_hat"]), repr(e["se"]), repr(e["ci_lower"]), repr(e["ci_upper"]),
                e["alpha"], e["n"], repr(t["lambda_y0"]), repr(t["lambda_y1"]),
                repr(t["lambda_d"]), t["gamma"]])
    tables["estimate.csv"] = buf.getvalue()
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        for name, text in tables.items():
            (outdir / name).write_text(text)
    return tables
