"""Synthetic studies: the sparse linear design and the misspecification design.

``linear``: X ~ U(-1, 1)^p, logit P(D=1|X) = 0.2(X1+X2) + 0.3(X5+X6),
Y = 2(X1+X2+X3+X4) + 2D + N(0, 1).

``misspec``: same X and propensity index plus a N(0, 1) term inside the logit,
Y = 2(X1+X2) + 2(X3^2+X4^2) + 2D + N(0, 1). The analyst may replace the
propensity and/or outcome design by the squared covariates.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CBSError, SchemaError
from .pipeline import CausalData, RunConfig, run_cbs
from .ps_alasso import expit
from .rng import METHOD, normal, philox, splitmix64, uniform
from .screening import FeatureMatrix, screen

TRUE_DELTA = 2.0
SCENARIOS = ("linear", "misspec")
ANALYST_MODELS = ("correct", "squared_ps", "squared_or", "squared_both")
CONFOUNDERS = ("X1", "X2")
PRECISION = ("X3", "X4")
INSTRUMENTS = ("X5", "X6")
MAX_FAILURE_RATE = 0.05


class SimulationError(CBSError, RuntimeError):
    pass


@dataclass(frozen=True)
class DgpSpec:
    n: int = 300
    p: int = 100
    scenario: str = "linear"
    analyst_model: str = "correct"
    true_delta: float = TRUE_DELTA
    seed: int = 0
    noise: bool = True
    force_treatment: int | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise SchemaError(f"scenario must be one of {SCENARIOS}")
        if self.analyst_model not in ANALYST_MODELS:
            raise SchemaError(f"analyst_model must be one of {ANALYST_MODELS}")
        if self.p < 6 or self.n < 4:
            raise SchemaError("the designs need p >= 6 and n >= 4")

    @property
    def beta(self) -> np.ndarray:
        b = np.zeros(self.p)
        b[[0, 1]] = 0.2
        b[[4, 5]] = 0.3
        return b

    @property
    def alpha(self) -> np.ndarray:
        a = np.zeros(self.p)
        a[:4] = 2.0
        return a


@dataclass
class SimData:
    data: CausalData
    or_design: FeatureMatrix
    ps_design: FeatureMatrix
    propensity: np.ndarray
    spec: DgpSpec


def _squared(x: FeatureMatrix) -> FeatureMatrix:
    return FeatureMatrix(x.values ** 2, tuple(f"{c}^2" for c in x.names))


def generate(spec: DgpSpec, run_seed: int) -> SimData:
    """Draw one data set; stream ``run_seed`` of master seed ``spec.seed``.

    Draw order within the stream: covariates (row-major), treatment uniforms,
    outcome noise, then (misspec only) the logit noise.
    """
    gen = philox(spec.seed, run_seed)
    n, p = spec.n, spec.p
    x = uniform(gen, -1.0, 1.0, (n, p))
    u_d = gen.random(n)
    eps = normal(gen, n)
    index = x @ spec.beta
    if spec.scenario == "misspec":
        index = index + normal(gen, n)
    e = expit(index)
    if spec.force_treatment is None:
        d = (u_d < e).astype(np.int8)
    else:
        d = np.full(n, spec.force_treatment, dtype=np.int8)
    if not spec.noise:
        eps = np.zeros(n)
    if spec.scenario == "linear":
        y = x @ spec.alpha + spec.true_delta * d + eps
    else:
        y = (2.0 * (x[:, 0] + x[:, 1]) + 2.0 * (x[:, 2] ** 2 + x[:, 3] ** 2)
             + spec.true_delta * d + eps)
    fm = FeatureMatrix.from_array(x)
    or_design = ps_design = fm
    if spec.scenario == "misspec":
        sq = _squared(fm)
        if spec.analyst_model in ("squared_or", "squared_both"):
            or_design = sq
        if spec.analyst_model in ("squared_ps", "squared_both"):
            ps_design = sq
    return SimData(CausalData(or_design, y, d), or_design, ps_design, e, spec)


@dataclass
class RunRecord:
    run: int
    delta_hat: float = math.nan
    se: float = math.nan
    covers: bool = False
    screened: tuple[str, ...] = ()
    selected_ps: tuple[str, ...] = ()
    selected_or: tuple[str, ...] = ()
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class McSummary:
    runs: int
    failures: int
    bias_x100: float
    bias_se_x100: float
    mse_x100: float
    mse_se_x100: float
    coverage_pct: float
    per_run_estimates: np.ndarray
    records: list[RunRecord] = field(default_factory=list, repr=False)
    true_delta: float = TRUE_DELTA
    alpha: float = 0.05

    def coverage_at(self, alpha: float) -> float:
        from .dr_estimator import critical_value

        c = critical_value(alpha)
        ok = [r for r in self.records if r.ok]
        hits = sum(abs(r.delta_hat - self.true_delta) <= c * r.se for r in ok)
        return 100.0 * hits / len(ok)

    def selection_rate(self, name: str, which="ps") -> float:
        ok = [r for r in self.records if r.ok]
        attr = {"ps": "selected_ps", "or": "selected_or", "screened": "screened"}[which]
        return sum(name in getattr(r, attr) for r in ok) / len(ok)

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "failures": self.failures,
            "bias_x100": self.bias_x100,
            "bias_se_x100": self.bias_se_x100,
            "mse_x100": self.mse_x100,
            "mse_se_x100": self.mse_se_x100,
            "coverage_pct": self.coverage_pct,
            "alpha": self.alpha,
            "true_delta": self.true_delta,
        }


def _sd(v, mean):
    if len(v) < 2:
        return 0.0
    return math.sqrt(math.fsum((a - mean) ** 2 for a in v) / (len(v) - 1))


def summarise(records: list[RunRecord], true_delta=TRUE_DELTA, alpha=0.05) -> McSummary:
    """Aggregate runs with exactly rounded sums, so the result ignores run order."""
    records = sorted(records, key=lambda r: r.run)
    ok = [r for r in records if r.ok]
    if not ok:
        raise SimulationError("every run failed")
    est = [r.delta_hat for r in ok]
    m = len(est)
    err = [e - true_delta for e in est]
    bias = math.fsum(err) / m
    sq = [e * e for e in err]
    mse = math.fsum(sq) / m
    return McSummary(
        runs=len(records),
        failures=len(records) - m,
        bias_x100=100.0 * bias,
        bias_se_x100=100.0 * _sd(est, bias + true_delta) / math.sqrt(m),
        mse_x100=100.0 * mse,
        mse_se_x100=100.0 * _sd(sq, mse) / math.sqrt(m),
        coverage_pct=100.0 * sum(r.covers for r in ok) / m,
        per_run_estimates=np.array(est),
        records=records,
        true_delta=true_delta,
        alpha=alpha,
    )


def run_config(base: RunConfig, spec: DgpSpec, run: int) -> RunConfig:
    return replace(base, seed=splitmix64(spec.seed ^ splitmix64(run)))


def _record(run, report, truth) -> RunRecord:
    est = report.estimate
    return RunRecord(run=run, delta_hat=est.delta_hat, se=est.se, covers=est.covers(truth),
                     screened=tuple(report.screened), selected_ps=tuple(report.selected_ps),
                     selected_or=tuple(report.selected_or))


def run_one(spec: DgpSpec, run: int, config: RunConfig = RunConfig()) -> RunRecord:
    try:
        sim = generate(spec, run)
        ps_x = None if sim.ps_design is sim.or_design else sim.ps_design
        report = run_cbs(sim.data, run_config(config, spec, run), ps_x=ps_x)
    except (CBSError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return RunRecord(run=run, error=f"{type(exc).__name__}: {exc}")
    return _record(run, report, spec.true_delta)


def _map(fn, args, n_jobs):
    if n_jobs is None:
        n_jobs = os.cpu_count() or 1
    if n_jobs <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        futures = [ex.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


def _check_failures(records):
    bad = sum(not r.ok for r in records)
    if bad > MAX_FAILURE_RATE * len(records):
        first = next(r.error for r in records if not r.ok)
        raise SimulationError(f"{bad} of {len(records)} runs failed; first: {first}")


def run_mc(spec: DgpSpec, runs: int, config: RunConfig = RunConfig(), n_jobs=1,
           run_ids=None) -> McSummary:
    """Monte Carlo over ``runs`` independent data sets (run ids 0..runs-1)."""
    if runs < 2:
        raise SchemaError("need at least 2 runs")
    ids = list(range(runs)) if run_ids is None else list(run_ids)
    records = _map(run_one, [(spec, r, config) for r in ids], n_jobs)
    _check_failures(records)
    return summarise(records, spec.true_delta, config.alpha)


# --------------------------------------------------------- double robustness

DR_CELLS = {
    "correct": ("outcome correct", "propensity correct"),
    "squared_ps": ("outcome correct", "propensity wrong"),
    "squared_or": ("outcome wrong", "propensity correct"),
    "squared_both": ("outcome wrong", "propensity wrong"),
}


def dr_run(n: int, p: int, seed: int, run: int, config: RunConfig = RunConfig()):
    """All four analyst models on one shared draw (common random numbers).

    Each distinct design is screened once and the result reused across cells.
    """
    spec = DgpSpec(n=n, p=p, scenario="misspec", seed=seed)
    sim = generate(spec, run)
    raw = sim.data.x
    sq = _squared(raw)
    cfg = run_config(config, spec, run)
    out = {}
    try:
        screens = {
            "raw": screen(raw, sim.data.y, sim.data.d, cfg.q, n_jobs=cfg.n_jobs),
            "sq": screen(sq, sim.data.y, sim.data.d, cfg.q, n_jobs=cfg.n_jobs),
        }
    except CBSError as exc:
        err = f"{type(exc).__name__}: {exc}"
        return {cell: RunRecord(run=run, error=err) for cell in DR_CELLS}
    designs = {"raw": raw, "sq": sq}
    for cell in DR_CELLS:
        or_key = "sq" if cell in ("squared_or", "squared_both") else "raw"
        ps_key = "sq" if cell in ("squared_ps", "squared_both") else "raw"
        data = CausalData(designs[or_key], sim.data.y, sim.data.d)
        try:
            report = run_cbs(data, cfg, ps_x=None if ps_key == or_key else designs[ps_key],
                             screen_result=screens[or_key],
                             ps_screen_result=None if ps_key == or_key else screens[ps_key])
            out[cell] = _record(run, report, spec.true_delta)
        except (CBSError, np.linalg.LinAlgError, FloatingPointError) as exc:
            out[cell] = RunRecord(run=run, error=f"{type(exc).__name__}: {exc}")
    return out


@dataclass
class DrCell:
    cell: str
    description: tuple[str, str]
    estimates: np.ndarray
    failures: int

    @property
    def median(self) -> float:
        return float(np.median(self.estimates))

    def quartiles(self) -> tuple[float, float, float]:
        q1, q2, q3 = np.percentile(self.estimates, [25, 50, 75])
        return float(q1), float(q2), float(q3)

    def to_dict(self) -> dict:
        q1, q2, q3 = self.quartiles()
        return {"cell": self.cell, "outcome_model": self.description[0],
                "propensity_model": self.description[1], "runs": int(self.estimates.size),
                "failures": self.failures, "q1": q1, "median": q2, "q3": q3,
                "mean": float(np.mean(self.estimates))}


def run_dr_study(runs: int, n: int = 2000, p: int = 100, seed: int = 0,
                 config: RunConfig = RunConfig(), n_jobs=1) -> dict[str, DrCell]:
    if runs < 2:
        raise SchemaError("need at least 2 runs")
    results = _map(dr_run, [(n, p, seed, r, config) for r in range(runs)], n_jobs)
    cells = {}
    for cell, desc in DR_CELLS.items():
        recs = sorted((res[cell] for res in results), key=lambda r: r.run)
        _check_failures(recs)
        est = np.array([r.delta_hat for r in recs if r.ok])
        cells[cell] = DrCell(cell, desc, est, sum(not r.ok for r in recs))
    return cells


def provenance(seed: int) -> dict:
    return {"seed": str(seed), "rng": METHOD}
