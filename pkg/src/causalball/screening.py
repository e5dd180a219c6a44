"""Conditional ball covariance screening of covariate columns."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validate import as_arms, as_matrix, as_sample
from .ballcov import ArmCache
from .errors import SchemaError

DEFAULT_Q = 30


@dataclass(frozen=True)
class FeatureMatrix:
    """An n x p covariate matrix (stored column-major) with unique column names."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        v = np.asfortranarray(as_matrix(self.values, "covariates"))
        names = tuple(str(c) for c in self.names)
        if len(names) != v.shape[1]:
            raise SchemaError(f"{len(names)} names for {v.shape[1]} columns")
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        if v.shape[1] < 1:
            raise SchemaError("need at least one covariate column")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_array(cls, values, prefix="X"):
        values = as_matrix(values, "covariates")
        return cls(values, tuple(f"{prefix}{j + 1}" for j in range(values.shape[1])))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def subset(self, cols) -> "FeatureMatrix":
        cols = list(cols)
        return FeatureMatrix(self.values[:, cols], tuple(self.names[j] for j in cols))


@dataclass(frozen=True)
class ScreenResult:
    scores: np.ndarray
    selected: tuple[int, ...]
    q: int
    names: tuple[str, ...] = field(default=())

    @property
    def selected_names(self) -> list[str]:
        return [self.names[j] for j in self.selected]

    @property
    def order(self) -> np.ndarray:
        return ranking(self.scores)

    def rank_of(self, j: int) -> int:
        """1-based rank of column ``j`` under the screening order."""
        return int(np.flatnonzero(self.order == j)[0]) + 1


def ranking(scores) -> np.ndarray:
    """Column indices by descending score, ties broken by ascending index."""
    scores = np.asarray(scores)
    # lexsort sorts by the last key first
    return np.lexsort((np.arange(scores.size), -scores))


def q_nlogn(n: int) -> int:
    return max(1, int(math.floor(n / math.log(n))))


def resolve_q(q, n: int) -> int:
    if q == "nlogn":
        return q_nlogn(n)
    q = int(q)
    if q < 1:
        raise SchemaError(f"q must be >= 1, got {q}")
    return q


def screening_scores(x, y, d, n_jobs=1) -> np.ndarray:
    """Conditional ball covariance of every column with ``y`` given ``d``."""
    values = x.values if isinstance(x, FeatureMatrix) else as_matrix(x, "covariates")
    y = as_sample(y, "y")
    if values.shape[0] != y.size:
        raise SchemaError(f"covariates have {values.shape[0]} rows, outcome has {y.size}")
    d = as_arms(d, y.size)
    cache = ArmCache(y, d)
    p = values.shape[1]
    scores = np.empty(p, dtype=np.float64)

    def work(cols):
        for j in cols:
            scores[j] = cache.score(values[:, j])

    if n_jobs is None or n_jobs <= 1 or p < 2:
        work(range(p))
    else:
        # kernels release the GIL; each worker writes a disjoint slice
        chunks = np.array_split(np.arange(p), min(p, 4 * n_jobs))
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            list(ex.map(work, chunks))
    return scores


def screen(x, y, d, q=DEFAULT_Q, n_jobs=1) -> ScreenResult:
    """Keep the ``q`` columns with the largest conditional ball covariance."""
    if not isinstance(x, FeatureMatrix):
        x = FeatureMatrix.from_array(x)
    q = resolve_q(q, x.n)
    scores = screening_scores(x, y, d, n_jobs=n_jobs)
    return select_top(scores, q, x.names)


def select_top(scores, q: int, names=()) -> ScreenResult:
    order = ranking(scores)
    k = min(q, order.size)
    return ScreenResult(
        scores=np.asarray(scores),
        selected=tuple(int(j) for j in order[:k]),
        q=q,
        names=tuple(names),
    )
