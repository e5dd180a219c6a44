import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalball.ballcov import cond_bcov_sq
from causalball.errors import SchemaError
from causalball.screening import (
    FeatureMatrix,
    q_nlogn,
    ranking,
    resolve_q,
    screen,
    screening_scores,
    select_top,
)


def _data(seed, n=60, p=12):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    d = rng.integers(0, 2, n)
    y = 3 * x[:, 0] - 2 * x[:, 1] + d + 0.3 * rng.normal(size=n)
    return x, y, d


def test_feature_matrix_validation():
    fm = FeatureMatrix.from_array(np.zeros((3, 2)))
    assert fm.names == ("X1", "X2") and fm.n == 3 and fm.p == 2
    with pytest.raises(SchemaError):
        FeatureMatrix(np.zeros((3, 2)), ("a", "a"))
    with pytest.raises(SchemaError):
        FeatureMatrix(np.zeros((3, 2)), ("a",))
    with pytest.raises(SchemaError):
        FeatureMatrix(np.zeros((3, 0)), ())
    with pytest.raises(SchemaError):
        FeatureMatrix(np.array([[1.0, np.inf]]), ("a", "b"))


def test_scores_match_direct_calls():
    x, y, d = _data(0)
    s = screening_scores(x, y, d)
    for j in range(x.shape[1]):
        assert s[j] == cond_bcov_sq(x[:, j], y, d)


def test_signal_columns_rank_first():
    x, y, d = _data(1, n=120, p=30)
    res = screen(x, y, d, q=2)
    assert set(res.selected) == {0, 1}
    assert res.selected_names in (["X1", "X2"], ["X2", "X1"])
    assert res.rank_of(0) <= 2


def test_ties_break_by_index():
    scores = np.array([0.1, 0.3, 0.3, 0.0, 0.3])
    assert ranking(scores).tolist() == [1, 2, 4, 0, 3]
    res = select_top(scores, 2)
    assert res.selected == (1, 2)


def test_q_larger_than_p():
    x, y, d = _data(2, p=5)
    res = screen(x, y, d, q=50)
    assert len(res.selected) == 5


def test_duplicate_columns_tie():
    x, y, d = _data(3)
    x = np.column_stack([x, x[:, 0]])
    s = screening_scores(x, y, d)
    assert s[0] == s[-1]


def test_q_rules():
    assert q_nlogn(300) == 52
    assert resolve_q("nlogn", 300) == 52
    assert resolve_q(7, 300) == 7
    with pytest.raises(SchemaError):
        resolve_q(0, 10)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8))
def test_threads_do_not_change_scores(seed, jobs):
    x, y, d = _data(seed, n=40, p=12)
    ref = screening_scores(x, y, d, n_jobs=1)
    assert np.array_equal(screening_scores(x, y, d, n_jobs=jobs), ref)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_column_permutation_equivariance(seed, q):
    rng = np.random.default_rng(seed)
    x, y, d = _data(int(seed % 1000), n=30, p=8)
    perm = rng.permutation(8)
    s = screening_scores(x, y, d)
    sp = screening_scores(x[:, perm], y, d)
    assert np.array_equal(sp, s[perm])
    rows = rng.permutation(30)
    assert np.array_equal(screening_scores(x[rows], y[rows], d[rows]), s)
    top = screen(x, y, d, q)
    assert len(top.selected) == q
    kept = s[list(top.selected)]
    assert kept.min() >= np.delete(s, list(top.selected)).max(initial=-1.0)
