import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalball.ballcov import (
    ArmCache,
    bcov_sq_definitional,
    bcov_sq_fast,
    cond_bcov_sq,
    delta_indicator,
)
from causalball.errors import DegenerateDataError, SchemaError

from oracles import bcov_delta_form, bcov_six_index, cond_bcov


def test_delta_examples():
    x = [0.0, 1.0, 2.0]
    assert delta_indicator(x, 0, 1, 2) == 0
    for i in range(3):
        for j in range(3):
            assert delta_indicator(x, i, j, i) == 1
            assert delta_indicator(x, i, j, j) == 1
    with pytest.raises(IndexError):
        delta_indicator(x, 0, 1, 3)


def test_pinned_n2():
    # 1/32, from the six-index oracle
    assert bcov_sq_definitional([1, 2], [1, 2]) == 0.03125
    assert bcov_sq_fast([1, 2], [1, 2]) == 0.03125


def test_pinned_n6():
    rng = np.random.default_rng(6)
    x, y = rng.normal(size=6), rng.normal(size=6)
    # 245/23328
    assert bcov_sq_definitional(x, y) == pytest.approx(245 / 23328, abs=1e-15)
    assert abs(bcov_sq_fast(x, y) - 245 / 23328) <= 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_definitional_matches_literal_six_index(seed):
    rng = np.random.default_rng(seed)
    n = 2 + seed % 4
    x, y = rng.integers(0, 3, n).astype(float), rng.normal(size=n)
    assert bcov_sq_definitional(x, y) == float(bcov_six_index(list(x), list(y)))


@pytest.mark.parametrize("seed", range(40))
def test_fast_matches_oracles(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(2, 11))
    if seed % 3:
        x, y = rng.normal(size=n), rng.normal(size=n)
    else:
        x, y = rng.integers(0, 3, n).astype(float), rng.integers(0, 2, n).astype(float)
    ref = float(bcov_delta_form(list(x), list(y)))
    assert abs(bcov_sq_fast(x, y) - ref) <= 1e-12
    assert abs(bcov_sq_definitional(x, y) - ref) <= 1e-12


def test_fast_matches_delta_form_larger_n():
    rng = np.random.default_rng(3)
    for n in (25, 40):
        x, y = rng.integers(0, 6, n).astype(float), rng.normal(size=n)
        assert abs(bcov_sq_fast(x, y) - float(bcov_delta_form(list(x), list(y)))) <= 1e-12


def test_constant_x_is_zero():
    assert bcov_sq_definitional([3, 3, 3, 3], [1, 5, 2, 0]) == 0.0
    assert bcov_sq_fast(np.full(50, 2.0), np.arange(50.0)) == 0.0


def test_errors():
    with pytest.raises(SchemaError):
        bcov_sq_fast([1.0, 2.0], [1.0])
    with pytest.raises(SchemaError):
        bcov_sq_fast([1.0], [1.0])
    with pytest.raises(SchemaError):
        bcov_sq_definitional(np.arange(13.0), np.arange(13.0))
    with pytest.raises(SchemaError):
        bcov_sq_fast([1.0, np.nan], [1.0, 2.0])


def test_conditional_examples():
    rng = np.random.default_rng(12)
    x, y = rng.normal(size=12), rng.normal(size=12)
    d = np.array([0, 1] * 6)
    b1 = bcov_sq_definitional(x[d == 1], y[d == 1])
    b0 = bcov_sq_definitional(x[d == 0], y[d == 0])
    assert abs(cond_bcov_sq(x, y, d) - (0.5 * b1 + 0.5 * b0)) <= 1e-12
    assert cond_bcov_sq(np.ones(12), y, d) == 0.0
    with pytest.raises(DegenerateDataError):
        cond_bcov_sq(x, y, np.ones(12, dtype=int))
    with pytest.raises(DegenerateDataError):
        cond_bcov_sq(x, y, np.r_[1, np.zeros(11, dtype=int)])


def test_arm_cache_matches_cond():
    rng = np.random.default_rng(4)
    y = rng.normal(size=80)
    d = rng.integers(0, 2, 80)
    cache = ArmCache(y, d)
    for _ in range(5):
        x = rng.normal(size=80)
        assert cache.score(x) == cond_bcov_sq(x, y, d)


def test_float_accumulation_path_agrees():
    from causalball.ballcov import _bcov_numerator, _y_intervals

    rng = np.random.default_rng(9)
    n = 300
    x, y = rng.normal(size=n), rng.integers(0, 20, n).astype(float)
    ypos, yint = _y_intervals(y)
    m = n + 1
    tt = np.empty(((m + 7) >> 3) * m * 8, dtype=np.int16)
    exact, _ = _bcov_numerator(x, ypos, yint, tt, True)
    _, approx = _bcov_numerator(x, ypos, yint, tt, False)
    assert approx == pytest.approx(float(exact), rel=1e-12)


samples = st.integers(2, 14).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(-4, 4), min_size=n, max_size=n),
        st.lists(st.integers(-4, 4), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
        st.randoms(use_true_random=False),
    )
)


@settings(max_examples=120, deadline=None)
@given(samples)
def test_permutation_invariance(args):
    x, y, d, r = args
    x, y, d = np.array(x, float), np.array(y, float), np.array(d)
    perm = list(range(len(x)))
    r.shuffle(perm)
    assert bcov_sq_fast(x[perm], y[perm]) == bcov_sq_fast(x, y)
    if min(d.sum(), (1 - d).sum()) >= 2:
        assert cond_bcov_sq(x[perm], y[perm], d[perm]) == cond_bcov_sq(x, y, d)


@settings(max_examples=120, deadline=None)
@given(samples, st.integers(-5, 5).filter(bool), st.integers(-10, 10),
       st.integers(-3, 3).filter(bool))
def test_affine_invariance(args, b, a, c):
    x, y, _, _ = args
    x, y = np.array(x, float), np.array(y, float)
    ref = bcov_sq_fast(x, y)
    assert abs(bcov_sq_fast(a + b * x, y) - ref) <= 1e-12
    assert abs(bcov_sq_fast(x, a + c * y) - ref) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 60))
def test_affine_invariance_continuous(seed, n):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=n), rng.normal(size=n)
    a, b = rng.normal(), rng.choice([-1, 1]) * rng.uniform(0.1, 10)
    assert abs(bcov_sq_fast(a + b * x, y) - bcov_sq_fast(x, y)) <= 1e-12


@settings(max_examples=150, deadline=None)
@given(samples)
def test_range_and_tie_determinism(args):
    x, y, _, _ = args
    x, y = np.array(x, float), np.array(y, float)
    v = bcov_sq_fast(x, y)
    assert 0.0 <= v <= 1.0
    assert bcov_sq_fast(x, y) == v
    if len(x) <= 10:
        assert abs(bcov_sq_definitional(x, y) - v) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(samples)
def test_conditional_decomposition(args):
    x, y, d, _ = args
    d = np.array(d)
    if min(d.sum(), (1 - d).sum()) < 2:
        with pytest.raises(DegenerateDataError):
            cond_bcov_sq(x, y, d)
        return
    assert abs(cond_bcov_sq(x, y, d) - float(cond_bcov(x, y, d))) <= 1e-12
