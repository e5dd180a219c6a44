"""Empirical ball covariance for univariate samples, with a treatment-conditional form.

Two routes compute the same quantity:

* ``bcov_sq_definitional`` evaluates the six-index sum literally (O(n^6)); it is
  the oracle, guarded to tiny n.
* ``bcov_sq_fast`` uses the factorisation
  ``xi^X_{ij,klst} = (a_k - a_t)(a_l - a_s) / 2`` with ``a_k = delta^X_{ij,k}``,
  which collapses the inner four-index sum to
  ``(Delta^XY_ij - Delta^X_ij Delta^Y_ij)^2``. The per-pair counts come from a
  two-pointer sweep over sorted values and a 2D prefix-count table, giving
  O(n^2) work per sample after sorting.

Balls are closed (``|x_k - x_i| <= |x_j - x_i|``). Both routes accumulate
integers, so results are exact under permutation of the units.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._validate import as_arms, as_sample, check_arm_sizes
from .errors import SchemaError

DEFINITIONAL_MAX_N = 12

# Above this the integer numerator (<= n^6 / 16) could overflow int64.
_EXACT_MAX_N = 2200


def delta_indicator(x, i: int, j: int, k: int) -> int:
    """1 if ``x[k]`` lies in the closed ball centred at ``x[i]`` through ``x[j]``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    for idx in (i, j, k):
        if not -n <= idx < n:
            raise IndexError(f"index {idx} out of range for sample of length {n}")
    return int(abs(x[k] - x[i]) <= abs(x[j] - x[i]))


@njit(cache=True, nogil=True)
def _six_loop(x, y):
    n = x.shape[0]
    dx = np.empty(n, dtype=np.int64)
    dy = np.empty(n, dtype=np.int64)
    total = 0
    for i in range(n):
        for j in range(n):
            rx = abs(x[j] - x[i])
            ry = abs(y[j] - y[i])
            for k in range(n):
                dx[k] = 1 if abs(x[k] - x[i]) <= rx else 0
                dy[k] = 1 if abs(y[k] - y[i]) <= ry else 0
            for k in range(n):
                for l in range(n):
                    for s in range(n):
                        for t in range(n):
                            # 2 * xi, kept integral
                            ax = dx[k] * dx[l] + dx[s] * dx[t] - dx[k] * dx[s] - dx[l] * dx[t]
                            ay = dy[k] * dy[l] + dy[s] * dy[t] - dy[k] * dy[s] - dy[l] * dy[t]
                            total += ax * ay
    return total


def bcov_sq_definitional(x, y) -> float:
    """Squared empirical ball covariance by the literal six-index sum.

    Only for ``n <= 12``; intended as a reference for :func:`bcov_sq_fast`.
    """
    x = as_sample(x, "x")
    y = as_sample(y, "y")
    if x.size != y.size:
        raise SchemaError(f"length mismatch: {x.size} vs {y.size}")
    n = x.size
    if n > DEFINITIONAL_MAX_N:
        raise SchemaError(f"definitional oracle limited to n <= {DEFINITIONAL_MAX_N}, got {n}")
    total = int(_six_loop(x, y))
    # total counts 4 * xi^X * xi^Y
    return total / (4.0 * float(n) ** 6)


@njit(cache=True, nogil=True)
def _positions(v):
    order = np.argsort(v, kind="mergesort")
    pos = np.empty(v.shape[0], dtype=np.int64)
    for q in range(v.shape[0]):
        pos[order[q]] = q
    return order, pos


@njit(cache=True, nogil=True)
def _tie_blocks(vs):
    n = vs.shape[0]
    tstart = np.empty(n, dtype=np.int64)
    tend = np.empty(n, dtype=np.int64)
    for q in range(n):
        tstart[q] = tstart[q - 1] if q > 0 and vs[q] == vs[q - 1] else q
    for q in range(n - 1, -1, -1):
        tend[q] = tend[q + 1] if q < n - 1 and vs[q] == vs[q + 1] else q
    return tstart, tend


@njit(cache=True, nogil=True)
def _y_intervals(y):
    # yint[i, j] = half-open sorted-position range [lo, hi) of the closed ball
    # centred at y_i through y_j.
    n = y.shape[0]
    order, pos = _positions(y)
    ys = y[order]
    tstart, tend = _tie_blocks(ys)
    yint = np.empty((n, n, 2), dtype=np.int32)
    for i in range(n):
        p = pos[i]
        c = ys[p]
        b = tstart[p]
        for q in range(p, n):
            r = ys[q] - c
            while b > 0 and c - ys[b - 1] <= r:
                b -= 1
            j = order[q]
            yint[i, j, 0] = b
            yint[i, j, 1] = tend[q] + 1
        a = tend[p]
        for q in range(p - 1, -1, -1):
            r = c - ys[q]
            while a + 1 < n and ys[a + 1] - c <= r:
                a += 1
            j = order[q]
            yint[i, j, 0] = tstart[q]
            yint[i, j, 1] = a + 1
    return pos, yint


@njit(cache=True, nogil=True)
def _fill_table(xpos, ypos, out):
    # Prefix counts table[a, b] = #{k : xpos_k < a, ypos_k < b}, stored in 8-row
    # tiles so the two rows touched per lookup share cache lines.
    n = xpos.shape[0]
    m = n + 1
    dense = np.zeros((m, m), dtype=np.int32)
    for k in range(n):
        dense[xpos[k] + 1, ypos[k] + 1] = 1
    for a in range(1, m):
        for b in range(1, m):
            dense[a, b] += dense[a, b - 1]
    for a in range(1, m):
        for b in range(m):
            dense[a, b] += dense[a - 1, b]
    for a in range(m):
        base = (a >> 3) * m * 8 + (a & 7)
        for b in range(m):
            out[base + b * 8] = dense[a, b]


@njit(cache=True, nogil=True)
def _bcov_numerator(x, ypos, yint, tt, exact):
    # Sum over (i, j) of (n * c_xy - c_x * c_y)^2, as (int total, float total).
    n = x.shape[0]
    m = n + 1
    order, pos = _positions(x)
    xs = x[order]
    tstart, tend = _tie_blocks(xs)
    _fill_table(pos, ypos, tt)
    itotal = 0
    ftotal = 0.0
    for i in range(n):
        p = pos[i]
        c = xs[p]
        yi = yint[i]
        # right of the anchor: the far x-endpoint is the end of q's tie block
        b = tstart[p]
        for q in range(p, n):
            r = xs[q] - c
            while b > 0 and c - xs[b - 1] <= r:
                b -= 1
            a1 = tend[q] + 1
            j = order[q]
            b0 = yi[j, 0]
            b1 = yi[j, 1]
            r0 = (b >> 3) * m * 8 + (b & 7)
            r1 = (a1 >> 3) * m * 8 + (a1 & 7)
            cxy = np.int64(tt[r1 + b1 * 8]) - tt[r0 + b1 * 8] - tt[r1 + b0 * 8] + tt[r0 + b0 * 8]
            t = n * cxy - (a1 - b) * (b1 - b0)
            if exact:
                itotal += t * t
            else:
                ftotal += float(t) * float(t)
        # left of the anchor
        a = tend[p]
        for q in range(p - 1, -1, -1):
            r = c - xs[q]
            while a + 1 < n and xs[a + 1] - c <= r:
                a += 1
            a0 = tstart[q]
            a1 = a + 1
            j = order[q]
            b0 = yi[j, 0]
            b1 = yi[j, 1]
            r0 = (a0 >> 3) * m * 8 + (a0 & 7)
            r1 = (a1 >> 3) * m * 8 + (a1 & 7)
            cxy = np.int64(tt[r1 + b1 * 8]) - tt[r0 + b1 * 8] - tt[r1 + b0 * 8] + tt[r0 + b0 * 8]
            t = n * cxy - (a1 - a0) * (b1 - b0)
            if exact:
                itotal += t * t
            else:
                ftotal += float(t) * float(t)
    return itotal, ftotal


def _bcov_from_arrays(x, y_cache, n):
    ypos, yint = y_cache
    exact = n <= _EXACT_MAX_N
    m = n + 1
    tt = np.empty(((m + 7) >> 3) * m * 8, dtype=np.int16 if n < 32767 else np.int32)
    itotal, ftotal = _bcov_numerator(x, ypos, yint, tt, exact)
    total = float(itotal) if exact else ftotal
    return total / float(n) ** 6


def bcov_sq_fast(x, y) -> float:
    """Squared empirical ball covariance in O(n^2) per sample.

    Numerically identical (to rounding of the final division) to
    :func:`bcov_sq_definitional`.
    """
    x = as_sample(x, "x")
    y = as_sample(y, "y")
    if x.size != y.size:
        raise SchemaError(f"length mismatch: {x.size} vs {y.size}")
    return _bcov_from_arrays(x, _y_intervals(y), x.size)


def _split_arms(d):
    idx1 = np.flatnonzero(d == 1)
    idx0 = np.flatnonzero(d == 0)
    return idx0, idx1


def cond_bcov_sq(x, y, d) -> float:
    """Arm-weighted ball covariance ``w * B_1 + (1 - w) * B_0`` with ``w = n_1 / n``.

    Raises :class:`~causalball.errors.DegenerateDataError` when either arm has
    fewer than two units.
    """
    x = as_sample(x, "x")
    y = as_sample(y, "y")
    if x.size != y.size:
        raise SchemaError(f"length mismatch: {x.size} vs {y.size}")
    d = as_arms(d, x.size)
    n0, n1 = check_arm_sizes(d)
    idx0, idx1 = _split_arms(d)
    b1 = _bcov_from_arrays(x[idx1], _y_intervals(y[idx1]), n1)
    b0 = _bcov_from_arrays(x[idx0], _y_intervals(y[idx0]), n0)
    w = n1 / x.size
    return w * b1 + (1.0 - w) * b0


class ArmCache:
    """Precomputed outcome-side ball ranges for both arms, reused across columns."""

    def __init__(self, y, d):
        y = as_sample(y, "y")
        d = as_arms(d, y.size)
        self.n0, self.n1 = check_arm_sizes(d)
        self.n = y.size
        self.idx0, self.idx1 = _split_arms(d)
        self.y0 = _y_intervals(y[self.idx0])
        self.y1 = _y_intervals(y[self.idx1])
        self.omega = self.n1 / self.n

    def score(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        b1 = _bcov_from_arrays(np.ascontiguousarray(x[self.idx1]), self.y1, self.n1)
        b0 = _bcov_from_arrays(np.ascontiguousarray(x[self.idx0]), self.y0, self.n0)
        return self.omega * b1 + (1.0 - self.omega) * b0
