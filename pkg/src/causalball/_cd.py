"""Covariance-update coordinate descent shared by the Lasso and the IRLS inner loop.

Minimises ``0.5 * b'Gb - c'b + sum_j pen_j |b_j|`` given the Gram matrix ``G``
and linear term ``c``. ``pen_j = inf`` pins ``b_j`` at zero.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def soft_threshold(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True, nogil=True)
def quad_objective(G, c, b, pen):
    q = b.shape[0]
    val = 0.0
    for j in range(q):
        if b[j] != 0.0:
            s = 0.0
            for k in range(q):
                s += G[j, k] * b[k]
            val += 0.5 * b[j] * s - c[j] * b[j] + pen[j] * abs(b[j])
    return val


@njit(cache=True, nogil=True)
def cd_gram(G, c, b, pen, tol, max_sweeps, history):
    """In-place cyclic descent on ``b``; returns (sweeps, converged).

    ``history`` (length >= max_sweeps + 1, or length 0 to skip) receives the
    objective before the first sweep and after each sweep.
    """
    q = b.shape[0]
    # gradient residual g = c - G b
    g = c.copy()
    for j in range(q):
        if b[j] != 0.0:
            for k in range(q):
                g[k] -= G[k, j] * b[j]
    record = history.shape[0] > 0
    if record:
        history[0] = quad_objective(G, c, b, pen)
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        sweeps += 1
        dmax = 0.0
        for j in range(q):
            gjj = G[j, j]
            if gjj <= 0.0 or np.isinf(pen[j]):
                continue
            old = b[j]
            z = g[j] + gjj * old
            new = soft_threshold(z, pen[j]) / gjj
            if new != old:
                delta = new - old
                for k in range(q):
                    g[k] -= G[k, j] * delta
                b[j] = new
                if abs(delta) > dmax:
                    dmax = abs(delta)
        if record:
            history[sweeps] = quad_objective(G, c, b, pen)
        if dmax < tol:
            converged = True
            break
    return sweeps, converged
