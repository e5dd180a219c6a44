import numpy as np

from .errors import DegenerateDataError, SchemaError


def as_sample(x, name="x", min_len=2):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise SchemaError(f"{name} must be one-dimensional, got shape {a.shape}")
    if a.size < min_len:
        raise SchemaError(f"{name} needs at least {min_len} values, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise SchemaError(f"{name} contains non-finite values")
    return np.ascontiguousarray(a)


def as_arms(d, n=None, name="d"):
    a = np.asarray(d)
    if a.ndim != 1:
        raise SchemaError(f"{name} must be one-dimensional")
    if n is not None and a.size != n:
        raise SchemaError(f"{name} has length {a.size}, expected {n}")
    if a.dtype == bool:
        a = a.astype(np.int8)
    ok = (a == 0) | (a == 1)
    if not np.all(ok):
        bad = int(np.flatnonzero(~ok)[0])
        raise SchemaError(f"{name} must be binary 0/1; entry {bad} is {a[bad]!r}")
    return a.astype(np.int8)


def check_arm_sizes(d, minimum=2):
    n1 = int(d.sum())
    n0 = int(d.size - n1)
    if n1 < minimum or n0 < minimum:
        raise DegenerateDataError(
            f"degenerate treatment split: n1={n1}, n0={n0} (each arm needs >= {minimum})"
        )
    return n0, n1


def as_matrix(x, name="x", n=None):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise SchemaError(f"{name} must be two-dimensional, got shape {a.shape}")
    if n is not None and a.shape[0] != n:
        raise SchemaError(f"{name} has {a.shape[0]} rows, expected {n}")
    if not np.all(np.isfinite(a)):
        raise SchemaError(f"{name} contains non-finite values")
    return a
