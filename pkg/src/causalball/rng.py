"""Counter-based random streams for reproducible, order-independent simulation.

Every stream is Philox4x64-10 keyed by the 128-bit value ``(stream << 64) | seed``,
so run ``r`` of a study seeded with ``s`` always sees the same numbers no matter
which worker executes it, or in what order.

Uniforms are ``(u64 >> 11) * 2**-53`` (numpy's ``random()``); normals use the
Box-Muller transform on pairs of uniforms, which keeps the streams byte-stable
independent of numpy's ziggurat tables.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
METHOD = "philox4x64-10; key=(stream<<64)|seed; uniform=(u64>>11)*2^-53; normal=box-muller"

# reserved stream ids for pipeline internals
STREAM_CV = 1 << 40


def philox(seed: int, stream: int = 0) -> np.random.Generator:
    key = ((int(stream) & MASK64) << 64) | (int(seed) & MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def splitmix64(x: int) -> int:
    x = (int(x) + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def uniform(gen: np.random.Generator, low, high, size) -> np.ndarray:
    return low + (high - low) * gen.random(size)


def normal(gen: np.random.Generator, size) -> np.ndarray:
    count = int(np.prod(size))
    m = (count + 1) // 2
    u1 = 1.0 - gen.random(m)  # (0, 1]: log is finite
    u2 = gen.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * math.pi * u2
    z = np.empty(2 * m)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:count].reshape(size)
