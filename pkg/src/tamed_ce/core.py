"""Dense float64 matrices and seeded random streams.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. Randomness
comes from numpy's PCG64 bit generator; independent sub-streams are derived by
``SeedSequence`` spawn keys, so ``stream(seed, *keys)`` is reproducible across
platforms and never overlaps a stream with different keys.
"""
from __future__ import annotations

import numpy as np


class ContractError(ValueError):
    """An operation was called outside its precondition."""


def as_matrix(a, dtype=np.float64) -> np.ndarray:
    m = np.asarray(a, dtype=dtype)
    if m.ndim != 2:
        raise ContractError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    a = as_matrix(a, dtype=np.result_type(a.dtype, np.float64))
    b = as_matrix(b, dtype=np.result_type(b.dtype, np.float64))
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def rowwise_max_shift(m: np.ndarray) -> np.ndarray:
    """Subtract each row's maximum, so every row peaks at exactly 0."""
    if m.size == 0:
        raise ContractError("rowwise_max_shift needs a nonempty matrix")
    return m - m.max(axis=1, keepdims=True)


def argmax_rows(m: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index: lowest-class tie-break.
    return np.argmax(m, axis=1)


# Rng ------------------------------------------------------------------------

def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return the PCG64 generator for ``seed`` and the sub-stream path ``keys``.

    Two calls with equal arguments give identical streams; different key paths
    give statistically independent streams.
    """
    if seed < 0:
        raise ContractError(f"seed must be nonnegative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def split(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Fork ``n`` independent child generators off ``rng``."""
    return [np.random.Generator(bg) for bg in rng.bit_generator.spawn(n)]


def uniform_int(rng: np.random.Generator, n: int) -> int:
    if n < 1:
        raise ContractError(f"uniform_int needs n >= 1, got {n}")
    return int(rng.integers(n))
