"""Permutation enumeration and dense Levi-Civita symbols (sizes up to 6)."""
from __future__ import annotations

from functools import lru_cache
from itertools import permutations, product

import numpy as np


def permutation_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, cycle = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            cycle += 1
        if cycle % 2 == 0:
            sign = -sign
    return sign


@lru_cache(maxsize=None)
def permutations_with_sign(k: int) -> tuple[tuple[tuple[int, ...], int], ...]:
    return tuple((p, permutation_sign(p)) for p in permutations(range(k)))


@lru_cache(maxsize=None)
def levi_civita(k: int) -> np.ndarray:
    """Dense symbol with eps[0, 1, ..., k-1] = +1, shape (k,)*k."""
    eps = np.zeros((k,) * k)
    for p, s in permutations_with_sign(k):
        eps[p] = s
    eps.setflags(write=False)
    return eps


@lru_cache(maxsize=None)
def multi_indices(m: int, length: int) -> tuple[tuple[int, ...], ...]:
    """Ordered tuples over range(m) of the given length (the empty tuple for length 0)."""
    return tuple(product(range(m), repeat=length))
