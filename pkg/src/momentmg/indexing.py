"""Multi-index bookkeeping for the truncated Hermite expansion.

Coefficient arrays are stored densely in graded lexicographic order: indices
are sorted by total degree ``|alpha|`` first and, within a degree, by
descending lexicographic order on ``(a1, a2, a3)``, so the layout starts
``(0,0,0), (1,0,0), (0,1,0), (0,0,1), (2,0,0), (1,1,0), ...``.  All modules
share this ordering; it fixes the Jacobian layout and the CSV/file formats.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MultiIndex = tuple[int, int, int]


def space_size(order: int) -> int:
    """Number of multi-indices with ``|alpha| <= order``, i.e. C(order+3, 3)."""
    return math.comb(order + 3, 3)


def enumerate_indices(order: int) -> list[MultiIndex]:
    """All multi-indices with ``|alpha| <= order`` in graded lexicographic order."""
    if order < 0:
        raise ValueError(f"order must be non-negative, got {order}")
    out: list[MultiIndex] = []
    for total in range(order + 1):
        for a1 in range(total, -1, -1):
            for a2 in range(total - a1, -1, -1):
                out.append((a1, a2, total - a1 - a2))
    return out


@dataclass(frozen=True)
class IndexTables:
    """Precomputed index arrays shared by the compiled kernels.

    ``up[d, k]`` / ``down[d, k]`` hold the offset of ``alpha +- e_d`` (or -1
    when the shifted index leaves the truncated set; raising past ``|alpha| =
    order`` is what realizes the hyperbolic truncation in the transport
    operator).  ``special`` packs the frequently needed low-order offsets in
    the order ``e1, e2, e3, 2e1, 2e2, 2e3, e1+e2, e1+e3, e2+e3``.
    """

    order: int
    size: int
    alphas: np.ndarray      # (n, 3) int64
    degree: np.ndarray      # (n,) int64
    factorial: np.ndarray   # (n,) float64, alpha!
    up: np.ndarray          # (3, n) int64
    down: np.ndarray        # (3, n) int64
    parity: np.ndarray      # (n,) float64, (-1)**a1
    axis1: np.ndarray       # (order+1,) offsets of (k, 0, 0)
    canon: np.ndarray       # (n,) smallest d with alpha_d > 0, -1 for alpha=0
    special: np.ndarray     # (9,) int64

    def offset(self, alpha: MultiIndex) -> int:
        """Position of ``alpha`` in the graded-lexicographic layout."""
        a1, a2, a3 = alpha
        if min(a1, a2, a3) < 0 or a1 + a2 + a3 > self.order:
            raise ValueError(f"multi-index {alpha} outside order-{self.order} space")
        return int(self._lookup[a1, a2, a3])

    @property
    def _lookup(self) -> np.ndarray:
        return _lookup_table(self.order)


@lru_cache(maxsize=None)
def _lookup_table(order: int) -> np.ndarray:
    table = np.full((order + 1,) * 3, -1, dtype=np.int64)
    for k, alpha in enumerate(enumerate_indices(order)):
        table[alpha] = k
    return table


@lru_cache(maxsize=None)
def tables(order: int) -> IndexTables:
    """Build (and cache) the index tables for a given truncation order."""
    idx = enumerate_indices(order)
    n = len(idx)
    lookup = _lookup_table(order)

    alphas = np.array(idx, dtype=np.int64)
    degree = alphas.sum(axis=1)
    factorial = np.array(
        [math.factorial(a1) * math.factorial(a2) * math.factorial(a3) for a1, a2, a3 in idx],
        dtype=np.float64,
    )
    up = np.full((3, n), -1, dtype=np.int64)
    down = np.full((3, n), -1, dtype=np.int64)
    for k, (a1, a2, a3) in enumerate(idx):
        a = (a1, a2, a3)
        for d in range(3):
            if a1 + a2 + a3 + 1 <= order:
                shifted = tuple(a[j] + (j == d) for j in range(3))
                up[d, k] = lookup[shifted]
            if a[d] > 0:
                shifted = tuple(a[j] - (j == d) for j in range(3))
                down[d, k] = lookup[shifted]
    parity = np.where(alphas[:, 0] % 2 == 0, 1.0, -1.0)
    axis1 = np.array([lookup[k, 0, 0] for k in range(order + 1)], dtype=np.int64)
    canon = np.full(n, -1, dtype=np.int64)
    for k, a in enumerate(idx):
        for d in range(3):
            if a[d] > 0:
                canon[k] = d
                break
    special = np.array(
        [
            lookup[1, 0, 0], lookup[0, 1, 0], lookup[0, 0, 1],
            lookup[2, 0, 0], lookup[0, 2, 0], lookup[0, 0, 2],
            lookup[1, 1, 0], lookup[1, 0, 1], lookup[0, 1, 1],
        ],
        dtype=np.int64,
    )
    for arr in (alphas, degree, factorial, up, down, parity, axis1, canon, special):
        arr.setflags(write=False)
    return IndexTables(
        order=order, size=n, alphas=alphas, degree=degree, factorial=factorial,
        up=up, down=down, parity=parity, axis1=axis1, canon=canon, special=special,
    )
