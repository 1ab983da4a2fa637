"""Row-permutation search that maximizes eligible N:M column blocks.

A column block is eligible when it already holds at most N non-zeros, so the
backward mask can match the forward mask there with no gradient loss. The
search evaluates the incumbent permutation plus K random candidates and keeps
the best, which makes the eligible count monotone across updates.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from math import factorial

import numpy as np

from .tensorops import NmPattern, matrix

# brute force enumerates rows! candidates; 8! = 40320 is the practical ceiling
BRUTE_FORCE_MAX_ROWS = 8


def identity_permutation(rows: int) -> np.ndarray:
    return np.arange(rows, dtype=np.int64)


def check_permutation(perm, rows: int) -> np.ndarray:
    """Validate a bijection over {0, ..., rows-1} and return it as int64."""
    p = np.asarray(perm, dtype=np.int64)
    if p.shape != (rows,) or not np.array_equal(np.sort(p), np.arange(rows)):
        raise ValueError(f"not a permutation of {rows} row indices: {perm!r}")
    return p


@dataclass
class SearchReport:
    """Outcome of one permutation search."""

    chosen: np.ndarray
    eligible_blocks: int
    total_blocks: int
    candidates_evaluated: int
    elapsed: float

    def csv_row(self) -> str:
        perm = " ".join(str(int(i)) for i in self.chosen)
        return (
            f"{self.eligible_blocks},{self.total_blocks},"
            f"{self.candidates_evaluated},{self.elapsed!r},{perm}"
        )


def count_eligible_blocks(masked_w: np.ndarray, pattern: NmPattern) -> tuple[int, int]:
    """(eligible, total) column-aligned M-blocks of an already-masked matrix."""
    masked_w = matrix(masked_w)
    n, m = pattern.n, pattern.m
    rows, cols = masked_w.shape
    if rows % m:
        raise ValueError(f"matrix rows ({rows}) must be divisible by block size {m}")
    nonzeros = (masked_w != 0).reshape(rows // m, m, cols).sum(axis=1)
    return int((nonzeros <= n).sum()), int(nonzeros.size)


def _eligible_under(masked_w: np.ndarray, perm: np.ndarray, n: int, m: int) -> int:
    rows = masked_w.shape[0]
    nonzeros = (masked_w[perm] != 0).reshape(rows // m, m, -1).sum(axis=1)
    return int((nonzeros <= n).sum())


def search_permutation(
    masked_w: np.ndarray,
    pattern: NmPattern,
    k: int,
    current=None,
    seed: int | None = None,
) -> SearchReport:
    """Best of the incumbent plus k random row permutations.

    Ties go to the incumbent, then to the earlier candidate, so the chosen
    permutation never has fewer eligible blocks than ``current``. Passing
    k >= rows! (rows small enough to enumerate) switches the candidates to an
    exhaustive sweep of all permutations, which makes the search exact.
    """
    if k < 1:
        raise ValueError(f"candidate count k must be >= 1, got {k}")
    masked_w = matrix(masked_w)
    n, m = pattern.n, pattern.m
    rows, cols = masked_w.shape
    if rows % m:
        raise ValueError(f"matrix rows ({rows}) must be divisible by block size {m}")
    current = identity_permutation(rows) if current is None else check_permutation(current, rows)

    start = time.perf_counter()
    best = current
    best_count = _eligible_under(masked_w, current, n, m)
    total = (rows // m) * cols

    exhaustive = rows <= BRUTE_FORCE_MAX_ROWS and k >= factorial(rows)
    if exhaustive:
        candidates = (np.array(p, dtype=np.int64) for p in itertools.permutations(range(rows)))
        evaluated = factorial(rows) + 1
    else:
        rng = np.random.default_rng(seed)
        candidates = (rng.permutation(rows) for _ in range(k))
        evaluated = k + 1

    for cand in candidates:
        count = _eligible_under(masked_w, cand, n, m)
        if count > best_count:
            best, best_count = cand, count
    elapsed = time.perf_counter() - start
    return SearchReport(best, best_count, total, evaluated, elapsed)


def brute_force_best_permutation(masked_w: np.ndarray, pattern: NmPattern) -> SearchReport:
    """Exact argmax over all rows! permutations; guarded to rows <= 8.

    Ties return the first maximizer in lexicographic enumeration order.
    """
    masked_w = matrix(masked_w)
    n, m = pattern.n, pattern.m
    rows, cols = masked_w.shape
    if rows > BRUTE_FORCE_MAX_ROWS:
        raise ValueError(
            f"brute force enumerates rows! permutations and is only feasible "
            f"for rows <= {BRUTE_FORCE_MAX_ROWS}, got {rows}"
        )
    if rows % m:
        raise ValueError(f"matrix rows ({rows}) must be divisible by block size {m}")

    start = time.perf_counter()
    best = None
    best_count = -1
    for cand in itertools.permutations(range(rows)):
        count = _eligible_under(masked_w, np.array(cand, dtype=np.int64), n, m)
        if count > best_count:
            best, best_count = np.array(cand, dtype=np.int64), count
    elapsed = time.perf_counter() - start
    total = (rows // m) * cols
    return SearchReport(best, best_count, total, factorial(rows), elapsed)
