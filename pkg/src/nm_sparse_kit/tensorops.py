"""Dense 2-D matrix utilities and the N:M pattern type.

Everything downstream (mask generation, permutation search, training)
works on plain float64 numpy arrays validated through :func:`matrix`.
Operations never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def matrix(values) -> np.ndarray:
    """Validate ``values`` as a finite 2-D real matrix and return it as float64.

    Rejects anything that is not two-dimensional, has an empty axis, or
    contains NaN/Inf. Returns a C-contiguous (row-major) array.
    """
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got {a.ndim} dimension(s)")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"matrix dimensions must be positive, got {a.shape}")
    if not np.isfinite(a).all():
        bad = int(np.count_nonzero(~np.isfinite(a)))
        raise ValueError(f"matrix contains {bad} non-finite entries (NaN/Inf rejected)")
    return np.ascontiguousarray(a)


@dataclass(frozen=True)
class NmPattern:
    """An N:M sparsity pattern: keep at most ``n`` of every ``m`` consecutive entries."""

    n: int
    m: int

    def __post_init__(self):
        if not isinstance(self.n, int) or not isinstance(self.m, int):
            raise ValueError(f"pattern needs integer n and m, got ({self.n!r}, {self.m!r})")
        if self.m < 2:
            raise ValueError(f"pattern m must be >= 2, got {self.m}")
        if not 1 <= self.n <= self.m:
            raise ValueError(f"pattern requires 1 <= n <= m, got {self.n}:{self.m}")

    @classmethod
    def parse(cls, text: str) -> "NmPattern":
        """Parse the ``N:M`` spelling used on the command line, e.g. ``2:4``."""
        parts = text.strip().split(":")
        if len(parts) != 2:
            raise ValueError(f"pattern must look like N:M, got {text!r}")
        try:
            n, m = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"pattern must look like N:M with integers, got {text!r}") from None
        return cls(n, m)

    def __str__(self) -> str:
        return f"{self.n}:{self.m}"


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit conformance check."""
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: left is {a.shape[0]}x{a.shape[1]}, "
            f"right is {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def transpose(a: np.ndarray) -> np.ndarray:
    """Transposed copy; applying it twice is bit-identical to the input."""
    return np.ascontiguousarray(a.T)


def top_n_threshold(block, n: int) -> float:
    """The n-th largest value of ``block`` under descending sort, ties counted.

    ``block`` holds absolute magnitudes. Used as the keep/drop threshold of
    the per-block top-N rule.
    """
    values = np.asarray(block, dtype=np.float64).ravel()
    if not 1 <= n <= values.size:
        raise ValueError(f"top-n rank {n} out of range for block of length {values.size}")
    return float(np.sort(values)[::-1][n - 1])


# Plain-text serialization: header line "rows cols", one whitespace-separated
# row per line. %.17g keeps float64 round-trips exact.

def format_matrix(a: np.ndarray) -> str:
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    for row in a:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty matrix text")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"matrix header must be 'rows cols', got {lines[0]!r}")
    rows, cols = int(header[0]), int(header[1])
    if len(lines) - 1 != rows:
        raise ValueError(f"matrix text declares {rows} rows but has {len(lines) - 1}")
    data = []
    for i, line in enumerate(lines[1:]):
        entries = line.split()
        if len(entries) != cols:
            raise ValueError(f"row {i} has {len(entries)} entries, expected {cols}")
        data.append([float(e) for e in entries])
    return matrix(data)


def save_matrix(path, a: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(format_matrix(a))


def load_matrix(path) -> np.ndarray:
    with open(path) as fh:
        return parse_matrix(fh.read())
