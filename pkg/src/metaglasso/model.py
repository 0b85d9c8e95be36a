"""Precision matrices, supports, samples and the recovery predicates."""
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Sequence, Tuple

import numpy as np

from .matops import pd_factorize, symmetrize

DEFAULT_TAU = 1e-6

Pair = Tuple[int, int]


class PrecisionMatrix:
    """Symmetric positive-definite matrix. Construction symmetrizes and checks PD."""

    def __init__(self, matrix):
        m = symmetrize(matrix)
        self._fact = pd_factorize(m)
        m.setflags(write=False)
        self.matrix = m

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return self._fact.inverse

    @property
    def log_det(self) -> float:
        return self._fact.log_det

    @property
    def cholesky(self) -> np.ndarray:
        return self._fact.factor

    def support(self, tau: float = 0.0) -> "SupportSet":
        return support_of(self.matrix, tau)

    def __repr__(self):
        return f"PrecisionMatrix(n={self.n})"


@dataclass(frozen=True)
class SupportSet:
    """Symmetric set of 0-based index pairs."""

    n: int
    pairs: FrozenSet[Pair]

    def __post_init__(self):
        pairs = frozenset((int(i), int(j)) for i, j in self.pairs)
        for i, j in pairs:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise IndexError(f"pair {(i, j)} out of range for n={self.n}")
            if (j, i) not in pairs:
                raise ValueError(f"support is not symmetric: {(i, j)} present without {(j, i)}")
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[Pair], symmetric_closure: bool = False) -> "SupportSet":
        pairs = set(pairs)
        if symmetric_closure:
            pairs |= {(j, i) for i, j in pairs}
        return cls(n, frozenset(pairs))

    @classmethod
    def diagonal(cls, n: int) -> "SupportSet":
        return cls(n, frozenset((i, i) for i in range(n)))

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "SupportSet":
        rows, cols = np.nonzero(mask)
        return cls(mask.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))

    def off(self) -> "SupportSet":
        return SupportSet(self.n, frozenset(p for p in self.pairs if p[0] != p[1]))

    def with_diagonal(self) -> "SupportSet":
        return SupportSet(self.n, self.pairs | {(i, i) for i in range(self.n)})

    def mask(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), dtype=bool)
        if self.pairs:
            idx = np.array(sorted(self.pairs))
            m[idx[:, 0], idx[:, 1]] = True
        return m

    def sorted_pairs(self):
        return sorted(self.pairs)

    def complement(self) -> "SupportSet":
        return SupportSet.from_mask(~self.mask())

    def __len__(self):
        return len(self.pairs)

    def __contains__(self, pair):
        return tuple(pair) in self.pairs

    def __le__(self, other: "SupportSet") -> bool:
        return self.n == other.n and self.pairs <= other.pairs

    def __or__(self, other: "SupportSet") -> "SupportSet":
        return support_union([self, other])


@dataclass(frozen=True)
class SampleSet:
    """Zero-mean samples stored as an (n, dim) array."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim == 1:
            rows = rows[None, :]
        if rows.ndim != 2:
            raise ValueError("samples must be a 2-D array")
        if not np.all(np.isfinite(rows)):
            raise ValueError("samples contain non-finite values")
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    n_samples: int
    weight: float = 1.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def empirical_covariance(samples: SampleSet, weight: float = 1.0) -> CovarianceEstimate:
    """Uncentered second moment ``(1/n) sum_t x_t x_t^T``; the model is zero-mean."""
    if samples.n < 1:
        raise ValueError("empirical_covariance needs at least one sample")
    x = samples.rows
    return CovarianceEstimate(symmetrize(x.T @ x / samples.n), samples.n, weight)


def support_of(omega: np.ndarray, tau: float = DEFAULT_TAU) -> SupportSet:
    if tau < 0:
        raise ValueError("tau must be non-negative")
    omega = np.asarray(omega)
    return SupportSet.from_mask(np.abs(omega) > tau)


def thresholded_sign(a: np.ndarray, tau: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.where(np.abs(a) > tau, np.sign(a), 0.0)


def sign_consistent(estimate: np.ndarray, truth: np.ndarray, tau: float = DEFAULT_TAU) -> bool:
    """Entrywise sign agreement, with magnitudes at or below ``tau`` counted as zero.

    The truth is compared by exact sign so a true nonzero below ``tau`` is
    still required to be recovered.
    """
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValueError(f"dimension mismatch: {estimate.shape} vs {truth.shape}")
    return bool(np.array_equal(thresholded_sign(estimate, tau), np.sign(truth)))


def support_union(supports: Sequence[SupportSet]) -> SupportSet:
    if not supports:
        raise ValueError("need at least one support")
    n = supports[0].n
    if any(s.n != n for s in supports):
        raise ValueError("dimension mismatch in support_union")
    pairs = frozenset().union(*(s.pairs for s in supports))
    return SupportSet(n, pairs)


def degree(omega: np.ndarray, tau: float = 0.0) -> int:
    """Largest row-support size, diagonal included."""
    return int(np.max(np.sum(np.abs(omega) > tau, axis=1)))
