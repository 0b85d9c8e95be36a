"""Dense symmetric linear algebra and matrix norms.

Matrices are plain ``numpy.ndarray`` objects. ``symmetrize`` is the single
entry point that enforces exact symmetry; everything downstream assumes it.
"""
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Tuple

import numpy as np

PIVOT_TOL = 1e-12


class NotPositiveDefinite(ValueError):
    """Raised when a Cholesky pivot falls to or below ``PIVOT_TOL``."""


def symmetrize(a) -> np.ndarray:
    """Return ``(A + A^T) / 2`` as a float array; the result is exactly symmetric."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return (a + a.T) / 2.0


def is_symmetric(a: np.ndarray) -> bool:
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.array_equal(a, a.T)


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns


def sym_eigen(a: np.ndarray) -> EigenDecomposition:
    if not is_symmetric(a):
        raise ValueError("sym_eigen requires an exactly symmetric matrix; call symmetrize first")
    w, v = np.linalg.eigh(a)
    return EigenDecomposition(w, v)


@dataclass(frozen=True)
class PdFactorization:
    dim: int
    factor: np.ndarray
    log_det: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def inverse(self) -> np.ndarray:
        if "inv" not in self._cache:
            eye = np.eye(self.dim)
            # invert the factor, then symmetrize to wash out rounding asymmetry
            linv = np.linalg.solve(self.factor, eye)
            self._cache["inv"] = symmetrize(linv.T @ linv)
        return self._cache["inv"]


def pd_factorize(a: np.ndarray) -> PdFactorization:
    """Cholesky factorization; doubles as the positive-definiteness test."""
    a = np.asarray(a, dtype=float)
    if not is_symmetric(a):
        raise ValueError("pd_factorize requires an exactly symmetric matrix")
    try:
        factor = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(factor) ** 2
    if a.shape[0] and pivots.min() <= PIVOT_TOL:
        raise NotPositiveDefinite(f"pivot {pivots.min():.3e} <= {PIVOT_TOL}")
    return PdFactorization(a.shape[0], factor, float(2.0 * np.sum(np.log(np.diag(factor)))))


def is_pd(a: np.ndarray) -> bool:
    try:
        pd_factorize(a)
    except NotPositiveDefinite:
        return False
    return True


Pair = Tuple[int, int]


def gamma_submatrix(sigma: np.ndarray, rows: Sequence[Pair], cols: Sequence[Pair]) -> np.ndarray:
    """Block of ``sigma ⊗ sigma`` indexed by (0-based) index pairs.

    Entry ``[(r1, r2), (c1, c2)]`` is ``sigma[r1, c1] * sigma[r2, c2]``. The
    full N^2 x N^2 matrix is never formed.
    """
    n = sigma.shape[0]
    r = np.asarray(rows, dtype=int).reshape(-1, 2)
    c = np.asarray(cols, dtype=int).reshape(-1, 2)
    for idx in (r, c):
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise IndexError(f"pair index out of range for dimension {n}")
    return sigma[np.ix_(r[:, 0], c[:, 0])] * sigma[np.ix_(r[:, 1], c[:, 1])]


class Norms(NamedTuple):
    elementwise_linf: float
    elementwise_l1: float
    op_linf: float
    spectral: float


def elementwise_linf(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def op_linf(a: np.ndarray) -> float:
    """Maximum absolute row sum."""
    return float(np.max(np.sum(np.abs(a), axis=1))) if a.size else 0.0


def norms(a: np.ndarray) -> Norms:
    a = np.asarray(a, dtype=float)
    if not a.size:
        return Norms(0.0, 0.0, 0.0, 0.0)
    spectral = float(np.linalg.norm(a, 2))
    return Norms(elementwise_linf(a), float(np.sum(np.abs(a))), op_linf(a), spectral)


def min_eigenvalue(a: np.ndarray) -> float:
    return float(sym_eigen(a).eigenvalues[0])
