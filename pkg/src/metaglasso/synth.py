"""Seeded generators: Erdos-Renyi task families, Gaussian samples and the
two hard-instance ensembles used by the lower bounds.

Every generator is a pure function of its parameters and seed. Draws are
taken from keyed substreams (see :mod:`metaglasso.rng`), so generating more
tasks does not change the draws of earlier tasks.
"""
import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import rng
from .matops import min_eigenvalue, symmetrize
from .model import PrecisionMatrix, SampleSet, SupportSet, support_of


@dataclass(frozen=True)
class TaskFamilySpec:
    N: int
    K: int
    n: int
    n_novel: int = 0
    d: float = 3
    keep_prob: float = 0.9
    min_eig: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.N < 2 or self.K < 1 or self.n < 1 or self.n_novel < 0:
            raise ValueError(f"invalid family sizes: {self}")
        if not 0 < self.keep_prob <= 1:
            raise ValueError("keep_prob must lie in (0, 1]")
        if self.min_eig <= 0:
            raise ValueError("min_eig must be positive")
        if not 1 <= self.d <= self.N - 1:
            raise ValueError("d must lie in [1, N-1]")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class GeneratedFamily:
    spec: TaskFamilySpec
    common: PrecisionMatrix
    support: SupportSet
    tasks: Tuple[PrecisionMatrix, ...]
    novel: PrecisionMatrix


@dataclass(frozen=True)
class FanoInstance:
    kind: str  # "cycle-union" or "subset-novel"
    omega: PrecisionMatrix
    edges: SupportSet
    q: np.ndarray
    permutation: Optional[List[int]] = None


def _upper_pairs(n: int):
    return np.triu_indices(n, k=1)


def _symmetric_uniform(g: np.random.Generator, n: int, bound: float) -> np.ndarray:
    """Off-diagonal entries i.i.d. uniform on [-bound, bound] above the diagonal, mirrored."""
    iu, ju = _upper_pairs(n)
    q = np.zeros((n, n))
    q[iu, ju] = g.uniform(-bound, bound, size=iu.size)
    q[ju, iu] = q[iu, ju]
    return q


def gen_er_common(N: int, d: float, seed: int) -> Tuple[np.ndarray, SupportSet]:
    """Raw common matrix: unit diagonal, each pair an edge w.p. d/(N-1), edge value +-1.

    The result is generally indefinite; pass it through :func:`make_pd`.
    """
    if not 1 <= d <= N - 1:
        raise ValueError(f"d={d} outside [1, N-1] for N={N}")
    g = rng.stream(seed, "er-common")
    iu, ju = _upper_pairs(N)
    edge = g.random(iu.size) < d / (N - 1)
    value = np.where(g.random(iu.size) < 0.5, 1.0, -1.0)
    raw = np.eye(N)
    raw[iu, ju] = np.where(edge, value, 0.0)
    raw[ju, iu] = raw[iu, ju]
    return raw, support_of(raw, 0.0).with_diagonal()


def gen_task_precision(omega_raw: np.ndarray, keep_prob: float, seed: int) -> np.ndarray:
    """Keep each off-diagonal entry (per unordered pair) independently w.p. ``keep_prob``."""
    if not 0 < keep_prob <= 1:
        raise ValueError("keep_prob must lie in (0, 1]")
    omega_raw = np.asarray(omega_raw, dtype=float)
    n = omega_raw.shape[0]
    g = rng.stream(seed, "task-mask")
    iu, ju = _upper_pairs(n)
    keep = g.random(iu.size) < keep_prob
    out = omega_raw.copy()
    out[iu, ju] = np.where(keep, omega_raw[iu, ju], 0.0)
    out[ju, iu] = out[iu, ju]
    return out


def make_pd(raw: np.ndarray, min_eig: float) -> PrecisionMatrix:
    """Add ``c I`` with the smallest ``c >= 0`` that lifts the minimum eigenvalue to ``min_eig``."""
    if min_eig <= 0:
        raise ValueError("min_eig must be positive")
    raw = symmetrize(raw)
    shift = min_eig - min_eigenvalue(raw)
    # an input already loaded to min_eig (up to eigensolver rounding) is left as is
    if shift <= 1e-9:
        shift = 0.0
    return PrecisionMatrix(raw + shift * np.eye(raw.shape[0]))


def sample_mvn(precision: PrecisionMatrix, n: int, seed: int) -> SampleSet:
    """``n`` zero-mean Gaussian rows with covariance ``precision^{-1}``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    g = rng.stream(seed, "mvn")
    z = g.standard_normal((n, precision.n))
    # Omega = L L^T  =>  x = L^{-T} z has covariance Omega^{-1}
    x = np.linalg.solve(precision.cholesky.T, z.T).T
    return SampleSet(x)


def gen_family(spec: TaskFamilySpec) -> GeneratedFamily:
    raw, _ = gen_er_common(spec.N, spec.d, rng.derive_seed(spec.seed, "common"))
    common = make_pd(raw, spec.min_eig)
    support = common.support(0.0)
    tasks = tuple(
        make_pd(gen_task_precision(common.matrix, spec.keep_prob, rng.derive_seed(spec.seed, "task", k)), spec.min_eig)
        for k in range(spec.K)
    )
    novel = make_pd(gen_task_precision(common.matrix, spec.keep_prob, rng.derive_seed(spec.seed, "novel")), spec.min_eig)
    return GeneratedFamily(spec, common, support, tasks, novel)


def task_perturbation_law(common: PrecisionMatrix, keep_prob: float, min_eig: float):
    """Sampler ``g -> Delta`` reproducing the family's task perturbation."""

    def draw(g: np.random.Generator) -> np.ndarray:
        seed = int(g.integers(0, 2**63))
        task = make_pd(gen_task_precision(common.matrix, keep_prob, seed), min_eig)
        return task.matrix - common.matrix

    return draw


def gen_fano_cycle(N: int, d: int, seed: int) -> FanoInstance:
    """Circulant-on-a-random-permutation graph of degree ``d`` with weights in [-1/(2d), 1/(2d)]."""
    if N < 5 or d < 2 or d % 2 or d // 2 >= N or d >= N:
        raise ValueError(f"invalid Fano cycle parameters N={N}, d={d}")
    g = rng.stream(seed, "fano-cycle")
    perm = g.permutation(N)
    h = np.zeros((N, N), dtype=bool)
    for i in range(N):
        for j in range(1, d // 2 + 1):
            a, b = perm[i], perm[(i + j) % N]
            h[a, b] = h[b, a] = True
    q = _symmetric_uniform(g, N, 1.0 / (2 * d))
    omega = PrecisionMatrix(np.eye(N) + h * q)
    return FanoInstance("cycle-union", omega, SupportSet.from_mask(h), q, perm.tolist())


def gen_fano_subset(N: int, s_off: SupportSet, seed: int) -> FanoInstance:
    """Uniformly random symmetric subset of ``s_off`` with weights in [-1/(N log s), 1/(N log s)]."""
    s = len(s_off)
    if N < 4 or s_off.n != N or not 4 <= s <= N:
        raise ValueError(f"invalid Fano subset parameters N={N}, |S_off|={s}")
    if any(i == j for i, j in s_off.pairs):
        raise ValueError("s_off must be off-diagonal")
    g = rng.stream(seed, "fano-subset")
    upper = sorted((i, j) for i, j in s_off.pairs if i < j)
    chosen = g.random(len(upper)) < 0.5
    h = np.zeros((N, N), dtype=bool)
    for (i, j), c in zip(upper, chosen):
        h[i, j] = h[j, i] = bool(c)
    bound = 1.0 / (N * math.log(s))
    q = _symmetric_uniform(g, N, bound)
    omega = PrecisionMatrix(np.eye(N) + h * q)
    return FanoInstance("subset-novel", omega, SupportSet.from_mask(h), q)
