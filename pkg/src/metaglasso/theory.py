"""Assumption checks, tracked constants, sufficient-sample bounds and
information-theoretic lower bounds for pooled and novel-task recovery.

All logarithms are natural. The Hessian block ``Gamma = Sigma ⊗ Sigma`` is
only ever formed on the index pairs that are needed.
"""
import math
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import rng
from .matops import elementwise_linf, gamma_submatrix, min_eigenvalue, op_linf, pd_factorize, symmetrize
from .model import PrecisionMatrix, SupportSet, degree


class SingularBlock(np.linalg.LinAlgError):
    pass


def _as_precision(omega) -> PrecisionMatrix:
    return omega if isinstance(omega, PrecisionMatrix) else PrecisionMatrix(omega)


def _support_or_default(omega: PrecisionMatrix, support: Optional[SupportSet]) -> SupportSet:
    return support if support is not None else omega.support(0.0).with_diagonal()


def _inverse_gamma_ss(sigma: np.ndarray, s_pairs) -> np.ndarray:
    g_ss = gamma_submatrix(sigma, s_pairs, s_pairs)
    try:
        return np.linalg.inv(g_ss)
    except np.linalg.LinAlgError as exc:
        raise SingularBlock(f"Gamma_SS block is singular: {exc}") from None


def incoherence_alpha(omega_bar, support: Optional[SupportSet] = None) -> float:
    """``1 - |||Gamma_{S^c S} (Gamma_SS)^-1|||_inf``; may be <= 0 when the assumption fails."""
    omega = _as_precision(omega_bar)
    s = _support_or_default(omega, support)
    s_pairs = s.sorted_pairs()
    sc_pairs = s.complement().sorted_pairs()
    if not sc_pairs:
        return 1.0
    sigma = omega.covariance
    g_csc = gamma_submatrix(sigma, sc_pairs, s_pairs)
    return 1.0 - op_linf(g_csc @ _inverse_gamma_ss(sigma, s_pairs))


@dataclass(frozen=True)
class TheoryConstants:
    kappa_gamma: float
    kappa_sigma: float
    degree: int
    omega_min: float
    lambda_min: float
    alpha: Optional[float] = None
    sigma_sg: float = 1.0
    gamma_bound: Optional[float] = None
    c_max: Optional[float] = None
    beta: float = 0.0

    @property
    def alpha_violated(self) -> bool:
        return self.alpha is None or not 0 < self.alpha <= 1

    @property
    def delta_star(self) -> float:
        return delta_star(self)

    @property
    def delta_dagger(self) -> float:
        return delta_dagger_union(self)

    def replace(self, **kw) -> "TheoryConstants":
        d = asdict(self)
        d.update(kw)
        return TheoryConstants(**d)

    def to_dict(self):
        return asdict(self)


def curvature_constants(omega_bar, support: Optional[SupportSet] = None, *, sigma_sg: float = 1.0,
                        gamma_bound: Optional[float] = None, c_max: Optional[float] = None,
                        beta: float = 0.0) -> TheoryConstants:
    """Tracked constants of a true precision matrix; ``alpha`` is left unset.

    ``degree`` counts the diagonal entry of each row. ``gamma_bound`` defaults
    to ``||Sigma||_inf`` and ``c_max`` to ``lambda_min / 2``, the largest value
    the family definition allows.
    """
    omega = _as_precision(omega_bar)
    s = _support_or_default(omega, support)
    sigma = omega.covariance
    kappa_gamma = op_linf(_inverse_gamma_ss(sigma, s.sorted_pairs()))
    mask = s.mask()
    lam_min = min_eigenvalue(omega.matrix)
    return TheoryConstants(
        kappa_gamma=kappa_gamma,
        kappa_sigma=op_linf(sigma),
        degree=degree(omega.matrix),
        omega_min=float(np.min(np.abs(omega.matrix[mask]))),
        lambda_min=lam_min,
        sigma_sg=sigma_sg,
        gamma_bound=gamma_bound if gamma_bound is not None else elementwise_linf(sigma),
        c_max=c_max if c_max is not None else lam_min / 2.0,
        beta=beta,
    )


def theory_constants(omega_bar, support: Optional[SupportSet] = None, **kw) -> TheoryConstants:
    """:func:`curvature_constants` with ``alpha`` filled in."""
    omega = _as_precision(omega_bar)
    c = curvature_constants(omega, support, **kw)
    return c.replace(alpha=incoherence_alpha(omega, support))


def _check_alpha(alpha):
    if alpha is None or not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def _branch_max(kappa_sigma, kappa_gamma):
    # min{1/(3 ks d), 1/(3 ks^3 kg d)} == 1/(3 d max{ks, ks^3 kg}); one division rounds once
    return max(kappa_sigma, kappa_sigma**3 * kappa_gamma)


def delta_star(c: TheoryConstants) -> float:
    _check_alpha(c.alpha)
    a = c.alpha
    return a * a / (6 * c.kappa_gamma * (a + 8) ** 2 * c.degree * _branch_max(c.kappa_sigma, c.kappa_gamma))


def delta_dagger_union(c: TheoryConstants) -> float:
    _check_alpha(c.alpha)
    a = c.alpha
    if c.omega_min >= 2 * a / (3 * (8 + a) * c.degree * _branch_max(c.kappa_sigma, c.kappa_gamma)):
        return delta_star(c)
    return a * c.omega_min / (4 * (8 + a) * c.kappa_gamma)


def delta_dagger_novel(c_novel: TheoryConstants, kappa_gamma_union: Optional[float] = None) -> float:
    """Novel-task delta. The first branch's prefactor uses the union ``kappa_gamma``
    (pass ``kappa_gamma_union``); it falls back to the novel-task value."""
    _check_alpha(c_novel.alpha)
    a = c_novel.alpha
    d = c_novel.degree
    kg_union = c_novel.kappa_gamma if kappa_gamma_union is None else kappa_gamma_union
    bm = _branch_max(c_novel.kappa_sigma, c_novel.kappa_gamma)
    if c_novel.omega_min >= 2 * a / (3 * (8 + a) * d * bm):
        return a * a / (6 * kg_union * (a + 8) ** 2 * d * bm)
    return a * c_novel.omega_min / (4 * (8 + a) * c_novel.kappa_gamma)


def theory_lambda(mode: str, delta: float, alpha: float, delta_star: Optional[float] = None) -> float:
    """Regularization weight prescribed for ``mode`` in {"thm1", "thm2", "thm4"}."""
    _check_alpha(alpha)
    if mode == "thm1":
        if delta_star is None:
            raise ValueError("thm1 needs delta_star")
        if not 0 < delta <= delta_star / 2:
            raise ValueError(f"delta={delta} outside (0, delta_star/2]")
        return (8 * delta + 4 * delta_star) / alpha
    if mode in ("thm2", "thm4"):
        if not delta > 0:
            raise ValueError("delta must be positive")
        return 8 * delta / alpha
    raise ValueError(f"unknown mode {mode!r}")


class Bound(NamedTuple):
    value: float
    precondition_ok: bool


def _exp_neg(x: float) -> float:
    return math.exp(-x) if x < math.inf else 0.0


def union_success_prob(n: float, K: int, N: int, delta: float, c: TheoryConstants, mode: str = "thm2") -> Bound:
    """Lower bound on the probability of pooled recovery.

    ``mode="thm1"`` takes ``delta`` in (0, delta_star/2] (subset recovery);
    ``mode="thm2"`` takes ``delta = delta_dagger`` (sign consistency). The
    value may be negative, i.e. uninformative.
    """
    if mode == "thm1":
        divisor, anchor = 64.0, c.delta_star
    elif mode == "thm2":
        divisor, anchor = 256.0, delta
    else:
        raise ValueError(f"unknown mode {mode!r}")
    gamma = c.gamma_bound
    sg = (1 + 4 * c.sigma_sg**2) ** 2
    rate = min(delta**2 / (divisor * sg * gamma**2), 1.0)
    first = 2 * N * (N + 1) * _exp_neg(n * K / 2 * rate)
    gap = anchor / 2 - c.beta
    if c.c_max == 0:
        second = 0.0
    else:
        second = 2 * N * _exp_neg(K * c.lambda_min**4 / (128 * c.c_max**2) * gap**2)
    return Bound(1.0 - first - second, c.beta <= anchor / 2)


def novel_success_prob(n_novel: float, s_off_size: int, delta_novel: float, sigma_sg: float,
                       gamma_novel: float) -> float:
    if s_off_size < 1:
        raise ValueError("s_off_size must be at least 1")
    rate = min(delta_novel**2 / (64 * (1 + 4 * sigma_sg**2) ** 2 * gamma_novel**2), 1.0)
    return 1.0 - 2 * s_off_size * _exp_neg(n_novel / 2 * rate)


def fano_lower_bound_union(n: float, N: int, K: int) -> float:
    """Lower bound on P(S_hat != S) for the permutation-circulant ensemble."""
    if N < 5:
        raise ValueError("the union lower bound needs N >= 5")
    return 1.0 - (n * N * K + math.log(2)) / (N * math.log(N) - N - math.log(2 * N))


def fano_union_threshold(N: int, K: int) -> float:
    """Per-task sample size at or below which any estimator fails w.p. > 1/2."""
    return math.log(N) / (2 * K) - 1 / (2 * K) - math.log(8 * N) / (2 * N * K)


def fano_lower_bound_novel(n: float, s: int) -> float:
    """Lower bound on P(S_hat != S) for a random subset of a known off-diagonal set of size ``s``."""
    if s < 4:
        raise ValueError("the novel-task lower bound needs s >= 4")
    return 1.0 - 4 * n / (math.log(2) * math.log(s)) - 2.0 / s


def fano_novel_threshold(s: int) -> float:
    return math.log(2) / 8 * math.log(s) - math.log(2) / (2 * s) * math.log(s)


def estimate_beta(omega_bar, perturb: Callable[[np.random.Generator], np.ndarray], M: int = 1000,
                  seed: int = 0) -> float:
    """Monte-Carlo estimate of ``||Omega^-1 - E[(Omega + Delta)^-1]||_inf``.

    ``perturb`` maps a generator to one draw of Delta. Draw ``m`` uses its own
    substream, and the running sum is accumulated in draw order.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    omega = _as_precision(omega_bar)
    acc = np.zeros_like(omega.matrix)
    for m in range(M):
        delta = np.atleast_2d(perturb(rng.stream(seed, "beta", m)))
        acc += pd_factorize(symmetrize(omega.matrix + delta)).inverse
    return elementwise_linf(omega.covariance - acc / M)


@dataclass(frozen=True)
class SufficiencyReport:
    delta_star: Optional[float]
    delta_dagger: Optional[float]
    lambda_oracle: Optional[float]
    prob_lower_bound: Optional[float]
    precondition_ok: bool
    alpha_violated: bool
    delta_dagger_novel: Optional[float] = None
    lambda_oracle_novel: Optional[float] = None
    prob_lower_bound_novel: Optional[float] = None

    def to_dict(self):
        return asdict(self)


def sufficiency_report(c: TheoryConstants, n: Optional[float] = None, K: Optional[int] = None,
                       N: Optional[int] = None, c_novel: Optional[TheoryConstants] = None,
                       n_novel: Optional[float] = None, s_off_size: Optional[int] = None) -> SufficiencyReport:
    """Deltas, oracle lambdas and probability bounds. Assumption violations are
    reported through flags and ``None`` entries rather than raised."""
    ds = dd = lam = prob = None
    ok = False
    if not c.alpha_violated:
        ds, dd = delta_star(c), delta_dagger_union(c)
        lam = theory_lambda("thm2", dd, c.alpha)
        ok = c.beta <= dd / 2
        if n is not None and K is not None and N is not None:
            b = union_success_prob(n, K, N, dd, c, "thm2")
            prob, ok = b.value, b.precondition_ok
    dn = lam_n = prob_n = None
    if c_novel is not None and not c_novel.alpha_violated:
        dn = delta_dagger_novel(c_novel, kappa_gamma_union=c.kappa_gamma)
        lam_n = theory_lambda("thm4", dn, c_novel.alpha)
        if n_novel is not None and s_off_size:
            prob_n = novel_success_prob(n_novel, s_off_size, dn, c_novel.sigma_sg, c_novel.gamma_bound)
    return SufficiencyReport(ds, dd, lam, prob, ok, c.alpha_violated, dn, lam_n, prob_n)
