"""ADMM for the l1-regularized log-determinant problem.

    minimize  <S, Omega> - log det Omega + lam * ||Omega||_1

with the consensus split Omega = Z. The Omega-step is the closed-form prox
of the smooth part (an eigendecomposition), the Z-step is elementwise
soft-thresholding, or in constrained mode a projection onto
{supp(Z) in S, diag(Z) = fixed} followed by soft-thresholding on S_off.
Z carries exact zeros and is the iterate used for support extraction.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .matops import NotPositiveDefinite, pd_factorize, symmetrize
from .model import CovarianceEstimate, PrecisionMatrix, SupportSet


class NotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    lam: float
    rho: float = 1.0
    tol_primal: Optional[float] = None  # None -> 1e-7 * N
    tol_dual: Optional[float] = None
    max_iter: int = 2000
    polish: bool = True  # Newton refinement on the recovered sign pattern

    def __post_init__(self):
        if not self.lam > 0 or not self.rho > 0:
            raise ValueError("lam and rho must be positive")
        for tol in (self.tol_primal, self.tol_dual):
            if tol is not None and not tol > 0:
                raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def tolerances(self, n: int) -> Tuple[float, float]:
        tp = self.tol_primal if self.tol_primal is not None else 1e-7 * n
        td = self.tol_dual if self.tol_dual is not None else 1e-7 * n
        return tp, td


@dataclass(frozen=True)
class KktReport:
    max_violation_nonzero: float
    max_violation_zero: float
    constrained_checked: bool = False
    constraint_violation: float = 0.0

    @property
    def max_violation(self) -> float:
        return max(self.max_violation_nonzero, self.max_violation_zero)


@dataclass
class SolverResult:
    omega: PrecisionMatrix
    sparse: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    kkt: Optional[KktReport] = None
    lam: float = 0.0
    polished: bool = False
    history: List[Tuple[float, float]] = field(default_factory=list, repr=False)

    def support(self, tau: float = 1e-6) -> SupportSet:
        return SupportSet.from_mask(np.abs(self.sparse) > tau)


def soft_threshold(x, t):
    """``sign(x) * max(|x| - t, 0)``, elementwise for arrays."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be non-negative")
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def objective(sigma: np.ndarray, lam: float, omega: np.ndarray) -> float:
    """``<sigma, omega> - log det omega + lam * ||omega||_1``; ``inf`` off the PD cone."""
    try:
        fact = pd_factorize(symmetrize(omega))
    except NotPositiveDefinite:
        return float("inf")
    return float(np.sum(sigma * omega) - fact.log_det + lam * np.sum(np.abs(omega)))


def _logdet_prox(w_mat: np.ndarray, rho: float) -> np.ndarray:
    # argmin_X  -log det X + (rho/2)||X - (w_mat/rho)||^2  in eigen-coordinates
    w, v = np.linalg.eigh(w_mat)
    x = (w + np.sqrt(w * w + 4.0 * rho)) / (2.0 * rho)
    return symmetrize((v * x) @ v.T)


def _as_matrix(sigma) -> np.ndarray:
    if isinstance(sigma, CovarianceEstimate):
        sigma = sigma.matrix
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("covariance must be square")
    if not np.array_equal(sigma, sigma.T):
        raise ValueError("covariance must be exactly symmetric")
    return sigma


def _admm(sigma, cfg: SolverConfig, zstep, z0: np.ndarray) -> SolverResult:
    n = sigma.shape[0]
    rho = cfg.rho
    tp, td = cfg.tolerances(n)
    z = z0.copy()
    u = np.zeros_like(sigma)
    history = []
    omega = z
    r = s = float("inf")
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        omega = _logdet_prox(rho * (z - u) - sigma, rho)
        z_old = z
        z = zstep(omega + u)
        u = u + omega - z
        r = float(np.linalg.norm(omega - z))
        s = float(rho * np.linalg.norm(z - z_old))
        history.append((r, s))
        if r <= tp and s <= td:
            converged = True
            break
    return SolverResult(
        omega=PrecisionMatrix(omega),
        sparse=z,
        iterations=it,
        primal_residual=r,
        dual_residual=s,
        converged=converged,
        lam=cfg.lam,
        history=history,
    )


def _polish(sigma, lam, res: SolverResult, diag_free: bool, support=None, fixed_diag=None):
    """Newton refinement of a converged iterate with its sign pattern held fixed.

    On a fixed orthant the l1 term is linear, so the problem restricted to the
    nonzeros of Z is smooth and strictly convex. The refined matrix replaces the
    ADMM iterate only if no sign flips, it stays PD and its KKT violation drops.
    """
    z = res.sparse
    n = z.shape[0]
    iu, ju = np.triu_indices(n)
    keep = z[iu, ju] != 0
    if not diag_free:
        keep &= iu != ju
    ii, jj = iu[keep], ju[keep]
    if ii.size == 0:
        return
    sign = np.sign(z[ii, jj])
    mult = np.where(ii == jj, 1.0, 2.0)
    lin = lam * mult * sign

    def build(x):
        m = z.copy()
        m[ii, jj] = x
        m[jj, ii] = x
        return m

    def f(x):
        try:
            fact = pd_factorize(build(x))
        except NotPositiveDefinite:
            return np.inf, None
        return float(np.sum(sigma * build(x)) - fact.log_det + lin @ x), fact.inverse

    x = z[ii, jj].copy()
    fx, w = f(x)
    if w is None:
        return
    for _ in range(30):
        grad = mult * (sigma - w)[ii, jj] + lin
        if np.max(np.abs(grad)) <= 1e-13 * max(1.0, np.max(np.abs(sigma))):
            break
        g1 = w[np.ix_(ii, ii)] * w[np.ix_(jj, jj)] + w[np.ix_(ii, jj)] * w[np.ix_(jj, ii)]
        hess = g1 * np.outer(mult, mult) / 2.0
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            return
        t = 1.0
        while t > 1e-10:
            xn = x + t * step
            if np.all(np.sign(xn) == sign):
                fn, wn = f(xn)
                if fn <= fx + 1e-4 * t * (grad @ step):
                    break
            t *= 0.5
        else:
            break
        if not np.all(np.sign(xn) == sign):
            return
        x, fx, w = xn, fn, wn
    cand = SolverResult(PrecisionMatrix(build(x)), build(x), res.iterations, res.primal_residual,
                        res.dual_residual, res.converged, lam=res.lam, history=res.history)
    old = kkt_residual(sigma, lam, res, support, fixed_diag).max_violation
    new = kkt_residual(sigma, lam, cand, support, fixed_diag).max_violation
    if new < old:
        res.omega, res.sparse, res.polished = cand.omega, cand.sparse, True


def glasso(sigma, cfg: SolverConfig, z0: Optional[np.ndarray] = None) -> SolverResult:
    """Graphical lasso with the diagonal penalized.

    Returns the last iterate with ``converged=False`` if ``max_iter`` runs out.
    """
    sigma = _as_matrix(sigma)
    t = cfg.lam / cfg.rho
    if z0 is None:
        z0 = np.diag(1.0 / (np.diag(sigma) + cfg.lam))
    res = _admm(sigma, cfg, lambda a: soft_threshold(a, t), symmetrize(z0))
    if cfg.polish and res.converged:
        _polish(sigma, cfg.lam, res, diag_free=True)
    res.kkt = kkt_residual(sigma, cfg.lam, res)
    return res


def pooled_covariance(sigmas: Sequence, weights: Optional[Sequence[float]] = None) -> Tuple[np.ndarray, float]:
    """Weighted average of task covariances and the total weight.

    With total weight T the pooled loss is T * (<S_pool, Omega> - log det Omega),
    so the pooled problem is a single graphical lasso on S_pool at lam / T.
    """
    mats = [_as_matrix(s) for s in sigmas]
    if not mats:
        raise ValueError("need at least one covariance")
    if any(m.shape != mats[0].shape for m in mats):
        raise ValueError("dimension mismatch among task covariances")
    if weights is None:
        weights = [1.0 / len(mats)] * len(mats)
    if len(weights) != len(mats):
        raise ValueError(f"{len(weights)} weights for {len(mats)} tasks")
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    stack = np.stack(mats)
    if np.all(w == w[0]):
        return np.mean(stack, axis=0), float(w[0] * len(w))
    total = float(w.sum())
    return np.tensordot(w / total, stack, axes=1), total


def pooled_glasso(sigmas: Sequence, weights: Optional[Sequence[float]] = None, cfg: SolverConfig = None,
                  z0: Optional[np.ndarray] = None) -> SolverResult:
    if cfg is None:
        raise ValueError("a SolverConfig is required")
    pooled, total = pooled_covariance(sigmas, weights)
    # weights 1/K can sum to 1 - ulp; do not rescale lam for that
    if abs(total - 1.0) > 1e-12:
        cfg = SolverConfig(cfg.lam / total, cfg.rho, cfg.tol_primal, cfg.tol_dual, cfg.max_iter, cfg.polish)
    return glasso(pooled, cfg, z0=z0)


def constrained_glasso(sigma_novel, support: SupportSet, fixed_diag, cfg: SolverConfig,
                       z0: Optional[np.ndarray] = None) -> SolverResult:
    """Graphical lasso restricted to ``support`` with the diagonal pinned to ``fixed_diag``."""
    sigma = _as_matrix(sigma_novel)
    n = sigma.shape[0]
    fixed = np.asarray(fixed_diag, dtype=float).reshape(-1)
    if support.n != n or fixed.size != n:
        raise ValueError("dimension mismatch between covariance, support and fixed diagonal")
    if np.any(fixed <= 0):
        raise ValueError("fixed diagonal entries must be positive")
    free = support.off().mask()
    t = cfg.lam / cfg.rho
    diag_idx = np.diag_indices(n)

    def project(a):
        z = np.where(free, soft_threshold(a, t), 0.0)
        z[diag_idx] = fixed
        return z

    if z0 is None:
        z0 = np.diag(fixed)
    res = _admm(sigma, cfg, project, project(symmetrize(z0)))
    if cfg.polish and res.converged:
        _polish(sigma, cfg.lam, res, diag_free=False, support=support, fixed_diag=fixed)
    res.kkt = kkt_residual(sigma, cfg.lam, res, support=support, fixed_diag=fixed)
    if not res.kkt.constraint_violation == 0.0:  # pragma: no cover - construction guarantee
        raise AssertionError("projection left a hard constraint violated")
    return res


def kkt_residual(sigma, lam: float, result: SolverResult, support: Optional[SupportSet] = None,
                 fixed_diag=None) -> KktReport:
    """Stationarity violations of the sparse iterate.

    On nonzeros: |S_ij - (Z^-1)_ij + lam sign(Z_ij)|. On zeros: how far
    |S_ij - (Z^-1)_ij| exceeds lam. In constrained mode only the free
    coordinates (off-diagonal, inside ``support``) are checked and the hard
    constraints are verified separately.
    """
    sigma = _as_matrix(sigma)
    z = np.asarray(result.sparse, dtype=float)
    try:
        zinv = pd_factorize(symmetrize(z)).inverse
    except NotPositiveDefinite:
        zinv = result.omega.covariance
    grad = sigma - zinv
    nz = z != 0
    if support is None:
        free = np.ones_like(nz)
        constraint_violation = 0.0
    else:
        smask = support.mask()
        free = smask.copy()
        np.fill_diagonal(free, False)
        outside = float(np.max(np.abs(z[~smask]), initial=0.0))
        diag_err = 0.0
        if fixed_diag is not None:
            diag_err = float(np.max(np.abs(np.diag(z) - np.asarray(fixed_diag, dtype=float)), initial=0.0))
        constraint_violation = max(outside, diag_err)
    on = nz & free
    off = ~nz & free
    v_nz = float(np.max(np.abs(grad + lam * np.sign(z))[on], initial=0.0))
    v_zero = float(np.max(np.maximum(np.abs(grad) - lam, 0.0)[off], initial=0.0))
    return KktReport(v_nz, v_zero, support is not None, constraint_violation)
