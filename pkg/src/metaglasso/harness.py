"""Monte-Carlo experiments for the two-step procedure.

Step 1 pools the K auxiliary tasks and runs one graphical lasso; the
recovered support is scored by sign consistency against the common
precision matrix. Step 2 re-estimates the novel task restricted to that
support with the diagonal pinned to the step-1 estimate.

Trial seeds are derived from ``(master_seed, grid_value, trial_index)``,
so every grid point is reproducible on its own, whatever the grid order
or the number of workers.
"""
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import List, Optional

import numpy as np

from . import rng
from .model import DEFAULT_TAU, empirical_covariance, sign_consistent, thresholded_sign
from .synth import GeneratedFamily, TaskFamilySpec, gen_family, sample_mvn
from .solver import SolverConfig, constrained_glasso, glasso, pooled_glasso
from .theory import theory_constants, sufficiency_report

DEFAULT_LAMBDA_C = 0.5
DEFAULT_NOVEL_LAMBDA_C = 0.15
TASK_SWEEP_BUDGET = 200.0
# per-task samples for step 1 of the novel sweep, large enough that pooled
# recovery almost always succeeds at N = 20
NOVEL_STEP1_N = 2000

_PRACTICAL = re.compile(r"^practical(?:\((?P<c>[0-9.eE+-]+)\))?$")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def parse_lambda_rule(rule: str):
    """``"practical"``, ``"practical(c)"`` or ``"oracle-thm2"`` -> (kind, c)."""
    rule = rule.strip()
    if rule == "oracle-thm2":
        return "oracle-thm2", DEFAULT_LAMBDA_C
    m = _PRACTICAL.match(rule)
    if not m:
        raise ValueError(f"unknown lambda rule {rule!r}")
    c = float(m.group("c")) if m.group("c") else DEFAULT_LAMBDA_C
    if c <= 0:
        raise ValueError("lambda constant must be positive")
    return "practical", c


def practical_lambda(c: float, N: int, n: int, K: int = 1) -> float:
    return c * math.sqrt(math.log(N) / (n * K))


def novel_practical_lambda(c: float, s_off_size: int, n_novel: int) -> float:
    return c * math.sqrt(math.log(max(s_off_size, 2)) / n_novel)


@dataclass
class TrialResult:
    grid_value: float
    n_used: int
    union_recovered: bool
    novel_recovered: Optional[bool] = None
    solver_converged: bool = True
    seed: int = 0
    lam: float = float("nan")
    lam_novel: Optional[float] = None
    n_novel: Optional[int] = None
    s_off_size: int = 0
    novel_constraints_exact: Optional[bool] = None
    assumption_violated: bool = False
    error: Optional[str] = None


def _family_and_covariances(spec: TaskFamilySpec, seed: int):
    fam = gen_family(replace(spec, seed=rng.derive_seed(seed, "family")))
    covs = [
        empirical_covariance(sample_mvn(task, spec.n, rng.derive_seed(seed, "samples", k)))
        for k, task in enumerate(fam.tasks)
    ]
    return fam, covs


def _union_lambda(kind: str, c: float, fam: GeneratedFamily, spec: TaskFamilySpec):
    if kind == "oracle-thm2":
        try:
            consts = theory_constants(fam.common, fam.support)
        except np.linalg.LinAlgError:
            consts = None
        if consts is not None and not consts.alpha_violated:
            return sufficiency_report(consts).lambda_oracle, False
        return practical_lambda(c, spec.N, spec.n, spec.K), True
    return practical_lambda(c, spec.N, spec.n, spec.K), False


def _novel_lambda(kind: str, c: float, fam: GeneratedFamily, s_off_size: int, n_novel: int):
    if kind == "oracle-thm2":
        try:
            union = theory_constants(fam.common, fam.support)
            novel = theory_constants(fam.novel, fam.novel.support(0.0))
        except np.linalg.LinAlgError:
            union = novel = None
        if union is not None and not novel.alpha_violated:
            return sufficiency_report(union, c_novel=novel).lambda_oracle_novel, False
        return novel_practical_lambda(c, s_off_size, n_novel), True
    return novel_practical_lambda(c, s_off_size, n_novel), False


def run_trial(spec: TaskFamilySpec, lambda_rule: str = "practical", tau: float = DEFAULT_TAU,
              seed: Optional[int] = None, *, novel: bool = False, novel_c: Optional[float] = None,
              novel_lambda_c: float = DEFAULT_NOVEL_LAMBDA_C, grid_value: float = float("nan"),
              cfg_overrides: Optional[dict] = None) -> TrialResult:
    """One end-to-end run of the two-step procedure.

    With ``novel=True`` the novel-task sample size is ``spec.n_novel`` unless
    ``novel_c`` is given, in which case it is ``round(novel_c * ln max(|S_off|, 2))``
    with ``|S_off|`` taken from the true support union. Errors are caught and
    recorded as failed trials.
    """
    seed = spec.seed if seed is None else seed
    kind, c = parse_lambda_rule(lambda_rule)
    overrides = cfg_overrides or {}
    res = TrialResult(grid_value=grid_value, n_used=spec.n, union_recovered=False, seed=seed)
    try:
        fam, covs = _family_and_covariances(spec, seed)
        res.s_off_size = len(fam.support.off())
        lam, violated = _union_lambda(kind, c, fam, spec)
        res.lam, res.assumption_violated = lam, violated
        step1 = pooled_glasso(covs, None, SolverConfig(lam, **overrides))
        res.solver_converged = step1.converged
        res.union_recovered = step1.converged and sign_consistent(step1.sparse, fam.common.matrix, tau)
        if not novel:
            return res
        if novel_c is not None:
            n_novel = max(1, round_half_up(novel_c * math.log(max(res.s_off_size, 2))))
        else:
            n_novel = max(1, spec.n_novel)
        res.n_novel = n_novel
        if not res.union_recovered:
            return res
        support = step1.support(tau).with_diagonal()
        fixed = np.diag(step1.sparse).copy()
        cov_novel = empirical_covariance(sample_mvn(fam.novel, n_novel, rng.derive_seed(seed, "novel-samples")))
        lam_n, violated_n = _novel_lambda(kind, novel_lambda_c, fam, res.s_off_size, n_novel)
        res.lam_novel = lam_n
        res.assumption_violated = res.assumption_violated or violated_n
        step2 = constrained_glasso(cov_novel, support, fixed, SolverConfig(lam_n, **overrides))
        z = step2.sparse
        res.novel_constraints_exact = bool(
            np.all(z[~support.mask()] == 0.0) and np.array_equal(np.diag(z), fixed)
        )
        res.solver_converged = res.solver_converged and step2.converged
        res.novel_recovered = step2.converged and sign_consistent(z, fam.novel.matrix, tau)
    except Exception as exc:  # recorded as a failure, never dropped
        res.error = f"{type(exc).__name__}: {exc}"
        res.union_recovered = False
        if novel:
            res.novel_recovered = False
    return res


def baseline_single_task(spec: TaskFamilySpec, lambda_rule: str = "practical", tau: float = DEFAULT_TAU,
                         seed: Optional[int] = None, *, grid_value: float = float("nan"),
                         cfg_overrides: Optional[dict] = None) -> TrialResult:
    """Per-task graphical lasso on the same samples as :func:`run_trial`.

    The union of per-task sign patterns is compared with the truth; tasks
    disagreeing on the sign of an entry count as a failure. With K = 1 this
    is exactly the pooled method.
    """
    seed = spec.seed if seed is None else seed
    kind, c = parse_lambda_rule(lambda_rule)
    overrides = cfg_overrides or {}
    res = TrialResult(grid_value=grid_value, n_used=spec.n, union_recovered=False, seed=seed)
    try:
        fam, covs = _family_and_covariances(spec, seed)
        res.s_off_size = len(fam.support.off())
        if kind == "oracle-thm2":
            lam, res.assumption_violated = _union_lambda(kind, c, fam, spec)
        else:
            lam = practical_lambda(c, spec.N, spec.n, 1)
        res.lam = lam
        union = np.zeros((spec.N, spec.N))
        consistent = True
        for cov in covs:
            r = glasso(cov, SolverConfig(lam, **overrides))
            res.solver_converged = res.solver_converged and r.converged
            s = thresholded_sign(r.sparse, tau)
            clash = (union != 0) & (s != 0) & (union != s)
            consistent = consistent and not clash.any()
            union = np.where(union == 0, s, union)
        res.union_recovered = res.solver_converged and consistent and np.array_equal(union, np.sign(fam.common.matrix))
    except Exception as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        res.union_recovered = False
    return res


@dataclass
class SweepConfig:
    family: TaskFamilySpec
    sweep_kind: str
    grid: List[float]
    trials: int = 50
    lambda_rule: str = "practical(0.5)"
    tau: float = DEFAULT_TAU
    master_seed: int = 0
    novel_lambda_c: float = DEFAULT_NOVEL_LAMBDA_C
    task_budget: float = TASK_SWEEP_BUDGET
    baseline: bool = False

    def __post_init__(self):
        if isinstance(self.family, dict):
            self.family = TaskFamilySpec(**self.family)
        if self.sweep_kind not in ("samples", "tasks", "novel"):
            raise ValueError(f"unknown sweep kind {self.sweep_kind!r}")
        if not self.grid:
            raise ValueError("grid must be nonempty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        parse_lambda_rule(self.lambda_rule)
        self.grid = [float(g) for g in self.grid]

    def to_dict(self):
        d = asdict(self)
        d["family"] = self.family.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def point_spec(self, g: float) -> TaskFamilySpec:
        fam = self.family
        if self.sweep_kind == "samples":
            return replace(fam, n=max(1, round_half_up(g * math.log(fam.N) / fam.K)))
        if self.sweep_kind == "tasks":
            K = int(g)
            return replace(fam, K=K, n=max(1, round_half_up(self.task_budget * math.log(fam.N) / K)))
        return fam


@dataclass
class SweepRow:
    grid_value: float
    n: int
    K: int
    N: int
    trials: int
    successes: int
    success_rate: float
    baseline_successes: Optional[int] = None
    not_converged: int = 0
    errors: int = 0
    assumption_violations: int = 0
    step1_successes: Optional[int] = None
    conditional_success_rate: Optional[float] = None
    n_novel_mean: Optional[float] = None
    constraints_exact_all: Optional[bool] = None


@dataclass
class SweepReport:
    config: SweepConfig
    rows: List[SweepRow]
    trials: List[List[TrialResult]] = field(repr=False)
    seconds: List[float] = field(default_factory=list)

    def to_dict(self, include_trials: bool = True):
        d = {
            "config": self.config.to_dict(),
            "rows": [asdict(r) for r in self.rows],
            "seconds_per_point": self.seconds,
        }
        if include_trials:
            d["trials"] = [[asdict(t) for t in point] for point in self.trials]
        return d


def _run_one(args):
    cfg, g, t = args
    spec = cfg.point_spec(g)
    seed = rng.derive_seed(cfg.master_seed, "trial", g, t)
    if cfg.sweep_kind == "novel":
        main = run_trial(spec, cfg.lambda_rule, cfg.tau, seed, novel=True, novel_c=g,
                         novel_lambda_c=cfg.novel_lambda_c, grid_value=g)
    else:
        main = run_trial(spec, cfg.lambda_rule, cfg.tau, seed, grid_value=g)
    base = baseline_single_task(spec, cfg.lambda_rule, cfg.tau, seed, grid_value=g) if cfg.baseline else None
    return main, base


def _summarize(cfg: SweepConfig, g: float, results, bases) -> SweepRow:
    spec = cfg.point_spec(g)
    T = len(results)
    if cfg.sweep_kind == "novel":
        step1 = sum(r.union_recovered for r in results)
        successes = sum(bool(r.novel_recovered) for r in results)
        exact = [r.novel_constraints_exact for r in results if r.novel_constraints_exact is not None]
        n_nov = [r.n_novel for r in results if r.n_novel is not None]
        extra = dict(
            step1_successes=step1,
            conditional_success_rate=(successes / step1) if step1 else None,
            n_novel_mean=float(np.mean(n_nov)) if n_nov else None,
            constraints_exact_all=all(exact) if exact else None,
        )
    else:
        successes = sum(r.union_recovered for r in results)
        extra = {}
    return SweepRow(
        grid_value=g, n=spec.n, K=spec.K, N=spec.N, trials=T, successes=successes,
        success_rate=successes / T,
        baseline_successes=sum(b.union_recovered for b in bases) if bases is not None else None,
        not_converged=sum(not r.solver_converged for r in results),
        errors=sum(r.error is not None for r in results),
        assumption_violations=sum(r.assumption_violated for r in results),
        **extra,
    )


def run_sweep(cfg: SweepConfig, workers: int = 1, progress=None) -> SweepReport:
    """Run every (grid value, trial) pair and aggregate in grid order.

    ``workers > 1`` fans trials out to processes; results are collected in
    submission order so the report does not depend on scheduling.
    """
    rows, all_trials, seconds = [], [], []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for g in cfg.grid:
            start = time.perf_counter()
            jobs = [(cfg, g, t) for t in range(cfg.trials)]
            out = list(pool.map(_run_one, jobs)) if pool else [_run_one(j) for j in jobs]
            results = [m for m, _ in out]
            bases = [b for _, b in out] if cfg.baseline else None
            rows.append(_summarize(cfg, g, results, bases))
            all_trials.append(results)
            seconds.append(time.perf_counter() - start)
            if progress:
                progress(rows[-1])
    finally:
        if pool:
            pool.shutdown()
    return SweepReport(cfg, rows, all_trials, seconds)


def run_sweep_samples(cfg: SweepConfig, **kw) -> SweepReport:
    if cfg.sweep_kind != "samples":
        raise ValueError("run_sweep_samples needs sweep_kind='samples'")
    return run_sweep(cfg, **kw)


def run_sweep_tasks(cfg: SweepConfig, **kw) -> SweepReport:
    if cfg.sweep_kind != "tasks":
        raise ValueError("run_sweep_tasks needs sweep_kind='tasks'")
    return run_sweep(cfg, **kw)


def run_sweep_novel(cfg: SweepConfig, **kw) -> SweepReport:
    if cfg.sweep_kind != "novel":
        raise ValueError("run_sweep_novel needs sweep_kind='novel'")
    return run_sweep(cfg, **kw)


CSV_COLUMNS = ["grid_value", "n", "K", "N", "trials", "successes", "success_rate"]
NOVEL_COLUMNS = ["step1_successes", "conditional_success_rate", "n_novel_mean"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_csv(report: SweepReport) -> str:
    cols = list(CSV_COLUMNS)
    if report.config.baseline:
        cols.append("baseline_successes")
    if report.config.sweep_kind == "novel":
        cols += NOVEL_COLUMNS
    lines = [",".join(cols)]
    for row in report.rows:
        d = asdict(row)
        lines.append(",".join(_fmt(d[c]) for c in cols))
    return "\n".join(lines) + "\n"


def default_sweep(kind: str, **overrides) -> SweepConfig:
    """Sweep presets for the three experiments."""
    if kind == "samples":
        base = dict(family=TaskFamilySpec(N=10, K=10, n=1), grid=[5, 10, 20, 50, 100, 200])
    elif kind == "tasks":
        base = dict(family=TaskFamilySpec(N=10, K=2, n=1), grid=[2, 5, 10, 20, 50, 100])
    elif kind == "novel":
        base = dict(family=TaskFamilySpec(N=20, K=10, n=NOVEL_STEP1_N), grid=[5, 10, 20, 50])
    else:
        raise ValueError(kind)
    base.update(overrides)
    return SweepConfig(sweep_kind=kind, **base)
