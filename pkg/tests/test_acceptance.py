"""End-to-end acceptance checks, each at its stated tolerance.

Every test records one PASS/FAIL line (shown in the terminal summary) and
then asserts. The three Monte-Carlo reproduction checks run the full trial
counts and are expected to be slow-ish (tens of seconds on one core).
"""
import itertools
import math
import time

import numpy as np
import pytest

from metaglasso.harness import SweepConfig, default_sweep, results_csv, run_sweep
from metaglasso.solver import SolverConfig, glasso, pooled_glasso
from metaglasso.synth import TaskFamilySpec, gen_fano_cycle
from metaglasso.theory import (
    TheoryConstants,
    curvature_constants,
    delta_dagger_union,
    delta_star,
    fano_lower_bound_novel,
    fano_lower_bound_union,
    fano_novel_threshold,
    fano_union_threshold,
    incoherence_alpha,
    theory_lambda,
)
from oracles import dense_alpha_and_kappa, glasso_objective, grid_refinement_minimum


def _random_pd_covariance(g, n):
    # Wishart-like sample covariance with a PD population matrix
    a = g.standard_normal((n, n))
    pop = a @ a.T / n + 0.2 * np.eye(n)
    x = g.standard_normal((3 * n, n)) @ np.linalg.cholesky(pop).T
    s = x.T @ x / (3 * n)
    return (s + s.T) / 2


def test_kkt_certification(acceptance_line):
    g = np.random.default_rng(1)
    start = time.perf_counter()
    worst, converged, cases = 0.0, 0, 0
    for case in range(100):
        N = (5, 10, 20)[case % 3]
        lam = (0.05, 0.1, 0.3)[(case // 3) % 3]
        res = glasso(_random_pd_covariance(g, N), SolverConfig(lam))
        cases += 1
        if res.converged:
            converged += 1
            worst = max(worst, res.kkt.max_violation)
    secs = time.perf_counter() - start
    ok = converged == cases and worst <= 1e-5 and secs < 120
    acceptance_line("solver KKT certification", ok,
                    f"{converged}/{cases} converged, worst violation {worst:.2e} (<= 1e-5), {secs:.1f}s (< 120s)")
    assert ok


def test_closed_form_oracles(acceptance_line):
    worst = 0.0
    for sig in ([0.1, 1.0, 3.0], [0.5, 0.5, 2.0, 4.0], [1.0], [0.25, 8.0]):
        for lam in (0.01, 0.1, 0.5, 2.0):
            s = np.array(sig)
            res = glasso(np.diag(s), SolverConfig(lam))
            worst = max(worst, float(np.max(np.abs(res.sparse - np.diag(1 / (s + lam))))))
    g = np.random.default_rng(2)
    diagonal_ok = True
    for case in range(30):
        s = _random_pd_covariance(g, 2 + case % 8)
        off = np.max(np.abs(s - np.diag(np.diag(s))))
        for lam in (off, 1.5 * off):
            z = glasso(s, SolverConfig(lam)).sparse
            diagonal_ok &= bool(np.all(z[~np.eye(len(s), dtype=bool)] == 0.0))
    z = glasso(np.array([[1.0, 0.5], [0.5, 1.0]]), SolverConfig(0.5)).sparse
    diagonal_ok &= z[0, 1] == 0.0 and abs(z[0, 0] - 2 / 3) <= 1e-6
    ok = worst <= 1e-6 and diagonal_ok
    acceptance_line("closed-form oracles", ok,
                    f"diagonal input max error {worst:.2e} (<= 1e-6); large-lambda exactly diagonal: {diagonal_ok}")
    assert ok


def test_pooling_identity(acceptance_line):
    g = np.random.default_rng(3)
    same = 0
    for case in range(50):
        K = int(g.integers(1, 60))
        N = int(g.integers(2, 12))
        sigmas = [_random_pd_covariance(g, N) for _ in range(K)]
        cfg = SolverConfig(float(g.uniform(0.02, 0.4)))
        a = pooled_glasso(sigmas, [1 / K] * K, cfg)
        b = glasso(sum(sigmas) / K, cfg)
        same += a.sparse.tobytes() == b.sparse.tobytes() and a.omega.matrix.tobytes() == b.omega.matrix.tobytes()
    ok = same == 50
    acceptance_line("pooling identity bit-for-bit", ok, f"{same}/50 identical")
    assert ok


def test_brute_force_equivalence(acceptance_line):
    worst = 0.0
    for case in range(20):
        g = np.random.default_rng(400 + case)
        N = 2 + case % 2
        s = _random_pd_covariance(g, N)
        lam = float(g.uniform(0.02, 0.5))
        res = glasso(s, SolverConfig(lam))
        best, _ = grid_refinement_minimum(s, lam, np.diag(1 / (np.diag(s) + lam)))
        worst = max(worst, abs(glasso_objective(s, lam, res.sparse) - best))
    ok = worst <= 1e-4
    acceptance_line("brute-force objective equivalence", ok, f"20 cases, worst gap {worst:.2e} (<= 1e-4)")
    assert ok


def _test_precisions():
    yield np.eye(3)
    yield np.diag([2.0, 4.0])
    chain = np.eye(3)
    chain[0, 1] = chain[1, 0] = chain[1, 2] = chain[2, 1] = 0.4
    yield chain
    g = np.random.default_rng(5)
    for k in range(15):
        n = 2 + k % 3
        a = np.where(g.random((n, n)) < 0.5, g.uniform(-0.5, 0.5, (n, n)), 0.0)
        m = np.triu(a, 1) + np.triu(a, 1).T + np.diag(1 + g.random(n))
        yield m + max(0.0, 0.3 - np.linalg.eigvalsh(m)[0]) * np.eye(n)


def test_theory_constant_oracle(acceptance_line):
    worst = 0.0
    for omega in _test_precisions():
        mask = omega != 0
        alpha, kappa = dense_alpha_and_kappa(omega, mask)
        c = curvature_constants(omega)
        sigma = np.linalg.inv(omega)
        brute = dict(
            alpha=alpha, kappa_gamma=kappa, kappa_sigma=np.max(np.abs(sigma).sum(axis=1)),
            degree=np.max(mask.sum(axis=1)), omega_min=np.min(np.abs(omega[mask])),
            lambda_min=np.linalg.eigvalsh(omega)[0],
        )
        mine = dict(alpha=incoherence_alpha(omega), kappa_gamma=c.kappa_gamma, kappa_sigma=c.kappa_sigma,
                    degree=c.degree, omega_min=c.omega_min, lambda_min=c.lambda_min)
        worst = max(worst, max(abs(mine[k] - brute[k]) for k in brute))
    ones = TheoryConstants(kappa_gamma=1, kappa_sigma=1, degree=1, omega_min=1, lambda_min=1, alpha=1.0)
    ds = delta_star(ones)
    exact = (
        ds == 1 / 486
        and delta_dagger_union(ones.replace(omega_min=0.01)) == 1 / 3600
        and theory_lambda("thm1", ds / 2, 1.0, delta_star=ds) == 8 * ds / 1.0
        and theory_lambda("thm2", 1 / 486, 1.0) == 8 / 486
    )
    ok = worst <= 1e-10 and exact
    acceptance_line("theory-constant oracle", ok,
                    f"dense Kronecker max deviation {worst:.1e} (<= 1e-10); hand values exact: {exact}")
    assert ok


def test_fano_invariants_and_thresholds(acceptance_line):
    ensemble_ok = True
    for N, d in ((6, 2), (10, 4)):
        for seed in range(200):
            inst = gen_fano_cycle(N, d, seed)
            ev = np.linalg.eigvalsh(inst.omega.matrix)
            ensemble_ok &= bool(ev[0] >= 0.5 and ev[-1] <= 1.5)
            ensemble_ok &= bool(np.all(inst.edges.mask().sum(axis=1) == d))
    union_ok = True
    for N in list(range(5, 101)) + [10**3, 10**4, 10**5, 10**6]:
        for K in range(1, 6):
            thr = fano_union_threshold(N, K)
            for n in range(1, 11):
                union_ok &= (fano_lower_bound_union(n, N, K) > 0.5) == (n <= thr)
    novel_ok = True
    for s in range(4, 101):
        thr = fano_novel_threshold(s)
        novel_ok &= fano_lower_bound_novel(thr, s) >= 0.5 - 1e-12
        for n in range(0, 5):
            if n <= thr:
                novel_ok &= fano_lower_bound_novel(n, s) >= 0.5
    ok = ensemble_ok and union_ok and novel_ok
    acceptance_line("lower-bound ensemble and thresholds", ok,
                    f"ensemble invariants {ensemble_ok}; union threshold {union_ok}; novel threshold {novel_ok}")
    assert ok


def _monotone_within(rates, slack):
    return all(b >= a - slack for a, b in zip(rates, rates[1:]))


def test_sample_size_sweep(acceptance_line):
    cfg = default_sweep("samples", family=TaskFamilySpec(N=10, K=10, n=1, d=3, keep_prob=0.9), trials=50)
    start = time.perf_counter()
    rep = run_sweep(cfg)
    secs = time.perf_counter() - start
    rates = [r.success_rate for r in rep.rows]
    top = rep.rows[cfg.grid.index(200.0)].success_rate
    ok = top >= 0.9 and _monotone_within(rates, 0.15) and secs < 600
    acceptance_line("success vs per-task samples", ok,
                    f"rate at C=200 {top:.2f} (>= 0.9); rates {rates} monotone within 0.15: "
                    f"{_monotone_within(rates, 0.15)}; {secs:.0f}s (< 600s)")
    assert ok


def test_task_count_sweep(acceptance_line):
    cfg = SweepConfig(family=TaskFamilySpec(N=10, K=2, n=1, d=3, keep_prob=0.9), sweep_kind="tasks",
                      grid=[2, 10, 50, 100], trials=50)
    start = time.perf_counter()
    rep = run_sweep(cfg)
    secs = time.perf_counter() - start
    rate = {r.grid_value: r.success_rate for r in rep.rows}
    ok = rate[100.0] >= 0.9 and rate[100.0] >= rate[2.0] and secs < 900
    acceptance_line("success vs number of tasks", ok,
                    f"rate at K=100 {rate[100.0]:.2f} (>= 0.9), at K=2 {rate[2.0]:.2f}; "
                    f"rates {[rate[k] for k in cfg.grid]}; {secs:.0f}s (< 900s)")
    assert ok


def test_novel_task_sample_complexity(acceptance_line):
    cfg = default_sweep("novel", grid=[50], trials=50)
    assert cfg.family.N == 20
    rep = run_sweep(cfg)
    row = rep.rows[0]
    cond = row.conditional_success_rate if row.conditional_success_rate is not None else 0.0
    exact = row.constraints_exact_all is True
    ok = cond >= 0.9 and exact
    acceptance_line("novel-task recovery at C=50", ok,
                    f"conditional sign-consistency {cond:.2f} (>= 0.9) over {row.step1_successes} step-1 "
                    f"successes, n_novel mean {row.n_novel_mean}; hard constraints exact in every trial: {exact}")
    assert ok


def test_sweep_determinism(acceptance_line, tmp_path):
    from metaglasso.cli import main

    identical = True
    for kind, grid in (("samples", [20, 100]), ("tasks", [2, 10]), ("novel", [20])):
        fam = TaskFamilySpec(N=10, K=5, n=200, d=3) if kind == "novel" else TaskFamilySpec(N=10, K=10, n=1)
        cfg = SweepConfig(family=fam, sweep_kind=kind, grid=grid, trials=5, master_seed=17)
        a = results_csv(run_sweep(cfg))
        b = results_csv(run_sweep(SweepConfig.from_dict(cfg.to_dict()), workers=2))
        identical &= a == b
    args = ["sweep-samples", "--grid", "20,50", "--trials", "4", "--seed", "3", "--workers", "1"]
    main(args + ["--out", str(tmp_path / "x")])
    main(args + ["--out", str(tmp_path / "y")])
    identical &= (tmp_path / "x" / "results.csv").read_bytes() == (tmp_path / "y" / "results.csv").read_bytes()
    acceptance_line("sweep determinism", identical, f"byte-identical results.csv on rerun: {identical}")
    assert identical
