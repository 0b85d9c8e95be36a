"""Command-line entry point: ``metaglasso <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numeric failure.
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, io
from .harness import SweepConfig, default_sweep, results_csv, run_sweep
from .matops import NotPositiveDefinite
from .model import PrecisionMatrix, empirical_covariance
from .solver import SolverConfig, constrained_glasso, pooled_glasso
from .synth import TaskFamilySpec, gen_family, sample_mvn
from .theory import SingularBlock, sufficiency_report, theory_constants
from . import rng

log = logging.getLogger("metaglasso")

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(extra: dict) -> dict:
    return {"tool": "metaglasso", "version": __version__, **extra}


def _result_json(res, support_tau=1e-6) -> dict:
    return {
        "omega": io.matrix_to_json(res.omega.matrix),
        "sparse": io.matrix_to_json(res.sparse),
        "support": io.support_to_json(res.support(support_tau)),
        "kkt": asdict(res.kkt) if res.kkt else None,
        "iterations": res.iterations,
        "primal_residual": res.primal_residual,
        "dual_residual": res.dual_residual,
        "converged": res.converged,
        "polished": res.polished,
        "lambda": res.lam,
    }


def _solver_cfg(args) -> SolverConfig:
    return SolverConfig(args.lam, rho=args.rho, tol_primal=args.tol, tol_dual=args.tol, max_iter=args.max_iter)


def cmd_gen(args):
    spec = TaskFamilySpec(N=args.N, K=args.K, n=args.n, n_novel=args.n_novel, d=args.d,
                          keep_prob=args.keep_prob, min_eig=args.min_eig, seed=args.seed)
    fam = gen_family(spec)
    covs = None
    if args.samples:
        task_covs = [empirical_covariance(sample_mvn(t, spec.n, rng.derive_seed(spec.seed, "samples", k)))
                     for k, t in enumerate(fam.tasks)]
        novel_cov = None
        if spec.n_novel:
            novel_cov = empirical_covariance(sample_mvn(fam.novel, spec.n_novel, rng.derive_seed(spec.seed, "novel-samples")))
        covs = (task_covs, novel_cov)
    out = _out_dir(args)
    io.write_family(out, fam, covs)
    io.write_json(out / "manifest.json", _manifest({"family": spec.to_dict(), "seed": spec.seed}))
    return 0


def _read_covs(paths):
    covs = [io.read_covariance(p) for p in paths]
    if not covs:
        raise UsageError("at least one covariance file is required")
    return covs


def cmd_solve(args):
    covs = _read_covs(args.covariances)
    cfg = _solver_cfg(args)
    if args.support or args.fixed_diag:
        if not (args.support and args.fixed_diag) or len(covs) != 1:
            raise UsageError("constrained mode needs one covariance plus --support and --fixed-diag")
        res = constrained_glasso(covs[0], io.read_support(args.support), io.read_vector(args.fixed_diag), cfg)
    else:
        weights = args.weights
        res = pooled_glasso(covs, weights, cfg)
    _emit(args, "result.json", _result_json(res, args.tau))
    return 0 if res.converged else EXIT_NUMERIC


def cmd_novel(args):
    covs = _read_covs(args.tasks)
    novel_cov = io.read_covariance(args.novel_cov)
    step1 = pooled_glasso(covs, None, _solver_cfg(args))
    support = step1.support(args.tau).with_diagonal()
    fixed = np.diag(step1.sparse).copy()
    lam_n = args.lambda_novel if args.lambda_novel is not None else args.lam
    step2 = constrained_glasso(novel_cov, support, fixed, replace(_solver_cfg(args), lam=lam_n))
    _emit(args, "novel.json", {"step1": _result_json(step1, args.tau), "step2": _result_json(step2, args.tau)})
    return 0 if step1.converged and step2.converged else EXIT_NUMERIC


def cmd_diagnose(args):
    omega = PrecisionMatrix(io.read_matrix(args.precision))
    support = io.read_support(args.support) if args.support else None
    kw = dict(sigma_sg=args.sigma, gamma_bound=args.gamma, c_max=args.c_max, beta=args.beta)
    c = theory_constants(omega, support, **kw)
    c_novel = None
    s_off = len((support or omega.support(0.0)).off())
    if args.novel:
        novel = PrecisionMatrix(io.read_matrix(args.novel))
        c_novel = theory_constants(novel, None, **kw)
    rep = sufficiency_report(c, args.n, args.K, omega.n, c_novel, args.n_novel, s_off)
    payload = {
        "constants": c.to_dict(),
        "delta_star": rep.delta_star,
        "assumption_flags": {"alpha_violated": c.alpha_violated, "beta_precondition_ok": rep.precondition_ok},
        "report": rep.to_dict(),
    }
    if c_novel is not None:
        payload["novel_constants"] = c_novel.to_dict()
    _emit(args, "diagnose.json", payload)
    return 0


def _sweep_config(args, kind: str) -> SweepConfig:
    if args.config:
        d = io.read_json(args.config)
        d.setdefault("sweep_kind", kind)
        if d["sweep_kind"] != kind and kind != "baseline":
            raise UsageError(f"config sweep_kind {d['sweep_kind']!r} does not match subcommand")
        cfg = SweepConfig.from_dict(d)
    else:
        cfg = default_sweep("samples" if kind == "baseline" else kind)
    fam_over = {k: v for k, v in (("N", args.N), ("K", args.K), ("d", args.d), ("keep_prob", args.keep_prob),
                                   ("min_eig", args.min_eig), ("n", args.n)) if v is not None}
    if fam_over:
        cfg.family = replace(cfg.family, **fam_over)
    if args.grid:
        cfg.grid = [float(x) for x in args.grid.split(",")]
    if args.trials is not None:
        cfg.trials = args.trials
    if args.lambda_rule:
        cfg.lambda_rule = args.lambda_rule
    if args.seed is not None:
        cfg.master_seed = args.seed
    if kind == "baseline" or args.with_baseline:
        cfg.baseline = True
    return SweepConfig.from_dict(cfg.to_dict())


def cmd_sweep(args, kind):
    cfg = _sweep_config(args, kind)
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    report = run_sweep(cfg, workers=workers,
                       progress=lambda r: log.info("grid=%s n=%d K=%d success=%d/%d", r.grid_value, r.n, r.K,
                                                   r.successes, r.trials))
    out = _out_dir(args)
    (out / "results.csv").write_text(results_csv(report))
    io.write_json(out / "report.json", report.to_dict())
    io.write_json(out / "manifest.json", _manifest({
        "config": cfg.to_dict(),
        "unstated_choices": {
            "trials_per_point": cfg.trials,
            "lambda_rule": cfg.lambda_rule,
            "novel_lambda_c": cfg.novel_lambda_c,
            "degree_d": cfg.family.d,
            "diagonal_loading_min_eig": cfg.family.min_eig,
            "support_threshold_tau": cfg.tau,
        },
    }))
    sys.stdout.write(results_csv(report))
    return 0


def _emit(args, name, payload):
    if args.out:
        io.write_json(_out_dir(args) / name, payload)
    else:
        json.dump(payload, sys.stdout, indent=1)
        sys.stdout.write("\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="64-bit seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--config", default=None, help="JSON config file (sweeps)")
    common.add_argument("-v", "--verbose", action="store_true")

    solver = _Parser(add_help=False)
    solver.add_argument("--lambda", dest="lam", type=float, required=True)
    solver.add_argument("--rho", type=float, default=1.0)
    solver.add_argument("--tol", type=float, default=None)
    solver.add_argument("--max-iter", type=int, default=2000)
    solver.add_argument("--tau", type=float, default=1e-6)

    p = _Parser(prog="metaglasso", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a random task family")
    g.add_argument("--N", type=int, default=10)
    g.add_argument("--K", type=int, default=10)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--n-novel", type=int, default=0)
    g.add_argument("--d", type=float, default=3)
    g.add_argument("--keep-prob", type=float, default=0.9)
    g.add_argument("--min-eig", type=float, default=3.0)
    g.add_argument("--samples", action="store_true", help="also write sample covariances")

    s = sub.add_parser("solve", parents=[common, solver], help="pooled or constrained graphical lasso")
    s.add_argument("covariances", nargs="+")
    s.add_argument("--weights", type=lambda t: [float(x) for x in t.split(",")], default=None)
    s.add_argument("--support", default=None)
    s.add_argument("--fixed-diag", default=None)

    nv = sub.add_parser("novel", parents=[common, solver], help="two-step estimate for a novel task")
    nv.add_argument("--tasks", nargs="+", required=True)
    nv.add_argument("--novel-cov", required=True)
    nv.add_argument("--lambda-novel", type=float, default=None)

    dg = sub.add_parser("diagnose", parents=[common], help="theoretical constants and bounds")
    dg.add_argument("precision")
    dg.add_argument("--support", default=None)
    dg.add_argument("--novel", default=None, help="novel-task precision matrix")
    dg.add_argument("--n", type=float, default=None)
    dg.add_argument("--K", type=int, default=None)
    dg.add_argument("--n-novel", type=float, default=None)
    dg.add_argument("--sigma", type=float, default=1.0)
    dg.add_argument("--gamma", type=float, default=None)
    dg.add_argument("--c-max", type=float, default=None)
    dg.add_argument("--beta", type=float, default=0.0)

    for name, help_ in (("sweep-samples", "success rate vs per-task sample size"),
                        ("sweep-tasks", "success rate vs number of tasks"),
                        ("sweep-novel", "novel-task success vs sample size"),
                        ("baseline", "sweep with per-task graphical lasso reference")):
        sw = sub.add_parser(name, parents=[common], help=help_)
        sw.add_argument("--grid", default=None, help="comma-separated grid values")
        sw.add_argument("--trials", type=int, default=None)
        sw.add_argument("--lambda-rule", default=None, help="practical(c) or oracle-thm2")
        sw.add_argument("--N", type=int, default=None)
        sw.add_argument("--K", type=int, default=None)
        sw.add_argument("--n", type=int, default=None)
        sw.add_argument("--d", type=float, default=None)
        sw.add_argument("--keep-prob", type=float, default=None)
        sw.add_argument("--min-eig", type=float, default=None)
        sw.add_argument("--workers", type=int, default=None)
        sw.add_argument("--with-baseline", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handlers = {
        "gen": cmd_gen, "solve": cmd_solve, "novel": cmd_novel, "diagnose": cmd_diagnose,
        "sweep-samples": lambda a: cmd_sweep(a, "samples"),
        "sweep-tasks": lambda a: cmd_sweep(a, "tasks"),
        "sweep-novel": lambda a: cmd_sweep(a, "novel"),
        "baseline": lambda a: cmd_sweep(a, "baseline"),
    }
    if args.command == "gen" and args.seed is None:
        args.seed = 0
    try:
        return handlers[args.command](args)
    # numeric errors subclass ValueError, so they are matched first
    except (NotPositiveDefinite, SingularBlock, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"metaglasso: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"metaglasso: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ValueError, KeyError, TypeError) as exc:
        print(f"metaglasso: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
