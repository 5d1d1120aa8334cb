"""Command-line entry point ``zop``."""

import argparse
from dataclasses import replace
import json
import logging
import os
import sys

import numpy as np

from .errors import ConfigurationError, ZopError
from .harness import load_config, make_oracle, run_experiment
from .problems import build_problem, list_problems, reference_solution

log = logging.getLogger("zop")

LOG_LEVELS = {"error": logging.ERROR, "warning": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("ZOP_LOG", "warning").strip().lower()
    level = LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if name not in LOG_LEVELS:
        log.warning("ZOP_LOG=%r not recognized; using warning", name)


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.out is not None:
        cfg.output_dir = args.out
    return run_experiment(cfg, jobs=args.jobs)


def _cmd_certify(args):
    from .stationarity import certify

    cfg = load_config(args.config)
    problem = build_problem(cfg.problem)
    oracle = make_oracle(problem, cfg.oracle)
    try:
        x = np.array([float(v) for v in args.point.split(",")])
    except ValueError:
        raise ConfigurationError(f"--point must be a comma-separated vector, got {args.point!r}")
    params = cfg.certify.params(cfg.solver.mu, cfg.solver.seed, cfg.solver.c_const, cfg.solver.G)
    c = certify(problem, oracle, x, cfg.certify.epsilon, params)
    print(json.dumps({
        "x": x.tolist(), "x_hat": c.x_hat.tolist(), "lambda": c.lam, "mu": c.mu,
        "env_grad_norm": c.env_grad_norm, "epsilon": c.epsilon, "passed": c.passed,
        "implication": c.implication(), "inner_iters": c.inner_iters,
        "inner_residual": c.inner_residual, "oracle_calls": c.oracle_calls,
    }, indent=2))
    return 0


def _cmd_list(args):
    for name, desc in list_problems().items():
        print(f"{name:14s} {desc}")
    return 0


def _cmd_reference(args):
    cfg = load_config(args.config)
    ref = reference_solution(cfg.problem, args.resolution, cfg.reference_scenarios,
                             cfg.reference_seed)
    print(json.dumps({
        "problem": cfg.problem.name, "x_ref": ref.x_ref.tolist(), "phi_ref": ref.phi_ref,
        "method": ref.method, "resolution": ref.resolution, "phi_max": ref.phi_max,
        "num_scenarios": ref.num_scenarios,
    }, indent=2))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="zop", description="Zeroth-order proximal stochastic solver")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a seeded experiment sweep")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("certify", help="certify envelope stationarity at a point")
    c.add_argument("--config", required=True)
    c.add_argument("--point", required=True, help="comma-separated vector")
    c.set_defaults(func=_cmd_certify)

    ls = sub.add_parser("list-problems", help="list the instance zoo")
    ls.set_defaults(func=_cmd_list)

    ref = sub.add_parser("reference", help="grid/SAA reference solution")
    ref.add_argument("--config", required=True)
    ref.add_argument("--resolution", type=float, default=1e-2)
    ref.set_defaults(func=_cmd_reference)
    return p


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        for key, msg in exc.violations or [("config", str(exc))]:
            print(f"error: {key}: {msg}", file=sys.stderr)
        return 2
    except (ZopError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
