"""Experiment harness: config parsing, seeded sweeps and CSV/JSON artifacts.

Config files are flat ``dotted.key = value`` lines; ``#`` starts a comment.
See ``KEYS`` for the accepted keys, their types and defaults.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, field, replace
import io
import json
import logging
import math
import os
from pathlib import Path
import time
import traceback
from typing import List, Optional

import numpy as np

from ._backend import BACKEND
from .errors import ConfigurationError, RunAborted, ZopError
from .oracles import (make_ergodic_max_oracle, make_exact_oracle, make_inner_max_oracle,
                      make_inner_min_oracle, make_noisy_oracle)
from .problem import Regularizer
from .problems import ProblemSpec, ZOO, build_problem
from .solver import SolverConfig, STEP_MODES, estimate_phi_upper, run_ziproxsg
from .stationarity import CertifyParams, certify

log = logging.getLogger(__name__)

ORACLE_KINDS = ("exact", "noisy", "noisy_one_sided", "inner_min", "inner_max", "ergodic")
REG_KINDS = ("default", "zero", "l1", "box", "l2ball", "l1_box")
FAILURE_MARKER = "FAILED"


def _float(s):
    return float(s)


def _int(s):
    s = s.strip()
    return int(s, 16) if s.lower().startswith("0x") else int(s)


def _bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return [float(v) for v in s.replace(" ", "").split(",") if v]


def _ints(s):
    """Comma list of integers; ``a:b`` expands to range(a, b)."""
    out = []
    for part in s.replace(" ", "").split(","):
        if not part:
            continue
        if ":" in part:
            a, b = part.split(":")
            out.extend(range(int(a), int(b)))
        else:
            out.append(_int(part))
    return out


def _float_or_auto(s):
    return "auto" if s.strip().lower() == "auto" else float(s)


def _str(s):
    return s.strip()


# key -> (parser, default)
KEYS = {
    "problem.name": (_str, None),
    "problem.n": (_int, None),
    "problem.m": (_int, 2),
    "problem.data_seed": (_int, 0),
    "problem.noise_scale": (_float, 0.1),
    "problem.kappa": (_float, 1.0),
    "problem.inner_radius": (_float, 1.0),
    "problem.pieces": (_int, 3),
    "problem.nonconvex_weight": (_float, 0.0),
    "problem.additive_scale": (_float, 0.0),
    "problem.regularizer": (_str, "default"),
    "problem.regularizer.weight": (_float, 0.0),
    "problem.regularizer.lo": (_floats, None),
    "problem.regularizer.hi": (_floats, None),
    "problem.regularizer.radius": (_float, None),
    "oracle.kind": (_str, "auto"),
    "oracle.delta": (_float, 0.0),
    "oracle.noise_seed": (_int, 0),
    "oracle.tol": (_float, 1e-6),
    "oracle.budget": (_int, 10_000),
    "oracle.batch": (_int, 64),
    "oracle.inner_seed": (_int, 0),
    "solver.mu": (_float, 0.1),
    "solver.T": (_int, 1000),
    "solver.seed": (_int, 0),
    "solver.x0": (_floats, None),
    "solver.step_mode": (_str, "theorem_b1"),
    "solver.gamma": (_float, None),
    "solver.phi_upper": (_float_or_auto, 1.0),
    "solver.phi_lower": (_float, None),
    "solver.c_const": (_float, 1.0),
    "solver.rho_bar_factor": (_float, 2.0),
    "solver.G": (_float, None),
    "solver.iterate_cap": (_int, 100_000),
    "certify.enabled": (_bool, False),
    "certify.lambda": (_float, None),
    "certify.epsilon": (_float, None),
    "certify.iters": (_int, 2000),
    "certify.batch": (_int, 64),
    "certify.rho": (_float, None),
    "certify.seed_offset": (_int, 1_000_000),
    "certify.cadence": (_floats, None),
    "sweep.seeds": (_ints, None),
    "sweep.T_values": (_ints, None),
    "reference.num_scenarios": (_int, 200),
    "reference.seed": (_int, 0),
    "output_dir": (_str, "zop_out"),
}


@dataclass
class OracleConfig:
    kind: str = "exact"
    delta: float = 0.0
    noise_seed: int = 0
    tol: float = 1e-6
    budget: int = 10_000
    batch: int = 64
    inner_seed: int = 0


@dataclass
class CertifyConfig:
    enabled: bool = False
    lam: Optional[float] = None
    epsilon: Optional[float] = None
    iters: int = 2000
    batch: int = 64
    rho: Optional[float] = None
    seed_offset: int = 1_000_000
    cadence: Optional[List[float]] = None

    def params(self, mu, seed, c_const=1.0, G=None):
        return CertifyParams(mu=mu, lam=self.lam, iters=self.iters, batch=self.batch,
                             rho=self.rho, c_const=c_const, G=G,
                             seed=(seed + self.seed_offset) % 2 ** 64)


@dataclass
class ExperimentConfig:
    problem: ProblemSpec
    oracle: OracleConfig
    solver: SolverConfig
    certify: CertifyConfig
    seeds: List[int]
    T_values: List[int]
    output_dir: str = "zop_out"
    phi_auto: bool = False
    phi_lower: Optional[float] = None
    reference_scenarios: int = 200
    reference_seed: int = 0


def _default_oracle_kind(name):
    if name == "two_stage_qp":
        return "inner_min"
    if name == "mm_instant":
        return "inner_max"
    if name == "mm_ergodic":
        return "ergodic"
    return "exact"


def _default_x0(reg, n):
    if reg.contains(np.zeros(n)):
        return [0.0] * n
    lo, hi = reg.bounds(n)
    return list(0.5 * (lo + hi))


def parse_config(text):
    """Parse and validate a config; raises ConfigurationError listing every violation."""
    raw = {}
    bad = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            bad.append((f"line {lineno}", "expected 'key = value'"))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            bad.append((key, "unknown key"))
            continue
        parser = KEYS[key][0]
        try:
            raw[key] = parser(value)
        except (ValueError, TypeError):
            bad.append((key, f"cannot parse {value!r} as {parser.__name__.lstrip('_')}"))
    vals = {k: raw.get(k, d) for k, (_, d) in KEYS.items()}
    for key in ("problem.name", "problem.n"):
        if vals[key] is None and not any(k == key for k, _ in bad):
            bad.append((key, "required"))
    if bad and any(k in ("problem.name", "problem.n") for k, _ in bad):
        raise ConfigurationError(_summary(bad), bad)
    if vals["problem.name"] not in ZOO:
        bad.append(("problem.name", f"unknown instance; expected one of {sorted(ZOO)}"))
        raise ConfigurationError(_summary(bad), bad)

    n = vals["problem.n"]
    reg = None
    rk = vals["problem.regularizer"]
    if rk not in REG_KINDS:
        bad.append(("problem.regularizer", f"must be one of {REG_KINDS}"))
    elif rk != "default":
        try:
            reg = _make_regularizer(rk, vals, n)
        except ZopError as exc:
            bad.append(("problem.regularizer", str(exc)))
    spec = ProblemSpec(name=vals["problem.name"], n=n, m=vals["problem.m"],
                       data_seed=vals["problem.data_seed"], regularizer=reg,
                       noise_scale=vals["problem.noise_scale"], kappa=vals["problem.kappa"],
                       inner_radius=vals["problem.inner_radius"], pieces=vals["problem.pieces"],
                       nonconvex_weight=vals["problem.nonconvex_weight"],
                       additive_scale=vals["problem.additive_scale"])
    bad.extend(spec.violations())

    kind = vals["oracle.kind"]
    if kind == "auto":
        kind = _default_oracle_kind(spec.name)
    oracle = OracleConfig(kind, vals["oracle.delta"], vals["oracle.noise_seed"], vals["oracle.tol"],
                          vals["oracle.budget"], vals["oracle.batch"], vals["oracle.inner_seed"])
    if kind not in ORACLE_KINDS:
        bad.append(("oracle.kind", f"must be one of {ORACLE_KINDS}"))
    if oracle.delta < 0:
        bad.append(("oracle.delta", "must be nonnegative"))
    if kind in ("inner_min", "inner_max", "ergodic") and not oracle.tol > 0:
        bad.append(("oracle.tol", "must be positive"))
    if oracle.budget < 0:
        bad.append(("oracle.budget", "must be nonnegative"))
    if oracle.batch < 1:
        bad.append(("oracle.batch", "must be positive"))
    expected = {"two_stage_qp": ("inner_min",), "mm_instant": ("inner_max",),
                "mm_ergodic": ("ergodic", "inner_max")}
    if kind in ("inner_min", "inner_max", "ergodic") and kind not in expected.get(spec.name, ()):
        bad.append(("oracle.kind", f"{kind} is not available for {spec.name}"))
    if spec.name == "two_stage_qp" and spec.m > 3 and kind in ("exact", "noisy", "noisy_one_sided"):
        bad.append(("oracle.kind", "two_stage_qp with m > 3 has no closed form; use inner_min"))

    phi = vals["solver.phi_upper"]
    solver = SolverConfig(mu=vals["solver.mu"], T=vals["solver.T"], x0=None,
                          seed=vals["solver.seed"], step_mode=vals["solver.step_mode"],
                          gamma=vals["solver.gamma"],
                          phi_upper=1.0 if phi == "auto" else phi, c_const=vals["solver.c_const"],
                          rho_bar_factor=vals["solver.rho_bar_factor"], G=vals["solver.G"],
                          iterate_cap=vals["solver.iterate_cap"])
    if solver.step_mode == "custom":
        bad.append(("solver.step_mode", "custom step sequences are API-only"))
    else:
        bad.extend(v for v in solver.violations() if v[0] != "solver.steps")
    if not bad or all(not k.startswith("problem.") for k, _ in bad):
        r = spec.resolved_regularizer()
        x0 = vals["solver.x0"]
        if x0 is None:
            x0 = _default_x0(r, n)
        if len(x0) != n:
            bad.append(("solver.x0", f"needs {n} entries, got {len(x0)}"))
        elif not r.contains(np.asarray(x0)):
            bad.append(("solver.x0", "outside dom r"))
        solver.x0 = list(x0)

    cert = CertifyConfig(vals["certify.enabled"], vals["certify.lambda"], vals["certify.epsilon"],
                         vals["certify.iters"], vals["certify.batch"], vals["certify.rho"],
                         vals["certify.seed_offset"], vals["certify.cadence"])
    if cert.lam is not None and not cert.lam > 0:
        bad.append(("certify.lambda", "must be positive"))
    if cert.epsilon is not None and not cert.epsilon > 0:
        bad.append(("certify.epsilon", "must be positive"))
    if cert.iters < 1:
        bad.append(("certify.iters", "must be positive"))
    if cert.batch < 1:
        bad.append(("certify.batch", "must be positive"))
    if cert.rho is not None and cert.rho < 0:
        bad.append(("certify.rho", "must be nonnegative"))
    if cert.cadence is not None and any(not 0.0 <= c <= 1.0 for c in cert.cadence):
        bad.append(("certify.cadence", "fractions must lie in [0, 1]"))

    seeds = vals["sweep.seeds"] if vals["sweep.seeds"] is not None else [solver.seed]
    Ts = vals["sweep.T_values"] if vals["sweep.T_values"] is not None else [solver.T]
    if not seeds:
        bad.append(("sweep.seeds", "empty"))
    if any(not 0 <= s < 2 ** 64 for s in seeds):
        bad.append(("sweep.seeds", "seeds must be 64-bit unsigned integers"))
    if not Ts or any(t < 0 for t in Ts):
        bad.append(("sweep.T_values", "must be nonnegative integers"))
    if vals["reference.num_scenarios"] < 1:
        bad.append(("reference.num_scenarios", "must be positive"))
    if bad:
        raise ConfigurationError(_summary(bad), bad)
    return ExperimentConfig(spec, oracle, solver, cert, list(seeds), list(Ts), vals["output_dir"],
                            phi == "auto", vals["solver.phi_lower"], vals["reference.num_scenarios"],
                            vals["reference.seed"])


def _summary(bad):
    return "invalid config: " + "; ".join(f"{k}: {m}" for k, m in bad)


def _make_regularizer(kind, vals, n):
    lo = vals["problem.regularizer.lo"]
    hi = vals["problem.regularizer.hi"]

    def bound(v, name):
        if v is None:
            raise ConfigurationError(f"{kind} needs problem.regularizer.{name}")
        return v[0] if len(v) == 1 else tuple(v)

    if kind == "zero":
        return Regularizer.zero()
    if kind == "l1":
        return Regularizer.l1(vals["problem.regularizer.weight"])
    if kind == "box":
        return Regularizer.box(bound(lo, "lo"), bound(hi, "hi"))
    if kind == "l2ball":
        if vals["problem.regularizer.radius"] is None:
            raise ConfigurationError("l2ball needs problem.regularizer.radius")
        return Regularizer.l2ball(vals["problem.regularizer.radius"])
    return Regularizer.l1_plus_box(vals["problem.regularizer.weight"], bound(lo, "lo"),
                                   bound(hi, "hi"))


def load_config(path):
    return parse_config(Path(path).read_text())


def make_oracle(problem, oc):
    if oc.kind == "exact":
        return make_exact_oracle(problem)
    if oc.kind in ("noisy", "noisy_one_sided"):
        return make_noisy_oracle(problem, oc.delta, oc.noise_seed, oc.kind == "noisy_one_sided")
    if oc.kind == "inner_min":
        return make_inner_min_oracle(problem, oc.tol, oc.budget)
    if oc.kind == "inner_max":
        return make_inner_max_oracle(problem, oc.tol, oc.budget)
    return make_ergodic_max_oracle(problem, oc.tol, oc.batch, oc.budget, oc.inner_seed)


def resolve_phi(config, problem=None, oracle=None):
    """Phi for the config, running the estimator when phi_upper = auto."""
    if not config.phi_auto:
        return config.solver.phi_upper
    problem = problem or build_problem(config.problem)
    oracle = oracle or make_oracle(problem, config.oracle)
    return estimate_phi_upper(problem, oracle, np.asarray(config.solver.x0), config.solver.mu,
                              phi_lower=config.phi_lower)


def _fmt(v):
    if v is None:
        return ""
    return format(float(v), ".17g")


def cadence_rows(T, t_star, fractions=None):
    fr = fractions if fractions is not None else (0.0, 0.25, 0.5, 0.75, 1.0)
    rows = {int(math.floor(f * T)) for f in fr}
    rows.add(int(t_star))
    return sorted(rows)


def emit_records(record, certificates, paths, summary_extra=None):
    """Write trajectory.csv and summary.json for one run.

    ``certificates`` maps t -> Certificate (empty or None when certification
    is disabled, which drops the env_grad_norm column).  ``paths`` is the
    run directory.
    """
    out = Path(paths)
    out.mkdir(parents=True, exist_ok=True)
    certs = certificates or {}
    with_cert = bool(certs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["t", "alpha", "grad_est_norm", "plus_val", "minus_val", "x_norm"]
    if with_cert:
        header.append("env_grad_norm")
    w.writerow(header)
    rows = len(record.grad_norms)
    for t in range(rows):
        row = [str(t), _fmt(record.step_sizes[t]), _fmt(record.grad_norms[t]),
               _fmt(record.plus_vals[t]), _fmt(record.minus_vals[t]), _fmt(record.x_norms[t])]
        if with_cert:
            c = certs.get(t)
            row.append(_fmt(c.env_grad_norm) if c is not None else "")
        w.writerow(row)
    (out / "trajectory.csv").write_text(buf.getvalue())
    cert_star = certs.get(record.t_star)
    cert_calls = sum(c.oracle_calls for c in certs.values())
    summary = {
        "seed": record.seed,
        "T": record.T,
        "mu": record.mu,
        "delta_bound": None,
        "t_star": record.t_star,
        "env_grad_norm_at_tstar": None if cert_star is None else cert_star.env_grad_norm,
        "wallclock_sec": record.wallclock,
        "oracle_calls": record.oracle_calls + cert_calls,
        "solver_oracle_calls": record.oracle_calls,
        "certification_oracle_calls": cert_calls,
        "complete": record.complete,
        "x_star": [float(v) for v in record.x_star],
    }
    summary.update(summary_extra or {})
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def run_dir(output_dir, seed, T):
    return Path(output_dir) / f"seed{seed}_T{T}"


def run_single(config, seed, T, phi_upper):
    """One (seed, T) entry of the sweep; returns its summary dict."""
    problem = build_problem(config.problem)
    oracle = make_oracle(problem, config.oracle)
    solver = replace(config.solver, seed=seed, T=T, phi_upper=phi_upper)
    path = run_dir(config.output_dir, seed, T)
    path.mkdir(parents=True, exist_ok=True)
    marker = path / FAILURE_MARKER
    if marker.exists():
        marker.unlink()
    extra = {"delta_bound": oracle.delta_bound, "phi_upper": phi_upper,
             "oracle": config.oracle.kind, "problem": config.problem.name, "backend": BACKEND}
    try:
        rec = run_ziproxsg(problem, oracle, solver)
    except RunAborted as exc:
        if exc.record is not None:
            emit_records(exc.record, None, path, dict(extra, error=str(exc)))
        marker.write_text(f"{exc}\n")
        raise
    extra["step_size"] = float(rec.step_sizes[0]) if len(rec.step_sizes) else None
    certs = {}
    if config.certify.enabled:
        params = config.certify.params(solver.mu, seed, solver.c_const, solver.G)
        for t in cadence_rows(T, rec.t_star, config.certify.cadence):
            try:
                x_t = rec.iterate(t)
            except ZopError:
                continue
            certs[t] = certify(problem, oracle, x_t, config.certify.epsilon, params)
        c = certs[rec.t_star]
        extra.update(lam=c.lam, passed=c.passed, implication=c.implication())
    return emit_records(rec, certs, path, extra)


def _run_entry(args):
    config, seed, T, phi = args
    try:
        return run_single(config, seed, T, phi), None
    except Exception as exc:  # reported per run, the sweep carries on
        path = run_dir(config.output_dir, seed, T)
        path.mkdir(parents=True, exist_ok=True)
        marker = path / FAILURE_MARKER
        if not marker.exists():
            marker.write_text("".join(traceback.format_exception_only(type(exc), exc)))
        return None, f"seed={seed} T={T}: {exc}"


def aggregate(summaries):
    """mean/std of the certified norms per T."""
    by_T = {}
    for s in summaries:
        by_T.setdefault(s["T"], []).append(s)
    out = {}
    for T, group in sorted(by_T.items()):
        norms = [s["env_grad_norm_at_tstar"] for s in group if s["env_grad_norm_at_tstar"] is not None]
        entry = {"runs": len(group), "seeds": sorted(s["seed"] for s in group)}
        if norms:
            a = np.asarray(norms)
            entry.update(mean_env_grad_norm=float(a.mean()),
                         std_env_grad_norm=float(a.std(ddof=1)) if len(a) > 1 else 0.0,
                         mean_env_grad_norm_sq=float(np.mean(a * a)),
                         std_env_grad_norm_sq=float(np.std(a * a, ddof=1)) if len(a) > 1 else 0.0)
        out[str(T)] = entry
    return out


def run_experiment(config, jobs=1):
    """Run the whole sweep; returns the process exit status (0 on success)."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    phi = resolve_phi(config)
    tasks = [(config, s, T, phi) for T in config.T_values for s in config.seeds]
    t0 = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_entry, tasks))
    else:
        results = [_run_entry(t) for t in tasks]
    summaries = [s for s, _ in results if s is not None]
    errors = [e for _, e in results if e is not None]
    for e in errors:
        log.error("run failed: %s", e)
    agg = {"problem": config.problem.name, "phi_upper": phi, "per_T": aggregate(summaries),
           "failures": errors, "wallclock_sec": time.perf_counter() - t0}
    (out / "aggregate.json").write_text(json.dumps(agg, indent=2, sort_keys=True) + "\n")
    log.info("sweep finished: %d runs, %d failures", len(tasks), len(errors))
    return 1 if errors else 0
