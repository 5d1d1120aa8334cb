"""Zeroth-order inexact proximal stochastic gradient (Z-iProxSG) main loop."""

from dataclasses import dataclass, field
import logging
import math
import time
from typing import Optional, Sequence
import warnings

import numpy as np

from .errors import ConfigurationError, InputError, OracleError, RunAborted
from .problem import ScenarioStream, validate_point
from .prox import apply_prox
from .rng import CounterStream
from .smoothing import estimate_smoothed_value, sphere_rows

log = logging.getLogger(__name__)

STEP_MODES = ("theorem_b1", "theorem_b2", "constant", "custom")
SECOND_MOMENT_CONST = 32.0 * math.sqrt(2.0 * math.pi)
CHUNK = 4096


@dataclass
class SolverConfig:
    """Parameters of one Z-iProxSG run.

    ``theorem_b1`` and ``theorem_b2`` share the rate-bound step formula.
    ``constant`` uses ``gamma`` and ``custom`` takes ``steps`` of length T+1.
    ``G`` overrides the problem's Lipschitz bound.
    """

    mu: float
    T: int
    x0: Sequence[float]
    seed: int = 0
    step_mode: str = "theorem_b1"
    gamma: Optional[float] = None
    steps: Optional[Sequence[float]] = None
    phi_upper: float = 1.0
    c_const: float = 1.0
    rho_bar_factor: float = 2.0
    G: Optional[float] = None
    iterate_cap: int = 100_000

    def violations(self):
        """(key, message) pairs for every invalid field."""
        out = []
        if not (isinstance(self.mu, (int, float)) and self.mu > 0):
            out.append(("solver.mu", "must be positive"))
        if not (isinstance(self.T, (int, np.integer)) and self.T >= 0):
            out.append(("solver.T", "must be a nonnegative integer"))
        if not self.phi_upper > 0:
            out.append(("solver.phi_upper", "must be positive"))
        if not self.c_const > 0:
            out.append(("solver.c_const", "must be positive"))
        if not 1.0 < self.rho_bar_factor <= 2.0:
            out.append(("solver.rho_bar_factor", "must lie in (1, 2]"))
        if not 0 <= int(self.seed) < 2 ** 64:
            out.append(("solver.seed", "must be a 64-bit unsigned integer"))
        if self.step_mode not in STEP_MODES:
            out.append(("solver.step_mode", f"must be one of {STEP_MODES}"))
        elif self.step_mode == "constant" and not (self.gamma is not None and self.gamma > 0):
            out.append(("solver.gamma", "constant step mode needs a positive gamma"))
        elif self.step_mode == "custom":
            if self.steps is None or (isinstance(self.T, int) and len(self.steps) != self.T + 1):
                out.append(("solver.steps", "custom step mode needs T+1 step sizes"))
            elif any(not a > 0 for a in self.steps):
                out.append(("solver.steps", "step sizes must be positive"))
        if self.G is not None and not self.G > 0:
            out.append(("solver.G", "must be positive"))
        if self.iterate_cap < 2:
            out.append(("solver.iterate_cap", "must be at least 2"))
        return out

    def validate(self):
        bad = self.violations()
        if bad:
            raise ConfigurationError("; ".join(f"{k}: {m}" for k, m in bad), bad)
        return self


@dataclass
class RunRecord:
    """Trajectory of one run.

    ``iterates`` holds the rows of x_t for the indices in ``iterate_index``
    (all t = 0..T+1 when T+2 fits under the cap, otherwise a strided subset
    that always includes x_{t*} and the last iterate).  Per-iteration scalars
    are kept for every t.
    """

    seed: int
    T: int
    mu: float
    step_sizes: np.ndarray
    grad_norms: np.ndarray
    plus_vals: np.ndarray
    minus_vals: np.ndarray
    x_norms: np.ndarray
    iterates: np.ndarray
    iterate_index: np.ndarray
    t_star: int
    x_star: np.ndarray
    wallclock: float = 0.0
    rho: float = float("nan")
    rho_bar: float = float("nan")
    grads: Optional[np.ndarray] = None
    complete: bool = True
    oracle_calls: int = 0

    @property
    def dense(self):
        return len(self.iterate_index) == self.T + 2 if self.complete else True

    @property
    def zeta(self):
        """zeta_t = 1 - alpha_t * rho_bar."""
        return 1.0 - self.step_sizes * self.rho_bar

    def iterate(self, t):
        pos = np.searchsorted(self.iterate_index, t)
        if pos >= len(self.iterate_index) or self.iterate_index[pos] != t:
            raise InputError(f"iterate {t} was not stored (strided record)")
        return self.iterates[pos]

    @property
    def x_final(self):
        return self.iterates[-1]


def theorem_step_size(phi_upper, c, G, n, mu, delta_bound, T):
    """Constant step from the convergence-rate bound:

    alpha = sqrt(Phi / (4 c G n^{3/2} mu^{-1} (32 sqrt(2 pi) G^2 + n delta~ / mu^2) (T+1)))
    """
    if not phi_upper > 0:
        raise InputError("phi_upper must be positive")
    for name, v in (("c", c), ("G", G), ("n", n), ("mu", mu)):
        if not v > 0:
            raise InputError(f"{name} must be positive")
    if delta_bound < 0:
        raise InputError("delta_bound must be nonnegative")
    if T < 0:
        raise InputError("T must be nonnegative")
    denom = (4.0 * c * G * n ** 1.5 / mu
             * (SECOND_MOMENT_CONST * G * G + n * delta_bound / (mu * mu)) * (T + 1))
    return math.sqrt(phi_upper / denom)


def second_moment_bound(n, G, mu, delta_bound):
    """Bound on E||G_t||^2 with the delta~ squared term of the proof."""
    return SECOND_MOMENT_CONST * n * G * G + (n * n / (mu * mu)) * 2.0 * delta_bound ** 2


def weak_convexity(G, n, mu, c=1.0):
    return c * G * math.sqrt(n) / mu


def _uniform_of(rng_handle):
    if isinstance(rng_handle, CounterStream):
        return rng_handle.uniform(0)
    if isinstance(rng_handle, np.random.Generator):
        return float(rng_handle.random())
    u = float(rng_handle)
    if not 0.0 <= u < 1.0:
        raise InputError("uniform must lie in [0, 1)")
    return u


def select_iterate(step_sizes, rng_handle):
    """Draw t with P(t) = alpha_t / sum(alpha) by inverse CDF.

    ``rng_handle`` is a CounterStream, a numpy Generator or a uniform in
    [0, 1).  A uniform landing exactly on a cumulative boundary selects the
    lower index.
    """
    a = np.asarray(step_sizes, dtype=float)
    if a.size == 0:
        raise InputError("step_sizes is empty")
    if np.any(~(a > 0)):
        raise InputError("step sizes must be positive")
    cum = np.cumsum(a)
    target = _uniform_of(rng_handle) * cum[-1]
    return int(min(np.searchsorted(cum, target, side="left"), a.size - 1))


def resolve_steps(problem, oracle, config):
    """Step sequence, weak-convexity modulus rho and rho_bar for a run."""
    n = problem.n
    G = config.G if config.G is not None else problem.f.lipschitz_bound
    rho = weak_convexity(G, n, config.mu, config.c_const)
    rho_bar = config.rho_bar_factor * rho
    cap = 1.0 / rho_bar
    T = config.T
    if config.step_mode in ("theorem_b1", "theorem_b2"):
        a = theorem_step_size(config.phi_upper, config.c_const, G, n, config.mu,
                              oracle.delta_bound, T)
        if a > cap:
            warnings.warn(f"theorem step {a:.4g} exceeds 1/rho_bar = {cap:.4g}; clipped",
                          RuntimeWarning, stacklevel=3)
            a = cap
        steps = np.full(T + 1, a)
    elif config.step_mode == "constant":
        if config.gamma > cap * (1.0 + 1e-12):
            raise ConfigurationError(
                f"constant step {config.gamma:.4g} exceeds 1/rho_bar = {cap:.4g}",
                [("solver.gamma", "exceeds 1/rho_bar")])
        steps = np.full(T + 1, float(config.gamma))
    else:
        steps = np.asarray(config.steps, dtype=float)
        if steps.shape != (T + 1,):
            raise ConfigurationError("custom steps must have length T+1",
                                     [("solver.steps", "wrong length")])
        if np.any(steps > cap * (1.0 + 1e-12)) or np.any(~(steps > 0)):
            raise ConfigurationError("custom steps must lie in (0, 1/rho_bar]",
                                     [("solver.steps", "outside (0, 1/rho_bar]")])
    return steps, rho, rho_bar


def _stored_indices(T, cap, t_star):
    total = T + 2
    if total <= cap:
        return np.arange(total)
    stride = math.ceil(total / (cap - 2))
    idx = set(range(0, total, stride))
    idx.update((t_star, T + 1))
    return np.array(sorted(idx))


def run_ziproxsg(problem, oracle, config):
    """Run Z-iProxSG for t = 0..T and return the RunRecord.

    Scenarios, directions and the output index come from independent streams
    tagged under the run seed, so the record is a pure function of the
    inputs.  An OracleError (or a non-finite value) aborts the run with
    RunAborted carrying the partial record.
    """
    config.validate()
    n = problem.n
    x = np.array(config.x0, dtype=float)
    if x.shape != (n,):
        raise ConfigurationError(f"x0 has shape {x.shape}, expected ({n},)",
                                 [("solver.x0", "wrong dimension")])
    if not validate_point(problem, x):
        raise ConfigurationError("x0 is outside dom r", [("solver.x0", "outside dom r")])
    steps, rho, rho_bar = resolve_steps(problem, oracle, config)
    T, mu, seed = config.T, float(config.mu), int(config.seed)
    law = oracle.law if oracle.law is not None else problem.law

    scen = ScenarioStream(seed, law, tags=("solver", "scenario"))
    dirs = CounterStream(seed, ("solver", "direction"))
    t_star = select_iterate(steps, CounterStream(seed, ("solver", "select")))
    keep = _stored_indices(T, config.iterate_cap, t_star)
    keep_set = np.zeros(T + 2, dtype=bool)
    keep_set[keep] = True
    dense = len(keep) == T + 2

    iterates = np.empty((len(keep), n))
    grads = np.empty((T + 1, n)) if dense else None
    grad_norms = np.empty(T + 1)
    plus_vals = np.empty(T + 1)
    minus_vals = np.empty(T + 1)
    x_norms = np.empty(T + 2)
    scale = n / (2.0 * mu)
    r = problem.r
    calls0 = oracle.calls
    start = time.perf_counter()
    slot = 0

    def record(last, complete):
        upto = last + 1
        idx = keep[:slot]
        xs = iterates[:slot].copy()
        # a partial record points at its last stored iterate
        ts = t_star if complete else int(idx[-1])
        x_star = xs[np.searchsorted(idx, ts)]
        return RunRecord(seed=seed, T=T, mu=mu, step_sizes=steps,
                         grad_norms=grad_norms[:max(upto - 1, 0)].copy(),
                         plus_vals=plus_vals[:max(upto - 1, 0)].copy(),
                         minus_vals=minus_vals[:max(upto - 1, 0)].copy(),
                         x_norms=x_norms[:upto].copy(), iterates=xs, iterate_index=idx,
                         t_star=ts, x_star=x_star.copy(),
                         wallclock=time.perf_counter() - start, rho=rho, rho_bar=rho_bar,
                         grads=None if grads is None else grads[:max(upto - 1, 0)].copy(),
                         complete=complete, oracle_calls=oracle.calls - calls0)

    x_norms[0] = np.linalg.norm(x)
    iterates[0] = x
    slot = 1
    for lo in range(0, T + 1, CHUNK):
        k = min(CHUNK, T + 1 - lo)
        XI = scen.draws(lo, k)
        W = sphere_rows(dirs, lo, k, n)
        for j in range(k):
            t = lo + j
            w = W[j]
            try:
                fp = oracle(x + mu * w, XI[j])
                fm = oracle(x - mu * w, XI[j])
            except OracleError as exc:
                raise RunAborted(f"oracle failed at t={t}: {exc}", record(t, False)) from exc
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise RunAborted(f"non-finite oracle value at t={t}", record(t, False))
            g = (scale * (fp - fm)) * w
            a = steps[t]
            x = apply_prox(r, x - a * g, a)
            plus_vals[t] = fp
            minus_vals[t] = fm
            grad_norms[t] = np.linalg.norm(g)
            if grads is not None:
                grads[t] = g
            x_norms[t + 1] = np.linalg.norm(x)
            if keep_set[t + 1]:
                iterates[slot] = x
                slot += 1
    rec = record(T + 1, True)
    log.debug("run seed=%d T=%d finished in %.3fs, t*=%d", seed, T, rec.wallclock, t_star)
    return rec


def estimate_phi_upper(problem, oracle, x0, mu, seed=0, num_points=256, num_samples=2000,
                       inflate=2.0, phi_lower=None):
    """Heuristic Phi: inflate * (phi~_mu(x0) - min phi~_mu).

    phi~_mu is a Monte Carlo estimate of f_mu + r.  The minimum comes from a
    random search over dom r, or from ``phi_lower`` when a lower bound on phi
    is known (it is also a lower bound on phi_mu up to mu G).  The search can
    miss the true minimum, hence the inflation factor.
    """
    from .problem import sample_domain

    stream = CounterStream(seed, ("phi-upper",))
    x0 = np.asarray(x0, dtype=float)

    def phi_tilde(p, i):
        fv, _ = estimate_smoothed_value(oracle, p, mu, num_samples, stream.split(i), problem.law)
        return fv + problem.r.value(p)

    top = phi_tilde(x0, 0)
    if phi_lower is not None:
        low = float(phi_lower)
    else:
        pts = sample_domain(problem, stream.generator(0), num_points)
        low = min(top, min(phi_tilde(p, i + 1) for i, p in enumerate(pts)))
    return float(inflate * max(top - low, 1e-12))
