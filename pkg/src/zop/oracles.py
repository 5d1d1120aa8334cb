"""Inexact noisy oracles F~(x, xi) = F(x, xi) + delta(x, xi) with |delta| <= delta~.

Three families:

* exact wrappers around a closed-form StochasticFunction;
* deterministic bounded pseudo-noise injected on top of a closed form;
* truncated inner solvers for problems where F is itself the value of a
  convex (min) or concave (max) quadratic program over a box or a ball.

Every oracle is a pure function of (x, xi).  ``calls`` counts evaluations for
accounting only.
"""

from dataclasses import dataclass, field
import math
from typing import Callable, Optional

import numpy as np

from ._backend import kernels
from .errors import InputError, OracleError
from .problem import CompositeProblem, ScenarioStream, StochasticFunction

BIAS_MODES = ("b1_constant_mean", "b2_bounded_only")


class InexactOracle:
    """Evaluation oracle with a certified deterministic error bound.

    ``one_sided`` is ``"upper"`` when 0 <= F~ - F <= delta~, ``"lower"`` when
    -delta~ <= F~ - F <= 0 and None for two-sided noise.
    """

    def __init__(self, eval, delta_bound, bias_mode="b1_constant_mean", known_bias=0.0,
                 law=None, eval_batch=None, one_sided=None, name="oracle", metadata=None):
        if delta_bound < 0:
            raise InputError("delta_bound must be nonnegative")
        if bias_mode not in BIAS_MODES:
            raise InputError(f"bias_mode must be one of {BIAS_MODES}")
        self.eval = eval
        self.delta_bound = float(delta_bound)
        self.bias_mode = bias_mode
        self.known_bias = known_bias
        self.law = law
        self.one_sided = one_sided
        self.name = name
        self.metadata = dict(metadata or {})
        self._eval_batch = eval_batch
        self.calls = 0

    def __repr__(self):
        return f"InexactOracle({self.name!r}, delta_bound={self.delta_bound:g})"

    def __call__(self, x, xi):
        self.calls += 1
        return float(self.eval(np.asarray(x, dtype=float), np.asarray(xi, dtype=float)))

    def batch(self, X, XI):
        """Row-wise evaluation; counts one call per row."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        XI = np.atleast_2d(np.asarray(XI, dtype=float))
        if X.shape[0] != XI.shape[0]:
            raise InputError("X and XI must have the same number of rows")
        self.calls += X.shape[0]
        if self._eval_batch is not None:
            return np.asarray(self._eval_batch(X, XI), dtype=float)
        return np.array([self.eval(x, xi) for x, xi in zip(X, XI)], dtype=float)

    def reset_calls(self):
        n, self.calls = self.calls, 0
        return n


def _function_of(f):
    if isinstance(f, CompositeProblem):
        return f.f
    if isinstance(f, StochasticFunction):
        return f
    raise InputError("expected a StochasticFunction or CompositeProblem")


def make_exact_oracle(f):
    """delta~ = 0 wrapper around a closed-form F."""
    f = _function_of(f)
    if not f.exact:
        raise InputError(f"{f.name} has no closed form; use an inner-solver oracle")
    return InexactOracle(f.eval, 0.0, "b1_constant_mean", 0.0, law=f.law,
                         eval_batch=f.values, name=f"exact[{f.name}]")


def make_noisy_oracle(f, delta_bound, noise_seed=0, one_sided=False):
    """F + delta~ * u(x, xi) with u a hash of the bits of (x, xi, noise_seed).

    The default u = 2h - 1 lies in [-1, 1) and has mean approximately zero at
    every x; with ``one_sided`` u = h lies in [0, 1), mimicking the positive
    error of a truncated minimization.
    """
    f = _function_of(f)
    if delta_bound < 0:
        raise InputError("delta_bound must be nonnegative")
    if not f.exact:
        raise InputError(f"{f.name} has no closed form to perturb")
    delta = float(delta_bound)
    seed = int(noise_seed)

    def noise(X, XI):
        h = kernels.hash_noise(X, XI, seed)
        return delta * h if one_sided else delta * (2.0 * h - 1.0)

    def eval_batch(X, XI):
        vals = f.values(X, XI)
        if delta == 0.0:
            return vals
        return vals + noise(X, XI)

    def eval(x, xi):
        return float(eval_batch(np.atleast_2d(x), np.atleast_2d(xi))[0])

    return InexactOracle(eval, delta, "b1_constant_mean",
                         delta / 2.0 if one_sided else 0.0, law=f.law,
                         eval_batch=eval_batch, one_sided="upper" if one_sided else None,
                         name=f"noisy[{f.name}]", metadata={"noise_seed": seed})


@dataclass(frozen=True)
class InnerQP:
    """Inner quadratic program that defines F through min or max over y.

    ``data(x, xi)`` returns ``(P, q, const)``.  For ``sense="min"``
    F(x, xi) = const + min_y 0.5 y'Py + q'y; for ``sense="max"``
    F(x, xi) = const - min_y (0.5 y'Py + q'y), i.e. the maximum of the concave
    objective const - 0.5 y'Py - q'y.  The feasible set is the box [lo, hi]
    (``kind="box"``) or the centered ball of ``radius`` (``kind="ball"``).
    ``strongly_convex`` means P is positive definite for every xi.
    ``ergodic`` optionally carries an ErgodicCoupling for the expected-value
    inner problem.
    """

    sense: str
    dim: int
    data: Callable
    kind: str = "box"
    lo: float = -1.0
    hi: float = 1.0
    radius: float = 1.0
    strongly_convex: bool = True
    ergodic: object = None

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise InputError("sense must be 'min' or 'max'")
        if self.kind not in ("box", "ball"):
            raise InputError("inner feasible set must be 'box' or 'ball'")
        if self.dim < 1:
            raise InputError("inner dimension must be positive")

    @property
    def kind_code(self):
        return 0 if self.kind == "box" else 1

    def objective(self, x, y, xi):
        """F^(x, y, xi) in the original min or max orientation."""
        P, q, const = self.data(x, xi)
        y = np.asarray(y, dtype=float)
        h = 0.5 * y @ P @ y + q @ y
        return const + h if self.sense == "min" else const - h


@dataclass(frozen=True)
class InnerSolveReport:
    iterations: int
    final_gap_bound: float
    y_out: np.ndarray
    value: float
    certified: bool = True


def _curvature(P, strongly_convex):
    w = np.linalg.eigvalsh(P)
    L = float(w[-1])
    sigma = float(w[0]) if strongly_convex else 0.0
    return max(L, 1e-300), max(sigma, 0.0)


def solve_inner(inner, x, xi, tol, budget, P=None, q=None, const=None):
    """Run the certified projected-gradient inner solve at (x, xi)."""
    if P is None:
        P, q, const = inner.data(x, xi)
    L, sigma = _curvature(P, inner.strongly_convex)
    y, h, iters, gap, ok = kernels.qp_solve(
        np.ascontiguousarray(P, dtype=float), np.ascontiguousarray(q, dtype=float),
        inner.kind_code, np.broadcast_to(np.asarray(inner.lo, float), (inner.dim,)).copy(),
        np.broadcast_to(np.asarray(inner.hi, float), (inner.dim,)).copy(),
        float(inner.radius), L, sigma, float(tol), int(budget))
    value = const + h if inner.sense == "min" else const - h
    return InnerSolveReport(int(iters), float(gap), np.asarray(y), float(value), bool(ok))


def _inner_oracle(inner, tol, budget, law, name, sense):
    if not tol > 0:
        raise InputError("inner tolerance must be positive")
    if budget < 0:
        raise InputError("inner budget must be nonnegative")
    if inner.sense != sense:
        raise InputError(f"inner problem has sense {inner.sense!r}, expected {sense!r}")

    def solve(x, xi):
        rep = solve_inner(inner, x, xi, tol, budget)
        if not rep.certified:
            raise OracleError(
                f"{name}: inner budget {budget} exhausted with gap bound {rep.final_gap_bound:.3e}",
                best_gap_bound=rep.final_gap_bound)
        return rep

    def eval(x, xi):
        return solve(x, xi).value

    oracle = InexactOracle(eval, tol, "b2_bounded_only", None, law=law,
                           one_sided="upper" if sense == "min" else "lower",
                           name=name, metadata={"tol": tol, "budget": budget})
    oracle.solve = solve
    return oracle


def _inner_of(spec_or_problem):
    obj = spec_or_problem
    if isinstance(obj, InnerQP):
        return obj, None
    if not isinstance(obj, CompositeProblem):
        from .problems import build_problem
        obj = build_problem(obj)
    if obj.inner is None:
        raise InputError(f"{obj.name} has no inner problem")
    return obj.inner, obj.law


def make_inner_min_oracle(spec, tol, budget=10_000, law=None):
    """Truncated projected-gradient oracle for F = min_y F^(x, y, xi).

    Output satisfies 0 <= F~ - F <= tol.  ``spec`` may be a ProblemSpec, a
    built CompositeProblem or a bare InnerQP.
    """
    inner, plaw = _inner_of(spec)
    return _inner_oracle(inner, tol, budget, law or plaw, "inner-min", "min")


def make_inner_max_oracle(spec, tol, budget=10_000, law=None):
    """Truncated projected-gradient ascent oracle; -tol <= F~ - F <= 0."""
    inner, plaw = _inner_of(spec)
    return _inner_oracle(inner, tol, budget, law or plaw, "inner-max", "max")


@dataclass(frozen=True)
class ErgodicCoupling:
    """Data for F^(x, y, xi) = (A(xi) x)'y - 0.5||y||^2 + b(xi) over a ball.

    ``coupling(xi)`` returns A(xi) (m x n) and ``offset(xi)`` the
    y-independent scalar b(xi).
    """

    m: int
    n: int
    coupling: Callable
    offset: Callable
    radius: float
    noise_scale: float = 0.0


def make_ergodic_max_oracle(spec, tol, batch=64, budget=10_000, inner_seed=0, law=None):
    """Oracle for F(x, xi) = F^(x, y*(x), xi), y*(x) maximizing E F^(x, ., xi).

    y*(x) is approximated by a certified projected-gradient ascent on the
    average over ``batch`` scenarios drawn once from ``inner_seed``.  The
    reported ``delta_bound`` is the inner gap only; the sample-average
    error is exposed as ``metadata["bias_estimate"](x)``.
    """
    problem = spec if isinstance(spec, CompositeProblem) else None
    if problem is None:
        from .problems import build_problem
        problem = build_problem(spec)
    erg = getattr(problem, "inner", None)
    erg = getattr(erg, "ergodic", None) if erg is not None else None
    if erg is None:
        raise InputError(f"{problem.name} has no ergodic structure")
    if batch < 1:
        raise InputError("batch must be at least 1")
    if not tol > 0:
        raise InputError("inner tolerance must be positive")
    law = law or problem.law
    XI = ScenarioStream(inner_seed, law, tags=("ergodic-inner",)).take(batch)
    A_bar = np.mean([erg.coupling(xi) for xi in XI], axis=0)
    P = np.eye(erg.m)
    zeros = np.zeros(erg.m)
    s = erg.noise_scale
    cache = {}

    def select(x):
        key = x.tobytes()
        hit = cache.get(key)
        if hit is not None:
            return hit
        y, h, iters, gap, ok = kernels.qp_solve(P, -(A_bar @ x), 1, zeros, zeros,
                                                float(erg.radius), 1.0, 1.0, float(tol), int(budget))
        if not ok:
            raise OracleError(f"ergodic inner budget {budget} exhausted", best_gap_bound=float(gap))
        if len(cache) > 4096:
            cache.clear()
        cache[key] = y
        return y

    def eval(x, xi):
        y = select(np.asarray(x, dtype=float))
        return float((erg.coupling(xi) @ x) @ y - 0.5 * y @ y + erg.offset(xi))

    def bias_estimate(x):
        # 0.5 E||y_K - y*||^2 for interior y*, coupling entries uniform on [-s, s]
        x = np.asarray(x, dtype=float)
        return 0.5 * s * s * float(x @ x) * erg.m / (3.0 * batch)

    return InexactOracle(eval, tol, "b2_bounded_only", None, law=law, one_sided=None,
                         name="ergodic-max",
                         metadata={"tol": tol, "batch": batch, "inner_seed": inner_seed,
                                   "bias_estimate": bias_estimate, "select": select})
