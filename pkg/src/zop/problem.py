"""Composite stochastic problems: phi(x) = E[F(x, xi)] + r(x).

A scenario is a plain 1-D float array of the declared scenario dimension.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InputError, UnsupportedOperation
from .rng import CounterStream

LAWS = ("point_mass", "rademacher", "uniform", "gaussian")


@dataclass(frozen=True)
class ScenarioLaw:
    """Distribution of the random vector xi.

    ``uniform`` draws i.i.d. components on [-scale, scale], ``rademacher``
    on {-scale, +scale}, ``gaussian`` N(0, scale^2); ``point_mass`` always
    returns ``point``.
    """

    kind: str
    dim: int
    scale: float = 1.0
    point: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in LAWS:
            raise InputError(f"unknown scenario law {self.kind!r}; expected one of {LAWS}")
        if self.dim < 1:
            raise InputError("scenario dimension must be positive")
        if self.kind == "point_mass":
            pt = (0.0,) * self.dim if self.point is None else tuple(float(v) for v in self.point)
            if len(pt) != self.dim:
                raise InputError("point mass location has the wrong dimension")
            object.__setattr__(self, "point", pt)

    def sample(self, gen, k):
        d = self.dim
        if self.kind == "point_mass":
            return np.tile(np.asarray(self.point, dtype=float), (k, 1))
        if self.kind == "rademacher":
            bits = gen.integers(0, 2, size=(k, d))
            return self.scale * (2.0 * bits - 1.0)
        if self.kind == "uniform":
            return self.scale * (2.0 * gen.random((k, d)) - 1.0)
        return self.scale * gen.standard_normal((k, d))


@dataclass(frozen=True)
class StochasticFunction:
    """The sampled function F(x, xi) together with its scenario law.

    ``eval`` must be pure.  ``eval_batch(X, XI)`` is an optional vectorized
    form taking row-stacked points and scenarios.  ``exact`` marks functions
    whose ``eval`` is the true F (as opposed to one defined only through an
    inner optimization without closed form).  ``meta`` carries
    instance-specific helpers (scenario decompositions, analytic selections).
    """

    dim: int
    scenario_dim: int
    eval: Callable
    lipschitz_bound: float
    law: ScenarioLaw = None
    eval_batch: Optional[Callable] = None
    exact: bool = True
    name: str = "F"
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.dim < 1 or self.scenario_dim < 1:
            raise InputError("dimensions must be positive")
        if not self.lipschitz_bound > 0:
            raise InputError("lipschitz_bound must be positive")
        if self.law is None:
            object.__setattr__(self, "law", ScenarioLaw("point_mass", self.scenario_dim))
        elif self.law.dim != self.scenario_dim:
            raise InputError("scenario law dimension does not match scenario_dim")

    def __call__(self, x, xi):
        return float(self.eval(x, xi))

    def values(self, X, XI):
        X = np.atleast_2d(X)
        XI = np.atleast_2d(XI)
        if self.eval_batch is not None:
            return np.asarray(self.eval_batch(X, XI), dtype=float)
        return np.array([self.eval(x, xi) for x, xi in zip(X, XI)], dtype=float)


REGULARIZER_KINDS = ("zero", "l1", "box", "l2ball", "l1_box")


@dataclass(frozen=True)
class Regularizer:
    """Closed convex regularizer from a fixed catalogue with exact prox.

    Bounds ``lo``/``hi`` may be scalars (applied to every coordinate) or
    vectors.
    """

    kind: str = "zero"
    weight: float = 0.0
    lo: object = None
    hi: object = None
    radius: float = None

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise InputError(f"unknown regularizer kind {self.kind!r}")
        if self.kind in ("l1", "l1_box") and self.weight < 0:
            raise InputError("l1 weight must be nonnegative")
        if self.kind in ("box", "l1_box"):
            if self.lo is None or self.hi is None:
                raise InputError("box regularizer needs lo and hi")
            lo = np.asarray(self.lo, dtype=float)
            hi = np.asarray(self.hi, dtype=float)
            if np.any(lo > hi):
                raise InputError("box bounds must satisfy lo <= hi")
        if self.kind == "l2ball" and not (self.radius is not None and self.radius > 0):
            raise InputError("l2ball regularizer needs a positive radius")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def l1(cls, weight):
        return cls("l1", weight=float(weight))

    @classmethod
    def box(cls, lo, hi):
        return cls("box", lo=lo, hi=hi)

    @classmethod
    def l2ball(cls, radius):
        return cls("l2ball", radius=float(radius))

    @classmethod
    def l1_plus_box(cls, weight, lo, hi):
        return cls("l1_box", weight=float(weight), lo=lo, hi=hi)

    @property
    def bounded(self):
        return self.kind in ("box", "l1_box", "l2ball")

    def diameter(self, n):
        """Euclidean diameter of dom r in R^n (None when unbounded)."""
        if self.kind == "l2ball":
            return 2.0 * self.radius
        if self.kind in ("box", "l1_box"):
            width = np.broadcast_to(np.asarray(self.hi, float) - np.asarray(self.lo, float), (n,))
            return float(np.linalg.norm(width))
        return None

    def bounds(self, n):
        """Coordinate bounds of dom r (or of its bounding box for balls)."""
        if self.kind in ("box", "l1_box"):
            return (np.broadcast_to(np.asarray(self.lo, float), (n,)).copy(),
                    np.broadcast_to(np.asarray(self.hi, float), (n,)).copy())
        if self.kind == "l2ball":
            return np.full(n, -self.radius), np.full(n, self.radius)
        return None

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            return False
        if self.kind in ("box", "l1_box"):
            return bool(np.all(x >= self.lo) and np.all(x <= self.hi))
        if self.kind == "l2ball":
            return bool(np.linalg.norm(x) <= self.radius)
        return True

    def value(self, x):
        """r(x), +inf outside the domain."""
        if not self.contains(x):
            return np.inf
        if self.kind in ("l1", "l1_box"):
            return self.weight * float(np.sum(np.abs(x)))
        return 0.0

    def values(self, X):
        """Row-wise r for a stack of points."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(len(X))
        if self.kind in ("box", "l1_box"):
            inside = np.all((X >= self.lo) & (X <= self.hi), axis=1)
            out[~inside] = np.inf
        elif self.kind == "l2ball":
            out[np.linalg.norm(X, axis=1) > self.radius] = np.inf
        if self.kind in ("l1", "l1_box"):
            out = out + self.weight * np.sum(np.abs(X), axis=1)
        return out


@dataclass(frozen=True)
class CompositeProblem:
    """phi(x) = E[F(x, xi)] + r(x)."""

    f: StochasticFunction
    r: Regularizer
    name: str = "problem"
    spec: object = field(default=None, compare=False)
    inner: object = field(default=None, compare=False)

    @property
    def n(self):
        return self.f.dim

    @property
    def scenario_dim(self):
        return self.f.scenario_dim

    @property
    def law(self):
        return self.f.law


class ScenarioStream:
    """i.i.d. scenario sampler; draw k is a pure function of (seed, k).

    Single-owner: give concurrent consumers their own stream (``split``).
    """

    def __init__(self, seed, law, counter=0, tags=("scenario",)):
        self.law = law
        self.counter = int(counter)
        self._source = CounterStream(seed, tags)

    @property
    def seed(self):
        return self._source.seed

    def split(self, tag):
        child = ScenarioStream(self.seed, self.law)
        child._source = self._source.split(tag)
        return child

    def draws(self, start, count):
        return self._source.rows(("law", self.law), self.law.sample, start, count)

    def next(self):
        xi = self.draws(self.counter, 1)[0]
        self.counter += 1
        return xi

    def take(self, count):
        out = self.draws(self.counter, count)
        self.counter += count
        return out


def sample_scenario(stream):
    """Next scenario from the stream; advances its counter by one."""
    return stream.next()


def _check_dim(problem, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != problem.n:
        raise InputError(f"point has shape {x.shape}, expected ({problem.n},)")
    return x


def validate_point(problem, x):
    """True iff x lies in dom r."""
    return problem.r.contains(_check_dim(problem, x))


def evaluate_exact(problem, x, xi):
    """True F(x, xi) for problems with a closed-form sampled function."""
    x = _check_dim(problem, x)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (problem.scenario_dim,):
        raise InputError(f"scenario has shape {xi.shape}, expected ({problem.scenario_dim},)")
    if not problem.r.contains(x):
        raise InputError("x is outside dom r")
    if not problem.f.exact:
        raise UnsupportedOperation(
            f"{problem.name}: F is defined through an inner optimization without closed form")
    return problem.f(x, xi)


def sample_domain(problem, gen, k, radius=2.0):
    """k points drawn uniformly from dom r (or [-radius, radius]^n if unbounded)."""
    n = problem.n
    r = problem.r
    if r.kind == "l2ball":
        w = gen.standard_normal((k, n))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        return r.radius * w * gen.random((k, 1)) ** (1.0 / n)
    bounds = r.bounds(n)
    lo, hi = bounds if bounds is not None else (np.full(n, -radius), np.full(n, radius))
    return lo + (hi - lo) * gen.random((k, n))


def lipschitz_audit(problem, seed=0, num_pairs=1000, num_scenarios=1000, values=None):
    """Empirical sqrt(mean L_hat(xi)^2) from sampled difference quotients.

    For each scenario, L_hat(xi) is the largest quotient
    |F(x, xi) - F(y, xi)| / ||x - y|| over ``num_pairs`` random pairs in
    dom r.  ``values(X, XI)`` defaults to the problem's exact F.
    """
    values = values or problem.f.values
    stream = CounterStream(seed, ("lipschitz-audit",))
    gen = stream.generator(0)
    scen = ScenarioStream(seed, problem.law, tags=("lipschitz-audit", "scenario"))
    XI = scen.take(num_scenarios)
    xs = sample_domain(problem, gen, num_pairs)
    ys = sample_domain(problem, gen, num_pairs)
    dist = np.linalg.norm(xs - ys, axis=1)
    keep = dist > 1e-12
    xs, ys, dist = xs[keep], ys[keep], dist[keep]
    lhat = np.empty(num_scenarios)
    for j, xi in enumerate(XI):
        rep = np.broadcast_to(xi, (len(xs), xi.shape[0]))
        diff = np.abs(values(xs, rep) - values(ys, rep))
        lhat[j] = np.max(diff / dist)
    return float(np.sqrt(np.mean(lhat ** 2))), lhat
