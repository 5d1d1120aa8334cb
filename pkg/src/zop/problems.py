"""Instance zoo: analytic nonsmooth functions and inner-optimization families.

Instance data (A0, b0, c0, M0, ...) is drawn once from ``data_seed``; the
random scenario xi perturbs it affinely with i.i.d. uniform[-1, 1]
components scaled by ``noise_scale``.
"""

from dataclasses import dataclass, field, replace
import math
from typing import Optional

import numpy as np

from ._backend import kernels
from .errors import ConfigurationError, InputError, UnsupportedOperation
from .oracles import ErgodicCoupling, InnerQP
from .problem import CompositeProblem, Regularizer, ScenarioLaw, ScenarioStream, StochasticFunction
from .rng import CounterStream

ZOO = {
    "norm_sharp": "F(x) = ||x||; deterministic, G = 1, minimizer 0",
    "l1_minus_l2": "F(x) = ||x||_1 - ||x||_2; deterministic, nonconvex, G = sqrt(n) + 1",
    "cusp_box": "F(x) = (1 - max{x_1, 0})^2 on a box; deterministic, downward cusp",
    "max_affine": "F(x, xi) = max_i a_i(xi)'x + b_i(xi); pieces perturbed by xi",
    "two_stage_qp": "F(x, xi) = c'x + min_{y in [-1,1]^m} 0.5 y'Q y + (A x + b)'y",
    "mm_instant": "F(x, xi) = max_{||y|| <= R} (A(xi) x)'y - 0.5||y||^2",
    "mm_ergodic": "F(x, xi) = F^(x, y*(x), xi), y*(x) maximizing the expected objective",
}

# exact enumeration of the inner box QP is used up to this inner dimension
EXACT_INNER_MAX_M = 3


@dataclass(frozen=True)
class ProblemSpec:
    """Declarative description of a zoo instance.

    ``m`` is the inner dimension (two_stage_qp, mm_*) and ``pieces`` the
    number of affine pieces (max_affine).  ``regularizer`` defaults per
    instance (see ``default_regularizer``).
    """

    name: str
    n: int
    m: int = 2
    data_seed: int = 0
    regularizer: Optional[Regularizer] = None
    noise_scale: float = 0.1
    kappa: float = 1.0
    inner_radius: float = 1.0
    pieces: int = 3
    nonconvex_weight: float = 0.0
    additive_scale: float = 0.0

    def violations(self):
        out = []
        if self.name not in ZOO:
            out.append(("problem.name", f"unknown instance {self.name!r}; expected one of {sorted(ZOO)}"))
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            out.append(("problem.n", "must be a positive integer"))
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            out.append(("problem.m", "must be a positive integer"))
        if not 0 <= int(self.data_seed) < 2 ** 64:
            out.append(("problem.data_seed", "must be a 64-bit unsigned integer"))
        if self.noise_scale < 0:
            out.append(("problem.noise_scale", "must be nonnegative"))
        if not self.kappa > 0:
            out.append(("problem.kappa", "must be positive"))
        if not self.inner_radius > 0:
            out.append(("problem.inner_radius", "must be positive"))
        if self.pieces < 1:
            out.append(("problem.pieces", "must be positive"))
        if self.nonconvex_weight < 0:
            out.append(("problem.nonconvex_weight", "must be nonnegative"))
        if self.name == "mm_ergodic" and self.regularizer is not None and not self.regularizer.bounded:
            out.append(("problem.regularizer", "mm_ergodic needs a bounded domain"))
        if self.name == "cusp_box" and self.regularizer is not None and self.regularizer.kind not in ("box", "l1_box"):
            out.append(("problem.regularizer", "cusp_box needs a box domain"))
        reg = self.regularizer
        if reg is not None and reg.kind in ("box", "l1_box") and isinstance(self.n, int):
            for name in ("lo", "hi"):
                v = np.asarray(getattr(reg, name), dtype=float)
                if v.ndim > 0 and v.shape != (self.n,):
                    out.append((f"problem.regularizer.{name}", f"needs {self.n} entries"))
        return out

    @property
    def d(self):
        """Scenario dimension."""
        n, m = self.n, self.m
        return {
            "norm_sharp": 1,
            "l1_minus_l2": 1,
            "cusp_box": 1,
            "max_affine": self.pieces * (n + 1),
            "two_stage_qp": m * n + m + n + m * m,
            "mm_instant": m * n,
            "mm_ergodic": m * n + 1,
        }[self.name]

    @property
    def law(self):
        if self.name in ("norm_sharp", "l1_minus_l2", "cusp_box"):
            return ScenarioLaw("point_mass", 1)
        return ScenarioLaw("uniform", self.d)

    def resolved_regularizer(self):
        return self.regularizer if self.regularizer is not None else default_regularizer(self.name, self.n)


def default_regularizer(name, n):
    if name == "norm_sharp":
        return Regularizer.zero()
    if name == "cusp_box":
        return Regularizer.box(-2.0, 2.0)
    return Regularizer.box(-1.0, 1.0)


def _data_gen(spec):
    return CounterStream(spec.data_seed, ("problem-data", spec.name)).generator(0)


def _max_norm_on(reg, n):
    """sup ||x|| over dom r (inf when unbounded)."""
    if reg.kind == "l2ball":
        return reg.radius
    if reg.kind in ("box", "l1_box"):
        lo, hi = reg.bounds(n)
        return float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))
    return math.inf


def _huber_max(v, R):
    """max_{||y|| <= R} v'y - 0.5||y||^2 for the rows of v."""
    nv = np.linalg.norm(v, axis=-1)
    return np.where(nv <= R, 0.5 * nv * nv, R * nv - 0.5 * R * R)


def _build_norm_sharp(spec, reg):
    def batch(X, XI):
        return np.linalg.norm(X, axis=1)
    f = StochasticFunction(spec.n, 1, lambda x, xi: float(np.linalg.norm(x)), 1.0,
                           spec.law, batch, True, "norm_sharp")
    return f, None


def _build_l1_minus_l2(spec, reg):
    def batch(X, XI):
        return np.sum(np.abs(X), axis=1) - np.linalg.norm(X, axis=1)

    def single(x, xi):
        return float(np.sum(np.abs(x)) - np.linalg.norm(x))
    f = StochasticFunction(spec.n, 1, single, math.sqrt(spec.n) + 1.0, spec.law, batch, True,
                           "l1_minus_l2")
    return f, None


def _build_cusp_box(spec, reg):
    hi = float(np.max(reg.bounds(spec.n)[1]))

    def batch(X, XI):
        return (1.0 - np.maximum(X[:, 0], 0.0)) ** 2

    def single(x, xi):
        return float((1.0 - max(x[0], 0.0)) ** 2)
    G = 2.0 * max(1.0, hi - 1.0)
    return StochasticFunction(spec.n, 1, single, G, spec.law, batch, True, "cusp_box"), None


def _build_max_affine(spec, reg):
    gen = _data_gen(spec)
    p, n, s = spec.pieces, spec.n, spec.noise_scale
    A0 = gen.standard_normal((p, n)) / math.sqrt(n)
    b0 = 0.5 * gen.standard_normal(p)

    def batch(X, XI):
        E = XI.reshape(-1, p, n + 1)
        A = A0[None] + s * E[:, :, :n]
        b = b0[None] + s * E[:, :, n]
        return np.max(np.einsum("kpn,kn->kp", A, X) + b, axis=1)

    def single(x, xi):
        return float(batch(x[None], xi[None])[0])
    G = float(np.max(np.linalg.norm(A0, axis=1)) + s * math.sqrt(n))
    f = StochasticFunction(n, spec.d, single, G, spec.law, batch, True, "max_affine")
    return f, None


def _two_stage_data(spec):
    gen = _data_gen(spec)
    m, n = spec.m, spec.n
    return dict(
        A0=gen.standard_normal((m, n)) / math.sqrt(n),
        b0=0.5 * gen.standard_normal(m),
        c0=0.5 * gen.standard_normal(n),
        M0=gen.standard_normal((m, m)) / math.sqrt(m),
    )


def _build_two_stage(spec, reg):
    m, n, s, kap = spec.m, spec.n, spec.noise_scale, spec.kappa
    D = _two_stage_data(spec)
    A0, b0, c0, M0 = D["A0"], D["b0"], D["c0"], D["M0"]
    cuts = np.cumsum([m * n, m, n])
    eye = np.eye(m)
    ncw = spec.nonconvex_weight

    def parts(xi):
        ea, eb, ec, em = np.split(xi, cuts)
        A = A0 + s * ea.reshape(m, n)
        M = M0 + s * em.reshape(m, m)
        return A, b0 + s * eb, c0 + s * ec, M.T @ M + kap * eye

    def outer(x):
        return ncw * (float(np.sum(np.abs(x))) - float(np.linalg.norm(x))) if ncw else 0.0

    def data(x, xi):
        A, b, c, Q = parts(np.asarray(xi, dtype=float))
        return Q, A @ x + b, float(c @ x) + outer(x)

    inner = InnerQP("min", m, data, kind="box", lo=-1.0, hi=1.0, strongly_convex=True)
    exact = m <= EXACT_INNER_MAX_M
    lo_b, hi_b = np.full(m, -1.0), np.full(m, 1.0)

    def single(x, xi):
        P, q, const = data(np.asarray(x, dtype=float), xi)
        if exact:
            vals, _ = kernels.box_qp_exact(P, q[None], lo_b, hi_b)
            return const + float(vals[0])
        L = float(np.linalg.eigvalsh(P)[-1])
        _, h, _, _, _ = kernels.qp_solve(P, q, 0, lo_b, hi_b, 1.0, L, kap, 1e-12, 200_000)
        return const + h

    G = (math.sqrt(m) * (np.linalg.norm(A0) + s * math.sqrt(m * n))
         + np.linalg.norm(c0) + s * math.sqrt(n) + ncw * (math.sqrt(n) + 1.0))
    f = StochasticFunction(n, spec.d, single, float(G), spec.law, None, exact, "two_stage_qp",
                           meta={"parts": parts})
    return f, inner


def _mm_coupling(spec):
    gen = _data_gen(spec)
    return gen.standard_normal((spec.m, spec.n)) / math.sqrt(spec.n)


def _build_mm_instant(spec, reg):
    m, n, s, R = spec.m, spec.n, spec.noise_scale, spec.inner_radius
    A0 = _mm_coupling(spec)

    def coupling(xi):
        return A0 + s * np.asarray(xi, dtype=float)[: m * n].reshape(m, n)

    def data(x, xi):
        return np.eye(m), -(coupling(xi) @ x), 0.0

    def batch(X, XI):
        A = A0[None] + s * XI[:, : m * n].reshape(-1, m, n)
        return _huber_max(np.einsum("kmn,kn->km", A, X), R)

    def single(x, xi):
        return float(_huber_max(coupling(xi) @ x, R))

    inner = InnerQP("max", m, data, kind="ball", radius=R, strongly_convex=True)
    G = R * (np.linalg.norm(A0) + s * math.sqrt(m * n))
    f = StochasticFunction(n, spec.d, single, float(G), spec.law, batch, True, "mm_instant")
    return f, inner


def _build_mm_ergodic(spec, reg):
    m, n, s, R, a = spec.m, spec.n, spec.noise_scale, spec.inner_radius, spec.additive_scale
    A0 = _mm_coupling(spec)

    def coupling(xi):
        return A0 + s * np.asarray(xi, dtype=float)[: m * n].reshape(m, n)

    def offset(xi):
        return a * float(xi[m * n])

    def data(x, xi):
        return np.eye(m), -(coupling(xi) @ x), offset(xi)

    def y_star(X):
        V = np.atleast_2d(X) @ A0.T
        nv = np.linalg.norm(V, axis=1, keepdims=True)
        return np.where(nv > R, V * (R / np.where(nv > 0, nv, 1.0)), V)

    def batch(X, XI):
        A = A0[None] + s * XI[:, : m * n].reshape(-1, m, n)
        Y = y_star(X)
        return (np.einsum("km,km->k", np.einsum("kmn,kn->km", A, X), Y)
                - 0.5 * np.sum(Y * Y, axis=1) + a * XI[:, m * n])

    def single(x, xi):
        return float(batch(np.asarray(x, float)[None], np.asarray(xi, float)[None])[0])

    erg = ErgodicCoupling(m, n, coupling, offset, R, s)
    inner = InnerQP("max", m, data, kind="ball", radius=R, strongly_convex=True, ergodic=erg)
    amax = np.linalg.norm(A0) + s * math.sqrt(m * n)
    xmax = _max_norm_on(reg, n)
    # d/dx of (A x)'y*(x): A'y* plus Dy*' (A x - y*), with ||Dy*|| <= ||A0||
    G = R * amax + np.linalg.norm(A0) * (amax * xmax + R)
    f = StochasticFunction(n, spec.d, single, float(G), spec.law, batch, True, "mm_ergodic",
                           meta={"y_star": y_star})
    return f, inner


_BUILDERS = {
    "norm_sharp": _build_norm_sharp,
    "l1_minus_l2": _build_l1_minus_l2,
    "cusp_box": _build_cusp_box,
    "max_affine": _build_max_affine,
    "two_stage_qp": _build_two_stage,
    "mm_instant": _build_mm_instant,
    "mm_ergodic": _build_mm_ergodic,
}


def build_problem(spec):
    """CompositeProblem for a ProblemSpec."""
    bad = spec.violations()
    if bad:
        raise ConfigurationError("; ".join(f"{k}: {m}" for k, m in bad), bad)
    reg = spec.resolved_regularizer()
    f, inner = _BUILDERS[spec.name](spec, reg)
    return CompositeProblem(f, reg, name=spec.name, spec=spec, inner=inner)


def lipschitz_constant(spec):
    """Declared bound G on sqrt(E L(xi)^2) for the instance."""
    return build_problem(spec).f.lipschitz_bound


def list_problems():
    return dict(ZOO)


@dataclass(frozen=True)
class ReferenceSolution:
    x_ref: np.ndarray
    phi_ref: float
    method: str
    resolution: float
    phi_max: float = float("nan")
    num_scenarios: int = 0

    @property
    def objective_range(self):
        """Spread of the objective over the grid (max - min)."""
        return self.phi_max - self.phi_ref


def saa_scenarios(problem, num_scenarios, seed=0):
    if problem.law.kind == "point_mass":
        return problem.law.sample(None, 1)
    return ScenarioStream(seed, problem.law, tags=("reference", "saa")).take(num_scenarios)


def saa_objective(problem, X, num_scenarios=200, seed=0, scenarios=None):
    """(1/K) sum_k F(x, xi_k) + r(x) for each row of X.

    Uses closed forms where available and exact active-set enumeration for
    small two-stage inner problems.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    XI = scenarios if scenarios is not None else saa_scenarios(problem, num_scenarios, seed)
    f = problem.f
    total = np.zeros(len(X))
    parts = f.meta.get("parts")
    spec = problem.spec
    if parts is not None and spec.m <= EXACT_INNER_MAX_M:
        m = spec.m
        lo, hi = np.full(m, -1.0), np.full(m, 1.0)
        extra = 0.0
        if spec.nonconvex_weight:
            extra = spec.nonconvex_weight * (np.sum(np.abs(X), axis=1) - np.linalg.norm(X, axis=1))
        for xi in XI:
            A, b, c, Q = parts(xi)
            vals, _ = kernels.box_qp_exact(Q, np.ascontiguousarray(X @ A.T + b), lo, hi)
            total += vals + X @ c + extra
    else:
        for xi in XI:
            total += f.values(X, np.broadcast_to(xi, (len(X), xi.shape[0])))
    return total / len(XI) + problem.r.values(X)


def _grid(problem, resolution, search_radius):
    n = problem.n
    bounds = problem.r.bounds(n)
    lo, hi = bounds if bounds is not None else (np.full(n, -search_radius), np.full(n, search_radius))
    axes = [np.linspace(l, h, int(round((h - l) / resolution)) + 1) for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([g.ravel() for g in mesh], axis=1)
    return X[problem.r.values(X) < np.inf]


def reference_solution(spec, resolution=1e-2, num_scenarios=200, seed=0, search_radius=2.0):
    """Desk-scale ground truth: closed form, or exhaustive grid on the SAA objective.

    The grid covers dom r (or [-search_radius, search_radius]^n when r has
    full domain) and needs n <= 3.
    """
    problem = spec if isinstance(spec, CompositeProblem) else build_problem(spec)
    spec = problem.spec
    n = problem.n
    if not resolution > 0:
        raise InputError("resolution must be positive")
    if problem.name == "norm_sharp" and problem.r.contains(np.zeros(n)):
        return ReferenceSolution(np.zeros(n), 0.0 + problem.r.value(np.zeros(n)), "closed_form",
                                 0.0, float("nan"), 1)
    if n > 3:
        raise UnsupportedOperation(f"grid reference needs n <= 3, got n = {n}")
    X = _grid(problem, resolution, search_radius)
    XI = saa_scenarios(problem, num_scenarios, seed)
    vals = np.empty(len(X))
    step = 65536
    for lo in range(0, len(X), step):
        vals[lo:lo + step] = saa_objective(problem, X[lo:lo + step], scenarios=XI)
    i = int(np.argmin(vals))
    method = "grid" if problem.law.kind == "point_mass" else "saa_grid"
    return ReferenceSolution(X[i].copy(), float(vals[i]), method, float(resolution),
                             float(np.max(vals)), len(XI))
