"""Moreau-envelope stationarity certificates and a Goldstein min-norm diagnostic.

For lambda < 1/rho the subproblem

    min_w  f_mu(w) + r(w) + ||w - x||^2 / (2 lambda)

is strongly convex with modulus 1/lambda - rho.  Its minimizer x_hat is
approximated by proximal stochastic gradient with zeroth-order batch
gradients, and the certificate reports ||grad e_lambda phi_mu(x)|| =
||x - x_hat|| / lambda.
"""

from dataclasses import dataclass, field
import logging
import math
from typing import Optional

import numpy as np

from ._backend import kernels
from .errors import CertificationError, InputError
from .prox import apply_prox, prox_l2ball
from .rng import CounterStream
from .smoothing import ball_rows, estimate_smoothed_gradient, smoothed_gradient_samples

log = logging.getLogger(__name__)

DIVERGENCE_WINDOW = 100
# a check counts as growth only above this relative increase, so a
# deterministic iteration settling onto an oscillation is not flagged
GROWTH_TOL = 1e-3


@dataclass
class CertifyParams:
    """Budgets and constants for the envelope certifier.

    ``lam`` defaults to 1/(2 rho) with rho = c G sqrt(n) / mu.  ``rho``
    overrides the weak-convexity modulus when a sharper one is known (rho = 0
    for convex f).  ``eta0`` defaults to lambda / 2.
    """

    mu: float
    lam: Optional[float] = None
    iters: int = 2000
    batch: int = 64
    eta0: Optional[float] = None
    tail: float = 0.25
    rho: Optional[float] = None
    c_const: float = 1.0
    G: Optional[float] = None
    seed: int = 0

    def resolve(self, problem):
        """(lambda, rho, strong-convexity modulus) for a problem."""
        if not self.mu > 0:
            raise InputError("mu must be positive")
        if self.rho is not None:
            rho = float(self.rho)
        else:
            G = self.G if self.G is not None else problem.f.lipschitz_bound
            rho = self.c_const * G * math.sqrt(problem.n) / self.mu
        lam = self.lam if self.lam is not None else 1.0 / (2.0 * rho)
        if not lam > 0:
            raise InputError("lambda must be positive")
        if rho > 0 and not lam < 1.0 / rho:
            raise InputError(f"lambda = {lam:.4g} must be below 1/rho = {1.0 / rho:.4g}")
        if not 0.0 < self.tail <= 1.0:
            raise InputError("tail fraction must lie in (0, 1]")
        if self.iters < 1 or self.batch < 1:
            raise InputError("iters and batch must be positive")
        return lam, rho, 1.0 / lam - rho


@dataclass
class Certificate:
    x: np.ndarray
    x_hat: np.ndarray
    lam: float
    mu: float
    env_grad_norm: float
    inner_iters: int
    inner_residual: float
    mc_samples: int
    epsilon: Optional[float] = None
    passed: Optional[bool] = None
    goldstein_radius_smoothed: Optional[float] = None
    goldstein_radius_original: Optional[float] = None
    oracle_calls: int = 0

    def implication(self):
        """What a passing certificate says about Goldstein stationarity."""
        if not self.passed:
            return "not certified"
        msg = (f"({self.goldstein_radius_smoothed:.4g}, {self.epsilon:.4g})-Goldstein "
               "stationary for phi_mu")
        if self.goldstein_radius_original is not None:
            msg += (f"; ({self.goldstein_radius_original:.4g}, {self.epsilon:.4g})-Goldstein "
                    "stationary for phi")
        return msg


@dataclass
class GoldsteinDiagnostic:
    radius: float
    sampled_grads: np.ndarray
    weights: np.ndarray
    min_norm_point: np.ndarray
    min_norm: float


def _stream(rng_handle, tag):
    if isinstance(rng_handle, CounterStream):
        return rng_handle
    return CounterStream(int(rng_handle), (tag,))


def estimate_prox_point(problem, oracle, x, lam, mu, inner=None, rng_handle=0, rho=None):
    """Approximate prox_{lambda phi_mu}(x) by proximal stochastic gradient.

    Steps eta_k = eta0 / (1 + k m eta0) with m = 1/lambda - rho; the result
    is the average of the last ``tail`` fraction of iterates.  Returns
    ``(x_hat, residual, iterations)`` where residual is the final
    ||w_{k+1} - w_k|| / eta_k.  Raises CertificationError when the residual
    grows (by more than GROWTH_TOL, relatively) for 100 consecutive iterations or an iterate stops being finite.
    """
    if inner is None:
        inner = CertifyParams(mu=mu, lam=lam, rho=rho)
    if not lam > 0:
        raise InputError("lambda must be positive")
    x = np.asarray(x, dtype=float)
    if rho is None:
        rho = inner.rho if inner.rho is not None else 0.0
    m = 1.0 / lam - rho
    if not m > 0:
        raise InputError("lambda must be below 1/rho for a strongly convex subproblem")
    eta0 = inner.eta0 if inner.eta0 is not None else lam / 2.0
    K, B = int(inner.iters), int(inner.batch)
    start_avg = K - max(1, int(math.ceil(inner.tail * K)))
    stream = _stream(rng_handle, "prox-point").split("inner")
    law = oracle.law if oracle.law is not None else problem.law
    r = problem.r

    w = x.copy()
    acc = np.zeros_like(w)
    anchor = None
    n_acc = 0
    residual = math.inf
    prev = math.inf
    growth = 0
    for k in range(K):
        eta = eta0 / (1.0 + k * m * eta0)
        g = smoothed_gradient_samples(oracle, w, mu, B, stream, law, start=k * B).mean(axis=0)
        w_new = apply_prox(r, w - eta * (g + (w - x) / lam), eta)
        if not np.all(np.isfinite(w_new)):
            raise CertificationError(f"non-finite inner iterate at step {k}")
        move = float(np.linalg.norm(w_new - w))
        residual = move / eta
        # moves at round-off size mean convergence, even though move / eta grows
        stalled = move <= 1e-12 * (1.0 + float(np.linalg.norm(w)))
        growth = growth + 1 if residual > prev * (1.0 + GROWTH_TOL) and not stalled else 0
        if growth >= DIVERGENCE_WINDOW:
            raise CertificationError(
                f"inner residual grew for {DIVERGENCE_WINDOW} consecutive steps (at step {k})")
        prev = residual
        w = w_new
        if k >= start_avg:
            # shifted running sum: a constant tail averages to itself exactly
            if anchor is None:
                anchor = w.copy()
            acc += w - anchor
            n_acc += 1
    x_hat = anchor + acc / n_acc
    # averaging stays in a convex domain up to round-off
    if r.kind in ("box", "l1_box"):
        x_hat = np.clip(x_hat, *r.bounds(x.shape[0]))
    elif r.kind == "l2ball":
        x_hat = prox_l2ball(x_hat, r.radius)
    return x_hat, residual, K


def envelope_gradient_norm(x, x_hat, lam):
    """||x - x_hat|| / lambda."""
    if not lam > 0:
        raise InputError("lambda must be positive")
    return float(np.linalg.norm(np.asarray(x, float) - np.asarray(x_hat, float))) / lam


def certify(problem, oracle, x, epsilon=None, params=None):
    """Estimate ||grad e_lambda phi_mu(x)|| and test it against epsilon.

    A passing certificate makes x a (lambda eps, eps)-Goldstein point of
    phi_mu, and, when r = 0, a (lambda eps + mu, eps)-Goldstein point of phi.
    """
    if params is None:
        raise InputError("certify needs CertifyParams (at least mu)")
    lam, rho, _ = params.resolve(problem)
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise InputError(f"point has shape {x.shape}, expected ({problem.n},)")
    calls0 = oracle.calls
    x_hat, res, iters = estimate_prox_point(problem, oracle, x, lam, params.mu, params,
                                            CounterStream(params.seed, ("certify",)), rho)
    norm = envelope_gradient_norm(x, x_hat, lam)
    cert = Certificate(x=x, x_hat=x_hat, lam=lam, mu=params.mu, env_grad_norm=norm,
                       inner_iters=iters, inner_residual=res,
                       mc_samples=2 * iters * params.batch, oracle_calls=oracle.calls - calls0)
    if epsilon is not None:
        cert.epsilon = float(epsilon)
        cert.passed = bool(norm <= epsilon)
        if cert.passed:
            cert.goldstein_radius_smoothed = lam * epsilon
            if problem.r.kind == "zero":
                cert.goldstein_radius_original = lam * epsilon + params.mu
    log.debug("certify: |grad e| = %.4g (lambda=%.3g, residual=%.3g)", norm, lam, res)
    return cert


def min_norm_weights(grads, iters=1000):
    """Simplex weights of the smallest-norm convex combination of the rows.

    Projected gradient on 0.5||G'w||^2 over the simplex.  The step is
    1/(2 max ||g_i||^2), shortened to 1/lambda_max(G G') when that is smaller
    so the iteration cannot overshoot.
    """
    G = np.atleast_2d(np.asarray(grads, dtype=float))
    k = G.shape[0]
    if k < 1 or G.size == 0:
        raise InputError("need at least one gradient")
    if k == 1:
        return np.ones(1)
    biggest = float(np.max(np.sum(G * G, axis=1)))
    if biggest == 0.0:
        return np.full(k, 1.0 / k)
    lmax = float(np.linalg.eigvalsh(G @ G.T)[-1])
    step = min(1.0 / (2.0 * biggest), 1.0 / lmax)
    return kernels.minnorm_simplex(np.ascontiguousarray(G), int(iters), step)


def goldstein_min_norm(grads, iters=1000):
    """Min-norm point of the sampled convex hull and its norm.

    The norm upper-bounds the distance from 0 to the hull.
    """
    G = np.atleast_2d(np.asarray(grads, dtype=float))
    point = min_norm_weights(G, iters) @ G
    return point, float(np.linalg.norm(point))


def goldstein_diagnostic(problem, oracle, x, radius, mu, num_points=16, num_samples=2000,
                         rng_handle=0):
    """Min-norm element of smoothed gradients sampled in the radius-ball at x."""
    stream = _stream(rng_handle, "goldstein")
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    pts = x + radius * ball_rows(stream.split("points"), 0, num_points, n)
    pts[0] = x
    law = oracle.law if oracle.law is not None else problem.law
    grads = np.array([estimate_smoothed_gradient(oracle, p, mu, num_samples,
                                                 stream.split(("grad", i)), law)
                      for i, p in enumerate(pts)])
    w = min_norm_weights(grads)
    point = w @ grads
    norm = float(np.linalg.norm(point))
    return GoldsteinDiagnostic(radius=radius, sampled_grads=grads, weights=w,
                               min_norm_point=point, min_norm=norm)
