"""Uniform ball smoothing and the two-point zeroth-order gradient estimator.

f_mu(x) = E_{xi, U}[F(x + mu U, xi)] with U uniform on the unit ball, and

    G = n / (2 mu) * (F~(x + mu W, xi) - F~(x - mu W, xi)) * W,   W ~ U(S^{n-1})

is an unbiased estimate of grad f_mu(x) under an exact oracle.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import InputError
from .rng import CounterStream

CHUNK = 8192


@dataclass(frozen=True)
class SmoothingParams:
    mu: float
    c_const: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise InputError("smoothing radius mu must be positive")
        if not self.c_const > 0:
            raise InputError("smoothness constant c must be positive")

    def rho(self, G, n):
        """Weak-convexity modulus c G sqrt(n) / mu of the smoothed objective."""
        return self.c_const * G * math.sqrt(n) / self.mu


@dataclass(frozen=True)
class GradientEstimate:
    g: np.ndarray
    direction: np.ndarray
    scenario: np.ndarray
    plus_val: float
    minus_val: float

    @property
    def norm(self):
        return float(np.linalg.norm(self.g))


def sample_sphere(gen, n):
    """Uniform direction on the unit sphere of R^n (normalized Gaussian)."""
    if n < 1:
        raise InputError("dimension must be positive")
    while True:
        w = gen.standard_normal(n)
        nrm = np.linalg.norm(w)
        if nrm > 0.0:
            return w / nrm


def sample_ball(gen, n):
    """Uniform point in the closed unit ball: W * R^(1/n), R ~ U[0, 1]."""
    w = sample_sphere(gen, n)
    return w * gen.random() ** (1.0 / n)


def sphere_rows(stream, start, count, n):
    """Directions for sample indices start..start+count-1 of a stream."""
    W = stream.normals(start, count, n)
    nrm = np.linalg.norm(W, axis=1)
    bad = np.nonzero(nrm == 0.0)[0]
    for i in bad:
        W[i] = sample_sphere(stream.split("resample").generator(start + i), n)
        nrm[i] = 1.0
    return W / nrm[:, None]


def ball_rows(stream, start, count, n):
    W = sphere_rows(stream, start, count, n)
    radii = stream.split("radius").uniforms(start, count, 1)
    return W * radii ** (1.0 / n)


def log_ball_volume_constant(n):
    """log c_n with c_n = pi^(n/2) / Gamma(n/2 + 1), the unit-ball volume."""
    if n < 1:
        raise InputError("dimension must be positive")
    return 0.5 * n * math.log(math.pi) - math.lgamma(0.5 * n + 1.0)


def ball_volume_constant(n):
    return math.exp(log_ball_volume_constant(n))


def two_point_estimate(oracle, x, xi, W, mu):
    """Symmetric two-point estimate at x along the unit direction W."""
    if not mu > 0:
        raise InputError("mu must be positive")
    x = np.asarray(x, dtype=float)
    W = np.asarray(W, dtype=float)
    n = x.shape[0]
    plus = oracle(x + mu * W, xi)
    minus = oracle(x - mu * W, xi)
    g = (n / (2.0 * mu)) * (plus - minus) * W
    return GradientEstimate(g=g, direction=W, scenario=np.asarray(xi), plus_val=plus, minus_val=minus)


def _law_of(oracle, law):
    law = law if law is not None else getattr(oracle, "law", None)
    if law is None:
        raise InputError("no scenario law: pass law= or use an oracle that carries one")
    return law


def _as_stream(stream):
    if isinstance(stream, CounterStream):
        return stream
    return CounterStream(int(stream), ("smoothing",))


def smoothed_value_samples(oracle, x, mu, num_samples, stream, law=None, start=0):
    """Per-sample values F~(x + mu U_i, xi_i) for i = start..start+N-1."""
    law = _law_of(oracle, law)
    stream = _as_stream(stream)
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    ball = stream.split("ball")
    scen = stream.split("scenario")
    out = np.empty(num_samples)
    for lo in range(0, num_samples, CHUNK):
        k = min(CHUNK, num_samples - lo)
        U = ball_rows(ball, start + lo, k, n)
        XI = scen.rows(("law", law), law.sample, start + lo, k)
        out[lo:lo + k] = oracle.batch(x + mu * U, XI)
    return out


def estimate_smoothed_value(oracle, x, mu, num_samples, stream, law=None):
    """Monte Carlo estimate of f_mu(x) and its standard error."""
    if num_samples < 2:
        raise InputError("need at least two samples for a standard error")
    vals = smoothed_value_samples(oracle, x, mu, num_samples, stream, law)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(num_samples))


def smoothed_gradient_samples(oracle, x, mu, num_samples, stream, law=None, start=0):
    """Row i is the two-point estimate built from sample index start + i."""
    law = _law_of(oracle, law)
    stream = _as_stream(stream)
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    dirs = stream.split("direction")
    scen = stream.split("scenario")
    out = np.empty((num_samples, n))
    for lo in range(0, num_samples, CHUNK):
        k = min(CHUNK, num_samples - lo)
        W = sphere_rows(dirs, start + lo, k, n)
        XI = scen.rows(("law", law), law.sample, start + lo, k)
        pts = np.concatenate([x + mu * W, x - mu * W])
        vals = oracle.batch(pts, np.concatenate([XI, XI]))
        diff = vals[:k] - vals[k:]
        out[lo:lo + k] = (n / (2.0 * mu)) * diff[:, None] * W
    return out


def estimate_smoothed_gradient(oracle, x, mu, num_samples, stream, law=None, return_se=False):
    """Mean of N independent two-point estimates; estimates grad f_mu(x)."""
    if num_samples < 1:
        raise InputError("need at least one sample")
    G = smoothed_gradient_samples(oracle, x, mu, num_samples, stream, law)
    mean = G.mean(axis=0)
    if not return_se:
        return mean
    se = G.std(axis=0, ddof=1) / math.sqrt(num_samples) if num_samples > 1 else np.full_like(mean, np.inf)
    return mean, se
