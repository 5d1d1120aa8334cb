"""Closed-form proximity operators for the regularizer catalogue."""

import numpy as np

from .errors import ConfigurationError, InputError


def prox_l1(x, threshold):
    """Soft thresholding: sign(x) * max(|x| - threshold, 0)."""
    if threshold < 0:
        raise InputError("threshold must be nonnegative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def _check_box(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise InputError("box bounds must satisfy lo <= hi")
    return lo, hi


def prox_box(x, lo, hi):
    """Euclidean projection onto [lo, hi]; independent of the prox scale."""
    lo, hi = _check_box(lo, hi)
    return np.clip(np.asarray(x, dtype=float), lo, hi)


def prox_l2ball(x, radius):
    x = np.asarray(x, dtype=float)
    nrm = np.linalg.norm(x)
    if nrm <= radius:
        return x.copy()
    return (radius / nrm) * x


def prox_l1_plus_box(x, weight, lo, hi, alpha):
    """Prox of alpha*weight*||.||_1 + indicator of [lo, hi].

    Both terms are separable, and for a scalar convex function plus an
    interval the prox is the clamp of the unconstrained prox.
    """
    lo, hi = _check_box(lo, hi)
    return np.clip(prox_l1(x, alpha * weight), lo, hi)


def apply_prox(reg, x, alpha):
    """prox_{alpha r}(x) for a Regularizer."""
    if not alpha > 0:
        raise InputError("prox scale alpha must be positive")
    kind = reg.kind
    if kind == "zero":
        return np.array(x, dtype=float)
    if kind == "l1":
        return prox_l1(x, alpha * reg.weight)
    if kind == "box":
        return prox_box(x, reg.lo, reg.hi)
    if kind == "l2ball":
        return prox_l2ball(x, reg.radius)
    if kind == "l1_box":
        return prox_l1_plus_box(x, reg.weight, reg.lo, reg.hi, alpha)
    raise ConfigurationError(f"unknown regularizer kind {kind!r}")


def apply_prox_rows(reg, X, alpha):
    """Row-wise prox for a stack of points (same regularizer and scale)."""
    X = np.asarray(X, dtype=float)
    if reg.kind == "l2ball":
        nrm = np.linalg.norm(X, axis=1, keepdims=True)
        scale = np.where(nrm > reg.radius, reg.radius / np.where(nrm > 0, nrm, 1.0), 1.0)
        return X * scale
    return apply_prox(reg, X, alpha)


def huber_envelope_abs(x, lam):
    """Moreau envelope of |.| with parameter lam, and its gradient."""
    if not lam > 0:
        raise InputError("lambda must be positive")
    ax = abs(x)
    value = x * x / (2.0 * lam) if ax <= lam else ax - lam / 2.0
    grad = min(max(x / lam, -1.0), 1.0)
    return value, grad
