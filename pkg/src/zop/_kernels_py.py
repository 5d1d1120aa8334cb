"""Pure-Python/numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors every function
here with the same signature and arithmetic order.  ``zop._backend`` picks the
compiled module when it is importable.
"""

import itertools

import numpy as np

BACKEND = "python"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def hash_noise(X, XI, seed):
    """Per-row pseudo-uniform on [0, 1) hashed from the bits of (x, xi, seed)."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64) + 0.0
    XI = np.ascontiguousarray(np.atleast_2d(XI), dtype=np.float64) + 0.0
    xb = X.view(np.uint64)
    sb = XI.view(np.uint64)
    with np.errstate(over="ignore"):
        h = np.full(X.shape[0], _mix(np.uint64(seed) + _GOLDEN), dtype=np.uint64)
        for j in range(xb.shape[1]):
            h = _mix(h ^ xb[:, j]) + _GOLDEN
        for j in range(sb.shape[1]):
            h = _mix(h ^ sb[:, j]) + _GOLDEN
        h = _mix(h)
    return (h >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)


def _project(y, kind, lo, hi, radius):
    if kind == 0:
        return np.minimum(np.maximum(y, lo), hi)
    nrm = np.sqrt(np.dot(y, y))
    if nrm <= radius:
        return y
    return y * (radius / nrm)


def _fw_gap(y, g, kind, lo, hi, radius):
    if kind == 0:
        z = np.where(g > 0.0, lo, hi)
        return float(np.dot(g, y - z))
    return float(np.dot(g, y) + radius * np.sqrt(np.dot(g, g)))


def qp_solve(P, q, kind, lo, hi, radius, L, sigma, tol, budget):
    """Projected gradient on h(y) = 0.5 y'Py + q'y over a box or a ball.

    ``kind`` is 0 for the box [lo, hi], 1 for the centered ball of
    ``radius``.  Starts at the projection of 0 with step 1/L and stops at the
    first certificate: the Frank-Wolfe gap at the current point, or (when
    ``sigma`` > 0 is a strong-convexity modulus) ||gradient mapping||^2/(2
    sigma) for the projected point.  Returns ``(y, h(y), iterations,
    gap_bound, certified)``; on budget exhaustion ``certified`` is False and
    ``gap_bound`` is the best bound seen.
    """
    P = np.asarray(P, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    m = q.shape[0]
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (m,))
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (m,))
    y = _project(np.zeros(m), kind, lo, hi, radius)
    best = np.inf
    for it in range(budget + 1):
        g = P @ y + q
        fw = _fw_gap(y, g, kind, lo, hi, radius)
        if fw <= tol:
            return y, float(0.5 * (y @ (P @ y)) + q @ y), it, fw, True
        best = min(best, fw)
        y_new = _project(y - g / L, kind, lo, hi, radius)
        if sigma > 0.0:
            gm = L * (y - y_new)
            sb = float(np.dot(gm, gm)) / (2.0 * sigma)
            if sb <= tol:
                return (y_new, float(0.5 * (y_new @ (P @ y_new)) + q @ y_new),
                        it + 1, sb, True)
            best = min(best, sb)
        y = y_new
    return y, float(0.5 * (y @ (P @ y)) + q @ y), budget, best, False


def box_qp_exact(P, Qlin, lo, hi):
    """Exact minimum of 0.5 y'Py + q'y over a box, for each row q of Qlin.

    Enumerates the 3^m active sets (free / at lower / at upper bound).  Every
    feasible candidate is a feasible point, and the optimal active set is
    among them, so the smallest feasible candidate value is the minimum.
    Intended for m <= 3 with P positive definite.
    """
    P = np.asarray(P, dtype=np.float64)
    Qlin = np.atleast_2d(np.asarray(Qlin, dtype=np.float64))
    k, m = Qlin.shape
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (m,))
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (m,))
    best_val = np.full(k, np.inf)
    best_y = np.zeros((k, m))
    for pattern in itertools.product((0, 1, 2), repeat=m):
        pattern = np.array(pattern)
        free = pattern == 0
        Y = np.empty((k, m))
        Y[:, pattern == 1] = lo[pattern == 1]
        Y[:, pattern == 2] = hi[pattern == 2]
        feasible = np.ones(k, dtype=bool)
        if free.any():
            fixed = ~free
            rhs = -Qlin[:, free]
            if fixed.any():
                rhs = rhs - Y[:, fixed] @ P[np.ix_(free, fixed)].T
            yf = np.linalg.solve(P[np.ix_(free, free)], rhs.T).T
            slack = 1e-12 * (1.0 + np.abs(yf))
            feasible = np.all((yf >= lo[free] - slack) & (yf <= hi[free] + slack), axis=1)
            Y[:, free] = np.clip(yf, lo[free], hi[free])
        vals = 0.5 * np.einsum("ki,ij,kj->k", Y, P, Y) + np.einsum("ki,ki->k", Qlin, Y)
        better = feasible & (vals < best_val)
        best_val[better] = vals[better]
        best_y[better] = Y[better]
    return best_val, best_y


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.shape[0] + 1)
    rho = np.nonzero(u * idx > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def minnorm_simplex(G, iters, step):
    """Projected gradient on 0.5||G'w||^2 over the simplex; best weights seen."""
    G = np.ascontiguousarray(G, dtype=np.float64)
    k = G.shape[0]
    gram = G @ G.T
    w = np.full(k, 1.0 / k)
    best_w = w.copy()
    best = float(w @ gram @ w)
    for _ in range(iters):
        w = project_simplex(w - step * (gram @ w))
        val = float(w @ gram @ w)
        if val < best:
            best = val
            best_w = w.copy()
    return best_w
