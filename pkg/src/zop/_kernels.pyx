# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_kernels_py``.

Same signatures and return conventions as the pure-Python module.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free, qsort
from libc.string cimport memcpy

cnp.import_array()

BACKEND = "cython"

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t _M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t _M2 = 0x94D049BB133111EBULL


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * _M1
    z = (z ^ (z >> 27)) * _M2
    return z ^ (z >> 31)


cdef inline uint64_t _bits(double v) noexcept nogil:
    cdef uint64_t w
    v = v + 0.0
    memcpy(&w, &v, 8)
    return w


def hash_noise(X, XI, seed):
    cdef const double[:, ::1] xv = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    cdef const double[:, ::1] sv = np.ascontiguousarray(np.atleast_2d(XI), dtype=np.float64)
    cdef Py_ssize_t k = xv.shape[0], n = xv.shape[1], d = sv.shape[1]
    cdef Py_ssize_t i, j
    cdef uint64_t s = <uint64_t>int(seed)
    cdef uint64_t h0 = _mix(s + _GOLDEN), h
    out = np.empty(k, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(k):
            h = h0
            for j in range(n):
                h = _mix(h ^ _bits(xv[i, j])) + _GOLDEN
            for j in range(d):
                h = _mix(h ^ _bits(sv[i, j])) + _GOLDEN
            h = _mix(h)
            ov[i] = <double>(h >> 11) * (1.0 / 9007199254740992.0)
    return out


cdef inline void _project(double* y, Py_ssize_t m, int kind, double* lo, double* hi,
                          double radius) noexcept nogil:
    cdef Py_ssize_t i
    cdef double nrm = 0.0, scale
    if kind == 0:
        for i in range(m):
            if y[i] < lo[i]:
                y[i] = lo[i]
            if y[i] > hi[i]:
                y[i] = hi[i]
        return
    for i in range(m):
        nrm += y[i] * y[i]
    nrm = sqrt(nrm)
    if nrm > radius:
        scale = radius / nrm
        for i in range(m):
            y[i] *= scale


cdef inline double _objective(const double[:, ::1] P, double* q, double* y, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double quad = 0.0, lin = 0.0, row
    for i in range(m):
        row = 0.0
        for j in range(m):
            row += P[i, j] * y[j]
        quad += y[i] * row
        lin += q[i] * y[i]
    return 0.5 * quad + lin


def qp_solve(P, q, kind, lo, hi, radius, L, sigma, tol, budget):
    cdef const double[:, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t m = qv.shape[0]
    cdef const double[::1] lov = np.ascontiguousarray(np.broadcast_to(np.asarray(lo, dtype=np.float64), (m,)))
    cdef const double[::1] hiv = np.ascontiguousarray(np.broadcast_to(np.asarray(hi, dtype=np.float64), (m,)))
    cdef int kd = int(kind)
    cdef double R = float(radius), Lc = float(L), sg = float(sigma), tl = float(tol)
    cdef long nb = int(budget)
    y_arr = np.zeros(m)
    yn_arr = np.zeros(m)
    g_arr = np.zeros(m)
    cdef double[::1] y = y_arr
    cdef double[::1] yn = yn_arr
    cdef double[::1] g = g_arr
    cdef Py_ssize_t i, j
    cdef long it
    cdef double fw, sb, best = INFINITY, acc, gnorm
    cdef int done = 0
    cdef int use_new = 0
    cdef long iters = nb
    cdef double gap = INFINITY
    with nogil:
        _project(&y[0], m, kd, &lov[0], &hiv[0], R)
        for it in range(nb + 1):
            for i in range(m):
                acc = 0.0
                for j in range(m):
                    acc += Pv[i, j] * y[j]
                g[i] = acc + qv[i]
            fw = 0.0
            if kd == 0:
                for i in range(m):
                    if g[i] > 0.0:
                        fw += g[i] * (y[i] - lov[i])
                    else:
                        fw += g[i] * (y[i] - hiv[i])
            else:
                gnorm = 0.0
                for i in range(m):
                    fw += g[i] * y[i]
                    gnorm += g[i] * g[i]
                fw += R * sqrt(gnorm)
            if fw <= tl:
                done = 1
                iters = it
                gap = fw
                break
            if fw < best:
                best = fw
            for i in range(m):
                yn[i] = y[i] - g[i] / Lc
            _project(&yn[0], m, kd, &lov[0], &hiv[0], R)
            if sg > 0.0:
                sb = 0.0
                for i in range(m):
                    acc = Lc * (y[i] - yn[i])
                    sb += acc * acc
                sb = sb / (2.0 * sg)
                if sb <= tl:
                    done = 1
                    use_new = 1
                    iters = it + 1
                    gap = sb
                    break
                if sb < best:
                    best = sb
            for i in range(m):
                y[i] = yn[i]
    if use_new:
        out = yn_arr.copy()
    else:
        out = y_arr.copy()
    cdef double[::1] ov = out
    val = _objective(Pv, &qv[0], &ov[0], m)
    if done:
        return out, val, iters, gap, True
    return out, val, nb, best, False


cdef int _solve_small(double* A, double* b, Py_ssize_t n) noexcept nogil:
    """Gaussian elimination with partial pivoting, in place; b <- A^{-1} b."""
    cdef Py_ssize_t i, j, k, piv
    cdef double mx, t, f
    for k in range(n):
        piv = k
        mx = abs(A[k * n + k])
        for i in range(k + 1, n):
            if abs(A[i * n + k]) > mx:
                mx = abs(A[i * n + k])
                piv = i
        if mx == 0.0:
            return -1
        if piv != k:
            for j in range(n):
                t = A[k * n + j]
                A[k * n + j] = A[piv * n + j]
                A[piv * n + j] = t
            t = b[k]
            b[k] = b[piv]
            b[piv] = t
        for i in range(k + 1, n):
            f = A[i * n + k] / A[k * n + k]
            for j in range(k, n):
                A[i * n + j] -= f * A[k * n + j]
            b[i] -= f * b[k]
    for i in range(n - 1, -1, -1):
        t = b[i]
        for j in range(i + 1, n):
            t -= A[i * n + j] * b[j]
        b[i] = t / A[i * n + i]
    return 0


def box_qp_exact(P, Qlin, lo, hi):
    cdef const double[:, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[:, ::1] Qv = np.ascontiguousarray(np.atleast_2d(Qlin), dtype=np.float64)
    cdef Py_ssize_t k = Qv.shape[0], m = Qv.shape[1]
    cdef const double[::1] lov = np.ascontiguousarray(np.broadcast_to(np.asarray(lo, dtype=np.float64), (m,)))
    cdef const double[::1] hiv = np.ascontiguousarray(np.broadcast_to(np.asarray(hi, dtype=np.float64), (m,)))
    best_val = np.full(k, np.inf)
    best_y = np.zeros((k, m))
    cdef double[::1] bv = best_val
    cdef double[:, ::1] by = best_y
    cdef Py_ssize_t npat = 1, p, r, i, j, nf, code
    for i in range(m):
        npat *= 3
    cdef int* pat = <int*>malloc(m * sizeof(int))
    cdef Py_ssize_t* fidx = <Py_ssize_t*>malloc(m * sizeof(Py_ssize_t))
    cdef double* A = <double*>malloc(m * m * sizeof(double))
    cdef double* rhs = <double*>malloc(m * sizeof(double))
    cdef double* y = <double*>malloc(m * sizeof(double))
    cdef double val, slack, row
    cdef int feasible
    try:
        with nogil:
            for p in range(npat):
                code = p
                nf = 0
                for i in range(m):
                    pat[i] = <int>(code % 3)
                    code = code // 3
                    if pat[i] == 0:
                        fidx[nf] = i
                        nf += 1
                for r in range(k):
                    for i in range(m):
                        if pat[i] == 1:
                            y[i] = lov[i]
                        elif pat[i] == 2:
                            y[i] = hiv[i]
                        else:
                            y[i] = 0.0
                    feasible = 1
                    if nf > 0:
                        for i in range(nf):
                            row = -Qv[r, fidx[i]]
                            for j in range(m):
                                if pat[j] != 0:
                                    row -= Pv[fidx[i], j] * y[j]
                            rhs[i] = row
                            for j in range(nf):
                                A[i * nf + j] = Pv[fidx[i], fidx[j]]
                        if _solve_small(A, rhs, nf) != 0:
                            continue
                        for i in range(nf):
                            slack = 1e-12 * (1.0 + abs(rhs[i]))
                            if rhs[i] < lov[fidx[i]] - slack or rhs[i] > hiv[fidx[i]] + slack:
                                feasible = 0
                            if rhs[i] < lov[fidx[i]]:
                                rhs[i] = lov[fidx[i]]
                            if rhs[i] > hiv[fidx[i]]:
                                rhs[i] = hiv[fidx[i]]
                            y[fidx[i]] = rhs[i]
                    if not feasible:
                        continue
                    val = _objective(Pv, &Qv[r, 0], y, m)
                    if val < bv[r]:
                        bv[r] = val
                        for i in range(m):
                            by[r, i] = y[i]
    finally:
        free(pat)
        free(fidx)
        free(A)
        free(rhs)
        free(y)
    return best_val, best_y


cdef int _desc(const void* a, const void* b) noexcept nogil:
    cdef double x = (<double*>a)[0]
    cdef double y = (<double*>b)[0]
    if x < y:
        return 1
    if x > y:
        return -1
    return 0


cdef void _project_simplex(double* v, double* u, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i, rho = 0
    cdef double css = 0.0, theta = 0.0, run = 0.0
    for i in range(k):
        u[i] = v[i]
    qsort(u, k, sizeof(double), _desc)
    for i in range(k):
        run += u[i]
        if u[i] * (i + 1) > run - 1.0:
            rho = i
            css = run - 1.0
    theta = css / (rho + 1.0)
    for i in range(k):
        v[i] = v[i] - theta
        if v[i] < 0.0:
            v[i] = 0.0


def project_simplex(v):
    out = np.array(v, dtype=np.float64, copy=True)
    cdef double[::1] ov = out
    cdef Py_ssize_t k = ov.shape[0]
    cdef double* u = <double*>malloc(k * sizeof(double))
    try:
        _project_simplex(&ov[0], u, k)
    finally:
        free(u)
    return out


def minnorm_simplex(G, iters, step):
    Gc = np.ascontiguousarray(G, dtype=np.float64)
    gram_arr = np.ascontiguousarray(Gc @ Gc.T)
    cdef double[:, ::1] gram = gram_arr
    cdef Py_ssize_t k = gram.shape[0], i, j
    cdef long it, nit = int(iters)
    cdef double eta = float(step), val, best, acc
    w_arr = np.full(k, 1.0 / k)
    best_arr = w_arr.copy()
    cdef double[::1] w = w_arr
    cdef double[::1] bw = best_arr
    cdef double* gw = <double*>malloc(k * sizeof(double))
    cdef double* u = <double*>malloc(k * sizeof(double))
    try:
        with nogil:
            best = 0.0
            for i in range(k):
                acc = 0.0
                for j in range(k):
                    acc += gram[i, j] * w[j]
                best += w[i] * acc
            for it in range(nit):
                for i in range(k):
                    acc = 0.0
                    for j in range(k):
                        acc += gram[i, j] * w[j]
                    gw[i] = acc
                for i in range(k):
                    w[i] = w[i] - eta * gw[i]
                _project_simplex(&w[0], u, k)
                val = 0.0
                for i in range(k):
                    acc = 0.0
                    for j in range(k):
                        acc += gram[i, j] * w[j]
                    val += w[i] * acc
                if val < best:
                    best = val
                    for i in range(k):
                        bw[i] = w[i]
    finally:
        free(gw)
        free(u)
    return best_arr
