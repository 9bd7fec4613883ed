# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Every function here has a drop-in twin in ``_pykernels`` with the same
signature and the same summation order, so both backends agree to the
last bit on integer-valued inputs and to rounding elsewhere.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, INFINITY

cnp.import_array()


cdef inline double _logaddexp(double a, double b) noexcept nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


cdef inline double _row_logsumexp(double[:, ::1] m, Py_ssize_t t, Py_ssize_t k) noexcept nogil:
    cdef double acc = -INFINITY
    cdef Py_ssize_t j
    for j in range(k):
        acc = _logaddexp(acc, m[t, j])
    return acc


def forward_log(double[::1] log_delta, double[:, ::1] log_gamma,
                double[:, ::1] log_b, const unsigned char[::1] starts):
    """Log forward variables and total log-likelihood over all segments."""
    cdef Py_ssize_t n = log_b.shape[0], k = log_b.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double acc, loglik = 0.0
    alpha_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] alpha = alpha_arr
    with nogil:
        for t in range(n):
            if starts[t] or t == 0:
                if t > 0:
                    loglik += _row_logsumexp(alpha, t - 1, k)
                for j in range(k):
                    alpha[t, j] = log_delta[j] + log_b[t, j]
            else:
                for j in range(k):
                    acc = -INFINITY
                    for i in range(k):
                        acc = _logaddexp(acc, alpha[t - 1, i] + log_gamma[i, j])
                    alpha[t, j] = acc + log_b[t, j]
        if n > 0:
            loglik += _row_logsumexp(alpha, n - 1, k)
    return alpha_arr, loglik


def backward_log(double[:, ::1] log_gamma, double[:, ::1] log_b,
                 const unsigned char[::1] starts):
    """Log backward variables; zero at the last observation of each segment."""
    cdef Py_ssize_t n = log_b.shape[0], k = log_b.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double acc
    beta_arr = np.zeros((n, k), dtype=np.float64)
    cdef double[:, ::1] beta = beta_arr
    with nogil:
        for t in range(n - 2, -1, -1):
            if starts[t + 1]:
                continue
            for i in range(k):
                acc = -INFINITY
                for j in range(k):
                    acc = _logaddexp(acc, log_gamma[i, j] + log_b[t + 1, j] + beta[t + 1, j])
                beta[t, i] = acc
    return beta_arr


def viterbi(double[::1] log_delta, double[:, ::1] log_gamma,
            double[:, ::1] log_b, const unsigned char[::1] starts):
    """Most probable state path, restarting at every segment start."""
    cdef Py_ssize_t n = log_b.shape[0], k = log_b.shape[1]
    cdef Py_ssize_t t, i, j, best_i
    cdef double best, cand
    score_arr = np.empty((n, k), dtype=np.float64)
    ptr_arr = np.zeros((n, k), dtype=np.intp)
    path_arr = np.zeros(n, dtype=np.intp)
    cdef double[:, ::1] score = score_arr
    cdef Py_ssize_t[:, ::1] ptr = ptr_arr
    cdef Py_ssize_t[::1] path = path_arr
    with nogil:
        for t in range(n):
            if starts[t] or t == 0:
                for j in range(k):
                    score[t, j] = log_delta[j] + log_b[t, j]
            else:
                for j in range(k):
                    best = -INFINITY
                    best_i = 0
                    for i in range(k):
                        cand = score[t - 1, i] + log_gamma[i, j]
                        if cand > best:
                            best = cand
                            best_i = i
                    score[t, j] = best + log_b[t, j]
                    ptr[t, j] = best_i
        if n > 0:
            t = n - 1
            best = score[t, 0]
            best_i = 0
            for j in range(1, k):
                if score[t, j] > best:
                    best = score[t, j]
                    best_i = j
            path[t] = best_i
            for t in range(n - 1, 0, -1):
                if starts[t]:
                    best = score[t - 1, 0]
                    best_i = 0
                    for j in range(1, k):
                        if score[t - 1, j] > best:
                            best = score[t - 1, j]
                            best_i = j
                    path[t - 1] = best_i
                else:
                    path[t - 1] = ptr[t, path[t]]
    return path_arr


cdef void _envelope_1d(double* f, Py_ssize_t n, double* out,
                       Py_ssize_t* v, double* z) noexcept nogil:
    # lower envelope of parabolas rooted at finite samples only
    cdef Py_ssize_t q, k = -1
    cdef double s
    for q in range(n):
        if f[q] == INFINITY:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -INFINITY
            z[1] = INFINITY
            continue
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INFINITY
    if k < 0:
        for q in range(n):
            out[q] = INFINITY
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        out[q] = (q - v[k]) * (q - v[k]) + f[v[k]]


def edt_squared(const unsigned char[:, ::1] mask):
    """Exact squared Euclidean distance (in cells) to the nearest set cell."""
    cdef Py_ssize_t nr = mask.shape[0], nc = mask.shape[1]
    cdef Py_ssize_t r, c, m = max(nr, nc)
    out_arr = np.empty((nr, nc), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    f_arr = np.empty(m, dtype=np.float64)
    d_arr = np.empty(m, dtype=np.float64)
    v_arr = np.empty(m, dtype=np.intp)
    z_arr = np.empty(m + 1, dtype=np.float64)
    cdef double[::1] f = f_arr
    cdef double[::1] d = d_arr
    cdef Py_ssize_t[::1] v = v_arr
    cdef double[::1] z = z_arr
    with nogil:
        for c in range(nc):
            for r in range(nr):
                f[r] = 0.0 if mask[r, c] else INFINITY
            _envelope_1d(&f[0], nr, &d[0], &v[0], &z[0])
            for r in range(nr):
                out[r, c] = d[r]
        for r in range(nr):
            for c in range(nc):
                f[c] = out[r, c]
            _envelope_1d(&f[0], nc, &d[0], &v[0], &z[0])
            for c in range(nc):
                out[r, c] = d[c]
    return out_arr


def sector_costs(double[:, ::1] excess, const Py_ssize_t[::1] dr,
                 const Py_ssize_t[::1] dc, const Py_ssize_t[::1] sector,
                 Py_ssize_t n_sectors):
    """Sum ``excess`` over each directional sector around every cell.

    Offsets are visited in the given order so the floating-point sums
    match the vectorised fallback exactly.
    """
    cdef Py_ssize_t nr = excess.shape[0], nc = excess.shape[1]
    cdef Py_ssize_t k, r, c, rr, cc, s, r0, r1, c0, c1
    out_arr = np.zeros((n_sectors, nr, nc), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for k in range(dr.shape[0]):
            s = sector[k]
            r0 = max(0, -dr[k])
            r1 = min(nr, nr - dr[k])
            c0 = max(0, -dc[k])
            c1 = min(nc, nc - dc[k])
            for r in range(r0, r1):
                rr = r + dr[k]
                for c in range(c0, c1):
                    cc = c + dc[k]
                    out[s, r, c] += excess[rr, cc]
    return out_arr
