"""Pure-Python fallbacks for the compiled kernels.

Signatures and iteration order mirror ``_ckernels`` so the two backends
can be swapped freely and cross-checked in tests.
"""
from __future__ import annotations

import math

import numpy as np

_NEG_INF = -math.inf


def _logaddexp(a: float, b: float) -> float:
    if a == _NEG_INF:
        return b
    if b == _NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def _row_logsumexp(row) -> float:
    acc = _NEG_INF
    for value in row:
        acc = _logaddexp(acc, value)
    return acc


def forward_log(log_delta, log_gamma, log_b, starts):
    """Log forward variables and total log-likelihood over all segments."""
    log_b_rows = np.asarray(log_b, dtype=np.float64).tolist()
    lg = np.asarray(log_gamma, dtype=np.float64).tolist()
    ld = np.asarray(log_delta, dtype=np.float64).tolist()
    starts = np.asarray(starts).tolist()
    n = len(log_b_rows)
    k = len(ld)
    alpha = []
    loglik = 0.0
    prev = None
    for t in range(n):
        b = log_b_rows[t]
        if starts[t] or t == 0:
            if t > 0:
                loglik += _row_logsumexp(prev)
            cur = [ld[j] + b[j] for j in range(k)]
        else:
            cur = []
            for j in range(k):
                acc = _NEG_INF
                for i in range(k):
                    acc = _logaddexp(acc, prev[i] + lg[i][j])
                cur.append(acc + b[j])
        alpha.append(cur)
        prev = cur
    if n > 0:
        loglik += _row_logsumexp(prev)
    return np.array(alpha, dtype=np.float64).reshape(n, k), loglik


def backward_log(log_gamma, log_b, starts):
    """Log backward variables; zero at the last observation of each segment."""
    log_b_rows = np.asarray(log_b, dtype=np.float64).tolist()
    lg = np.asarray(log_gamma, dtype=np.float64).tolist()
    starts = np.asarray(starts).tolist()
    n = len(log_b_rows)
    k = len(lg)
    beta = [[0.0] * k for _ in range(n)]
    for t in range(n - 2, -1, -1):
        if starts[t + 1]:
            continue
        nb = log_b_rows[t + 1]
        nxt = beta[t + 1]
        row = beta[t]
        for i in range(k):
            acc = _NEG_INF
            for j in range(k):
                acc = _logaddexp(acc, lg[i][j] + nb[j] + nxt[j])
            row[i] = acc
    return np.array(beta, dtype=np.float64).reshape(n, k)


def viterbi(log_delta, log_gamma, log_b, starts):
    """Most probable state path, restarting at every segment start."""
    log_b_rows = np.asarray(log_b, dtype=np.float64).tolist()
    lg = np.asarray(log_gamma, dtype=np.float64).tolist()
    ld = np.asarray(log_delta, dtype=np.float64).tolist()
    starts = np.asarray(starts).tolist()
    n = len(log_b_rows)
    k = len(ld)
    score: list[list[float]] = []
    ptr: list[list[int]] = []
    for t in range(n):
        b = log_b_rows[t]
        if starts[t] or t == 0:
            score.append([ld[j] + b[j] for j in range(k)])
            ptr.append([0] * k)
            continue
        prev = score[t - 1]
        row, back = [], []
        for j in range(k):
            best, best_i = _NEG_INF, 0
            for i in range(k):
                cand = prev[i] + lg[i][j]
                if cand > best:
                    best, best_i = cand, i
            row.append(best + b[j])
            back.append(best_i)
        score.append(row)
        ptr.append(back)
    path = np.zeros(n, dtype=np.intp)
    if n == 0:
        return path

    def argmax(row):
        best, best_j = row[0], 0
        for j in range(1, k):
            if row[j] > best:
                best, best_j = row[j], j
        return best_j

    path[n - 1] = argmax(score[n - 1])
    for t in range(n - 1, 0, -1):
        if starts[t]:
            path[t - 1] = argmax(score[t - 1])
        else:
            path[t - 1] = ptr[t][path[t]]
    return path


def _envelope_1d(f: list[float]) -> list[float]:
    n = len(f)
    v: list[int] = []
    z: list[float] = []
    for q in range(n):
        if f[q] == math.inf:
            continue
        if not v:
            v.append(q)
            z[:] = [-math.inf, math.inf]
            continue
        k = len(v) - 1
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
        del v[k + 1:]
        del z[k + 1:]
        v.append(q)
        z.append(s)
        z.append(math.inf)
    if not v:
        return [math.inf] * n
    out = [0.0] * n
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        out[q] = (q - v[k]) * (q - v[k]) + f[v[k]]
    return out


def edt_squared(mask):
    """Exact squared Euclidean distance (in cells) to the nearest set cell."""
    mask = np.asarray(mask, dtype=bool)
    nr, nc = mask.shape
    cols = []
    for c in range(nc):
        f = [0.0 if m else math.inf for m in mask[:, c].tolist()]
        cols.append(_envelope_1d(f))
    stage = np.array(cols, dtype=np.float64).T if nc else np.zeros((nr, 0))
    out = np.empty((nr, nc), dtype=np.float64)
    for r in range(nr):
        out[r] = _envelope_1d(stage[r].tolist())
    return out


def sector_costs(excess, dr, dc, sector, n_sectors):
    """Sum ``excess`` over each directional sector around every cell."""
    excess = np.ascontiguousarray(excess, dtype=np.float64)
    nr, nc = excess.shape
    out = np.zeros((n_sectors, nr, nc), dtype=np.float64)
    for di, dj, s in zip(np.asarray(dr).tolist(), np.asarray(dc).tolist(),
                         np.asarray(sector).tolist()):
        r0, r1 = max(0, -di), min(nr, nr - di)
        c0, c1 = max(0, -dj), min(nc, nc - dj)
        if r0 >= r1 or c0 >= c1:
            continue
        out[s, r0:r1, c0:c1] += excess[r0 + di:r1 + di, c0 + dj:c1 + dj]
    return out
