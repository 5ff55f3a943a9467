"""JIT-compiled log-space chain recursions.

These kernels are the only sequential-in-n loops in the package; everything
around them is vectorised numpy. All three work purely on log quantities so
that emission densities down to the 1e-300 floor never underflow: the worst
case accumulates large negative numbers, which float64 holds comfortably.

log_b rows may contain the floor value but never -inf; log_q / log_init may
contain -inf (structural zeros of the chain), which the inline logsumexp
guards against.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def forward(log_init, log_q, log_b):
    """Forward recursion. Returns (log_alpha, log_lik)."""
    n, k = log_b.shape
    log_alpha = np.empty((n, k))
    for j in range(k):
        log_alpha[0, j] = log_init[j] + log_b[0, j]
    for i in range(1, n):
        for j2 in range(k):
            m = -np.inf
            for j1 in range(k):
                v = log_alpha[i - 1, j1] + log_q[j1, j2]
                if v > m:
                    m = v
            if m == -np.inf:
                log_alpha[i, j2] = -np.inf
            else:
                s = 0.0
                for j1 in range(k):
                    s += np.exp(log_alpha[i - 1, j1] + log_q[j1, j2] - m)
                log_alpha[i, j2] = m + np.log(s) + log_b[i, j2]
    m = -np.inf
    for j in range(k):
        if log_alpha[n - 1, j] > m:
            m = log_alpha[n - 1, j]
    if m == -np.inf:
        return log_alpha, -np.inf
    s = 0.0
    for j in range(k):
        s += np.exp(log_alpha[n - 1, j] - m)
    return log_alpha, m + np.log(s)


@njit(cache=True, nogil=True)
def backward(log_q, log_b):
    """Backward recursion. Returns log_beta with log_beta[n-1] = 0."""
    n, k = log_b.shape
    log_beta = np.empty((n, k))
    for j in range(k):
        log_beta[n - 1, j] = 0.0
    for i in range(n - 2, -1, -1):
        for j1 in range(k):
            m = -np.inf
            for j2 in range(k):
                v = log_q[j1, j2] + log_b[i + 1, j2] + log_beta[i + 1, j2]
                if v > m:
                    m = v
            if m == -np.inf:
                log_beta[i, j1] = -np.inf
            else:
                s = 0.0
                for j2 in range(k):
                    s += np.exp(log_q[j1, j2] + log_b[i + 1, j2]
                                + log_beta[i + 1, j2] - m)
                log_beta[i, j1] = m + np.log(s)
    return log_beta


@njit(cache=True, nogil=True)
def viterbi_path(log_init, log_q, log_b):
    """Most probable state path; ties resolve to the lowest state index."""
    n, k = log_b.shape
    delta = np.empty(k)
    delta_next = np.empty(k)
    ptr = np.empty((n, k), dtype=np.int64)
    for j in range(k):
        delta[j] = log_init[j] + log_b[0, j]
        ptr[0, j] = 0
    for i in range(1, n):
        for j2 in range(k):
            best = -np.inf
            arg = 0
            for j1 in range(k):
                v = delta[j1] + log_q[j1, j2]
                if v > best:
                    best = v
                    arg = j1
            delta_next[j2] = best + log_b[i, j2]
            ptr[i, j2] = arg
        for j in range(k):
            delta[j] = delta_next[j]
    best = -np.inf
    arg = 0
    for j in range(k):
        if delta[j] > best:
            best = delta[j]
            arg = j
    path = np.empty(n, dtype=np.int64)
    path[n - 1] = arg
    for i in range(n - 1, 0, -1):
        path[i - 1] = ptr[i, path[i]]
    return path
