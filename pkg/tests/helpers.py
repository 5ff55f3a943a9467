"""Slow, independent reference implementations used as test oracles.

Everything here is deliberately naive — exhaustive path enumeration, O(n^2)
pair counting, direct summation — so that agreement with the fast library
code is meaningful. Keep k and n tiny when calling these.
"""

import numpy as np
from scipy.special import logsumexp


def all_paths(k, n):
    """All k**n state paths as an (k**n, n) int array, lexicographic order."""
    idx = np.arange(k**n)
    return np.stack(np.unravel_index(idx, (k,) * n), axis=1)


def path_log_probs(init, q, log_b):
    """Log joint density of every hidden path with the observed sequence."""
    n, k = log_b.shape
    paths = all_paths(k, n)
    with np.errstate(divide="ignore"):
        log_init = np.log(np.asarray(init, dtype=float))
        log_q = np.log(np.asarray(q, dtype=float))
    lp = log_init[paths[:, 0]] + log_b[0, paths[:, 0]]
    for i in range(1, n):
        lp = lp + log_q[paths[:, i - 1], paths[:, i]] + log_b[i, paths[:, i]]
    return paths, lp


def brute_log_likelihood(init, q, log_b):
    _, lp = path_log_probs(init, q, log_b)
    return float(logsumexp(lp))


def brute_posteriors(init, q, log_b):
    """Exhaustive-path tau, pair_joint and log-likelihood."""
    n, k = log_b.shape
    paths, lp = path_log_probs(init, q, log_b)
    ll = logsumexp(lp)
    w = np.exp(lp - ll)
    tau = np.zeros((n, k))
    for i in range(n):
        for j in range(k):
            tau[i, j] = w[paths[:, i] == j].sum()
    pair = np.zeros((n - 1, k, k))
    for i in range(n - 1):
        for a in range(k):
            for b in range(k):
                pair[i, a, b] = w[
                    (paths[:, i] == a) & (paths[:, i + 1] == b)
                ].sum()
    return tau, pair, float(ll)


def brute_viterbi(init, q, log_b):
    """(max log joint density, argmax path under the library tie-break).

    The dynamic program breaks ties to the lowest state index during the
    backward trace, so among exactly-tied maximizing paths it returns the
    one that is smallest when read right-to-left. Ties do occur: two paths
    visiting the same states in a different order multiply the same factor
    multiset, which can agree bitwise.
    """
    paths, lp = path_log_probs(init, q, log_b)
    tied = paths[lp == lp.max()]
    # lexsort keys: last row is primary, so column order = right-to-left
    best = tied[np.lexsort(tied.T)[0]]
    return float(lp.max()), best


def brute_pseudo_log_likelihood(init, q, log_b):
    """Triplet-window pseudo log-likelihood by direct k^3 summation."""
    n, k = log_b.shape
    b = np.exp(log_b)
    init = np.asarray(init, dtype=float)
    q = np.asarray(q, dtype=float)
    total = 0.0
    for i in range(n - 2):
        p3 = 0.0
        for j1 in range(k):
            for j2 in range(k):
                for j3 in range(k):
                    p3 += (
                        init[j1] * b[i, j1]
                        * q[j1, j2] * b[i + 1, j2]
                        * q[j2, j3] * b[i + 2, j3]
                    )
        total += np.log(p3)
    return float(total)


def pairwise_rand_index(a, b):
    """Rand index by explicit agreement count over all observation pairs."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = len(a)
    agree = 0
    for i in range(n):
        for j in range(i + 1, n):
            same_a = a[i] == a[j]
            same_b = b[i] == b[j]
            if same_a == same_b:
                agree += 1
    return agree / (n * (n - 1) / 2)


def random_model(rng, k, dirichlet=5.0):
    """Random TransitionModel ingredients: (init, q), strictly positive."""
    init = rng.dirichlet(np.full(k, dirichlet))
    q = rng.dirichlet(np.full(k, dirichlet), size=k)
    return init, q


def random_log_b(rng, n, k, scale=1.0):
    """A plausible random log-density matrix (entries in [-scale-1, -1))."""
    return -1.0 - scale * rng.random((n, k))
