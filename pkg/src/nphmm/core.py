"""Hidden-chain primitives: smoothing, likelihoods and decoding.

All routines work on a ``TransitionModel`` plus a matrix of per-observation
log emission densities ``log_b`` of shape ``(n, k)``; the emission families
live elsewhere and only ever reach this module through that matrix. The
recursions themselves run entirely in log space, so no adaptive rescaling is
needed and sequences of a million steps are routine.

Zero densities are the caller's problem only up to exactness: use
``apply_log_floor`` to replace exact ``-inf`` entries by ``LOG_FLOOR``
(log 1e-300) before handing a matrix over. Merely small densities are left
untouched.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _recursions
from .errors import (
    DimensionMismatchError,
    InputError,
    NonUniqueStationaryError,
    SequenceTooShortError,
)

#: Log-density floor substituted for exact zeros: log(1e-300).
LOG_FLOOR = float(np.log(1e-300))

_ROW_SUM_ATOL = 1e-12        # stochasticity check on construction
_STATIONARY_TOL = 1e-10      # singular-value threshold for uniqueness


def _check_stochastic(vec, what):
    if np.any(vec < 0) or np.any(~np.isfinite(vec)):
        raise InputError(f"{what} must be finite and non-negative")
    s = vec.sum(axis=-1)
    if np.any(np.abs(s - 1.0) > _ROW_SUM_ATOL):
        raise InputError(
            f"{what} must sum to 1 within {_ROW_SUM_ATOL:g} "
            f"(got max deviation {np.max(np.abs(s - 1.0)):.3e})"
        )


@dataclass
class TransitionModel:
    """Initial distribution and transition matrix of a k-state chain.

    Parameters
    ----------
    init : ndarray, shape (k,)
        Initial state distribution.
    q : ndarray, shape (k, k)
        Row-stochastic transition matrix; ``q[a, b]`` is the probability of
        moving from state ``a`` to state ``b``.

    The derived attribute ``init_is_stationary`` records whether
    ``init @ q == init`` within 1e-10.
    """

    init: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.init = np.asarray(self.init, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.init.ndim != 1:
            raise DimensionMismatchError("init must be a vector")
        k = self.init.shape[0]
        if self.q.shape != (k, k):
            raise DimensionMismatchError(
                f"q must have shape ({k}, {k}), got {self.q.shape}"
            )
        _check_stochastic(self.init, "init")
        _check_stochastic(self.q, "each row of q")
        self.init_is_stationary = bool(
            np.max(np.abs(self.init @ self.q - self.init)) <= _STATIONARY_TOL
        )

    @property
    def k(self):
        return self.init.shape[0]

    def log_init(self):
        with np.errstate(divide="ignore"):
            return np.log(self.init)

    def log_q(self):
        with np.errstate(divide="ignore"):
            return np.log(self.q)


@dataclass
class ObservationSequence:
    """A single observed sequence of counts or of fixed-dimension vectors.

    ``values`` has shape ``(n,)`` for scalar observations or ``(n, d)`` for
    d-dimensional ones. ``kind`` is ``"count"`` (non-negative integers) or
    ``"real"``; when omitted it is inferred from the dtype.
    """

    values: np.ndarray
    kind: str = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim not in (1, 2):
            raise DimensionMismatchError(
                "values must have shape (n,) or (n, d)"
            )
        if self.values.shape[0] < 1:
            raise SequenceTooShortError(
                "sequence must contain at least one observation"
            )
        if self.kind is None:
            self.kind = (
                "count"
                if np.issubdtype(self.values.dtype, np.integer)
                else "real"
            )
        if self.kind not in ("count", "real"):
            raise InputError(f"unknown observation kind {self.kind!r}")
        if self.kind == "count":
            if self.values.ndim != 1:
                raise DimensionMismatchError("count observations must be scalar")
            if not np.issubdtype(self.values.dtype, np.integer):
                rounded = np.rint(self.values)
                if not np.all(self.values == rounded):
                    raise InputError("count observations must be integers")
                self.values = rounded.astype(np.int64)
            if np.any(self.values < 0):
                raise InputError("count observations must be non-negative")
        else:
            self.values = self.values.astype(float)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return 1 if self.values.ndim == 1 else self.values.shape[1]


@dataclass
class PosteriorSet:
    """Smoothing output of one forward–backward pass.

    Attributes
    ----------
    tau : ndarray, shape (n, k)
        Marginal posterior ``P(X_i = j | Y_{1:n})``; rows sum to 1 within
        1e-10.
    pair_joint : ndarray, shape (n-1, k, k)
        Joint posterior ``P(X_i = a, X_{i+1} = b | Y_{1:n})``; each slice
        sums to 1 within 1e-10, and marginalising a slice over either state
        index reproduces the matching row of ``tau`` within 1e-8.
    log_lik : float
        Log-likelihood of the observed sequence under the model.
    """

    tau: np.ndarray
    pair_joint: np.ndarray
    log_lik: float


def apply_log_floor(log_b):
    """Replace exact ``-inf`` entries by ``LOG_FLOOR``; leave the rest alone."""
    log_b = np.asarray(log_b, dtype=float)
    if np.any(np.isnan(log_b)) or np.any(log_b == np.inf):
        raise InputError("log-density matrix contains NaN or +inf")
    out = log_b.copy()
    out[out == -np.inf] = LOG_FLOOR
    return out


def _check_log_b(trans, log_b):
    log_b = np.asarray(log_b, dtype=float)
    if log_b.ndim != 2 or log_b.shape[1] != trans.k:
        raise DimensionMismatchError(
            f"log_b must have shape (n, {trans.k}), got {log_b.shape}"
        )
    return log_b


def stationary_distribution(q):
    """Stationary distribution of a transition matrix.

    Solves ``pi @ q = pi`` with ``sum(pi) = 1`` through the SVD nullspace of
    ``q.T - I``. If that nullspace has dimension greater than one (two or
    more singular values below 1e-10) the chain is reducible and the
    stationary law is not unique; ``NonUniqueStationaryError`` is raised
    rather than silently picking one.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise DimensionMismatchError("q must be square")
    _check_stochastic(q, "each row of q")
    k = q.shape[0]
    m = q.T - np.eye(k)
    _, s, vh = np.linalg.svd(m)
    small = s < _STATIONARY_TOL
    if small.sum() >= 2:
        raise NonUniqueStationaryError(
            "transition matrix is reducible: stationary distribution "
            "is not unique"
        )
    v = vh[-1]
    v = v / v.sum()
    # Perron vector is non-negative up to float noise; clip and renormalise.
    v = np.clip(v, 0.0, None)
    return v / v.sum()


def log_likelihood(trans, log_b):
    """Log-likelihood of the sequence behind ``log_b`` under ``trans``."""
    log_b = _check_log_b(trans, log_b)
    _, ll = _recursions.forward(trans.log_init(), trans.log_q(), log_b)
    return float(ll)


def forward_backward(trans, log_b):
    """Full smoothing pass; returns a :class:`PosteriorSet`."""
    log_b = _check_log_b(trans, log_b)
    log_alpha, ll = _recursions.forward(trans.log_init(), trans.log_q(), log_b)
    log_beta = _recursions.backward(trans.log_q(), log_b)
    tau = np.exp(log_alpha + log_beta - ll)
    lq = trans.log_q()
    pair = np.exp(
        log_alpha[:-1, :, None]
        + lq[None, :, :]
        + (log_b + log_beta)[1:, None, :]
        - ll
    )
    return PosteriorSet(tau=tau, pair_joint=pair, log_lik=float(ll))


def pseudo_log_likelihood(trans, log_b):
    """Sum of log marginal densities of consecutive observation triplets.

    Each window ``(Y_i, Y_{i+1}, Y_{i+2})`` for ``i = 1 .. n-2`` contributes
    the log of its three-dimensional marginal under the model, with the
    chain started from ``trans.init`` for every window. Requires ``n >= 3``.
    """
    log_b = _check_log_b(trans, log_b)
    n = log_b.shape[0]
    if n < 3:
        raise SequenceTooShortError(
            "pseudo log-likelihood needs at least 3 observations"
        )
    lq = trans.log_q()
    li = trans.log_init()
    # a[i, j2] = logsum_{j1} init[j1] b[i, j1] q[j1, j2]
    a = logsumexp(
        li[None, :, None] + log_b[: n - 2, :, None] + lq[None, :, :], axis=1
    )
    # b3[i, j3] = logsum_{j2} a[i, j2] b[i+1, j2] q[j2, j3]
    b3 = logsumexp(
        (a + log_b[1 : n - 1])[:, :, None] + lq[None, :, :], axis=1
    )
    return float(np.sum(logsumexp(b3 + log_b[2:n], axis=1)))


def viterbi(trans, log_b):
    """Most probable state path (0-based); ties break to the lowest index."""
    log_b = _check_log_b(trans, log_b)
    return _recursions.viterbi_path(trans.log_init(), trans.log_q(), log_b)


def map_decode(posterior):
    """Pointwise most probable states; ties break to the lowest index."""
    return np.argmax(posterior.tau, axis=1)
