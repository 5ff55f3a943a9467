"""Discrete emission distributions on {0, …, y_max}.

Two estimators for the per-state emission row given weighted counts
``S(y) = Σ_{i: Y_i = y} τ_i``:

* ``m_step_np`` — the unpenalized maximizer ``S(y) / Σ S``;
* ``m_step_regularized`` — the maximizer under a tail penalty
  ``λ · Σ_y m(y) f(y)`` with ``m(y) = y**alpha``, which has the closed form
  ``f(y) = S(y) / (λ m(y) + c)`` with ``c`` pinned down by normalisation and
  found by bisection.

A weighted-likelihood negative binomial fit (``m_step_negbin``) is included
as the parametric baseline the nonparametric family is compared against.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import psi
from scipy.stats import nbinom

from ..core import LOG_FLOOR
from ..errors import (
    DimensionMismatchError,
    InputError,
    UnderdispersedError,
    ZeroWeightError,
)

_WEIGHT_EPS = 1e-12


@dataclass
class PenaltySpec:
    """Tail penalty ``λ · Σ_y m(y) f(y)`` with weight ``m(y) = y**alpha``."""

    lam: float = 1.0
    alpha: float = 2.0

    def __post_init__(self):
        self.lam = float(self.lam)
        self.alpha = float(self.alpha)
        if self.lam < 0:
            raise InputError("penalty strength lam must be >= 0")
        if self.alpha <= 0:
            raise InputError("penalty exponent alpha must be > 0")

    def weight(self, y):
        """m(y) = y**alpha, elementwise; m(0) = 0."""
        return np.asarray(y, dtype=float) ** self.alpha


@dataclass
class DiscreteEmissionTable:
    """Per-state emission probabilities on the support {0, …, y_max}.

    ``probs`` has shape (k, y_max + 1); each row is a probability vector
    (sum within 1e-10).
    """

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 2:
            raise DimensionMismatchError("probs must be a (k, y_max+1) matrix")
        if np.any(self.probs < 0) or np.any(self.probs > 1):
            raise InputError("emission probabilities must lie in [0, 1]")
        rowsum = self.probs.sum(axis=1)
        if np.any(np.abs(rowsum - 1.0) > 1e-10):
            raise InputError("each emission row must sum to 1 within 1e-10")

    @property
    def k(self):
        return self.probs.shape[0]

    @property
    def y_max(self):
        return self.probs.shape[1] - 1

    def log_densities(self, values):
        """(n, k) log emission matrix, floored at log(1e-300).

        Values outside the table's support have probability 0 and therefore
        come out at the floor.
        """
        v = np.asarray(values)
        n = v.shape[0]
        dens = np.zeros((n, self.k))
        ok = (v >= 0) & (v <= self.y_max)
        dens[ok] = self.probs[:, v[ok].astype(np.int64)].T
        with np.errstate(divide="ignore"):
            out = np.log(dens)
        out[out == -np.inf] = LOG_FLOOR
        return out


@dataclass
class NegBinEmission:
    """Per-state negative binomial emissions.

    Uses the convention ``pmf(y) = C(y+r-1, y) p^r (1-p)^y`` with mean
    ``r (1-p) / p``; ``r`` and ``p`` are length-k vectors.
    """

    r: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.r = np.atleast_1d(np.asarray(self.r, dtype=float))
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if self.r.shape != self.p.shape or self.r.ndim != 1:
            raise DimensionMismatchError("r and p must be vectors of equal length")
        if np.any(self.r <= 0):
            raise InputError("dispersion r must be > 0")
        if np.any(self.p <= 0) or np.any(self.p >= 1):
            raise InputError("success probability p must lie in (0, 1)")

    @property
    def k(self):
        return self.r.shape[0]

    def mean(self):
        return self.r * (1 - self.p) / self.p

    def log_densities(self, values):
        """(n, k) log emission matrix, floored at log(1e-300)."""
        v = np.asarray(values)[:, None]
        out = nbinom.logpmf(v, self.r[None, :], self.p[None, :])
        out = np.where(np.isfinite(out), out, LOG_FLOOR)
        return np.maximum(out, LOG_FLOOR)


def m_step_np(s, n=None):
    """Unpenalized emission update: ``f(y) = S(y) / N``.

    Parameters
    ----------
    s : ndarray
        Weighted counts per support value, all >= 0.
    n : float, optional
        Total weight; defaults to ``s.sum()`` (they coincide in EM).
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise InputError("weighted counts must be non-negative")
    if n is None:
        n = s.sum()
    if n <= _WEIGHT_EPS:
        raise ZeroWeightError("state received (almost) no posterior weight")
    return s / n


def m_step_regularized(s, penalty):
    """Penalized emission update ``f(y) = S(y) / (λ m(y) + c)``.

    ``c`` is the unique root of ``g(c) = Σ_y S(y) / (λ m(y) + c) = 1``,
    found by bisection to absolute precision 1e-12. ``g`` is strictly
    decreasing and ``g(Σ S) <= 1``, so the root never exceeds ``Σ S``; when
    every support point carrying weight has ``m(y) > 0`` the root can drop
    to (or below) zero, so the lower end of the bracket is pushed toward
    ``-λ · min{m(y) : S(y) > 0}``, where ``g`` diverges.

    Masses below 1e-16 of the total are treated as zero: they are smoothing
    underflow, not evidence, and keeping them would let a penalty-free
    support point (m(y) = 0) pin the root at the scale of the artifact.

    With ``λ = 0`` this reduces exactly to :func:`m_step_np`.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise InputError("weighted counts must be non-negative")
    total = s.sum()
    if total <= _WEIGHT_EPS:
        raise ZeroWeightError("state received (almost) no posterior weight")
    if penalty.lam == 0.0:
        return m_step_np(s, total)

    s = np.where(s >= 1e-16 * total, s, 0.0)
    total = s.sum()
    pos = s > 0
    m = penalty.weight(np.arange(s.shape[0]))
    lam_m_pos = penalty.lam * m[pos]
    s_pos = s[pos]

    def g(c):
        return float(np.sum(s_pos / (lam_m_pos + c)))

    floor_c = -lam_m_pos.min()  # g diverges as c approaches this from above
    hi = total
    delta = 1e-12 * total
    lo = floor_c + delta
    while g(lo) < 1.0:
        delta *= 0.125
        lo = floor_c + delta
    # bisect until the bracket is tight AND the row sum is tight; the latter
    # matters when g is steep near the root
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if g(mid) >= 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 and abs(g(0.5 * (lo + hi)) - 1.0) <= 5e-11:
            break
    c = 0.5 * (lo + hi)
    f = np.zeros_like(s)
    f[pos] = s_pos / (lam_m_pos + c)
    # at the exact root the row sums to 1; dividing out the residual
    # bisection slop (<= 5e-11) keeps near-point-mass rows inside [0, 1]
    return f / f.sum()


def penalty_value(f, penalty):
    """Penalty functional ``I(f) = Σ_y m(y) f(y)`` of one emission row."""
    f = np.asarray(f, dtype=float)
    return float(penalty.weight(np.arange(f.shape[0])) @ f)


def _negbin_profile_score(r, y, w, total, mean):
    """d/dr of the weighted log-likelihood with p profiled out."""
    return float(np.sum(w * (psi(y + r) - psi(r))) + total * np.log(r / (r + mean)))


def negbin_profile_loglik(r, y, w):
    """Weighted log-likelihood at (r, p̂(r)); used for verification."""
    total = w.sum()
    mean = float(w @ y) / total
    p = r / (r + mean)
    return float(np.sum(w * nbinom.logpmf(y, r, p)))


def m_step_negbin(y, w, r_min=1e-4, r_max=1e6):
    """Weighted maximum-likelihood negative binomial fit.

    Given observations ``y`` with non-negative weights ``w``, the success
    probability has the closed form ``p = r / (r + weighted mean)``; the
    dispersion ``r`` solves the profile score equation, located by expanding
    a bracket around the method-of-moments start ``mean² / (var - mean)``
    and root-finding inside (r_min, r_max). If the score never changes sign
    inside the allowed range, the boundary value is returned.

    Raises
    ------
    UnderdispersedError
        If the weighted variance is <= the weighted mean, where the family
        degenerates; the error's ``fallback`` attribute carries the
        near-Poisson parameters ``(r_max, r_max / (r_max + mean))`` so the
        caller can cap and continue.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.shape != w.shape:
        raise DimensionMismatchError("observations and weights must align")
    if np.any(w < 0):
        raise InputError("weights must be non-negative")
    total = w.sum()
    if total <= _WEIGHT_EPS:
        raise ZeroWeightError("no weight assigned to this state")
    mean = float(w @ y) / total
    var = float(w @ (y - mean) ** 2) / total
    if var <= mean:
        p_fb = min(r_max / (r_max + mean), 1.0 - 1e-12)
        raise UnderdispersedError(
            "weighted variance <= weighted mean: negative binomial "
            "degenerates toward Poisson",
            fallback=(r_max, p_fb),
        )

    r0 = min(max(mean**2 / (var - mean), r_min * 2), r_max / 2)
    lo, hi = r0 / 2, r0 * 2
    while _negbin_profile_score(lo, y, w, total, mean) <= 0:
        lo /= 4
        if lo < r_min:
            lo = r_min
            break
    while _negbin_profile_score(hi, y, w, total, mean) >= 0:
        hi *= 4
        if hi > r_max:
            hi = r_max
            break
    s_lo = _negbin_profile_score(lo, y, w, total, mean)
    s_hi = _negbin_profile_score(hi, y, w, total, mean)
    if s_lo <= 0:
        r = lo
    elif s_hi >= 0:
        r = hi
    else:
        r = brentq(
            _negbin_profile_score, lo, hi, args=(y, w, total, mean),
            xtol=1e-10, rtol=1e-12,
        )
    return float(r), float(r / (r + mean))
