"""Emission distributions that are finite mixtures over a shared dictionary.

Each hidden state ``j`` emits from the mixture ``Σ_ℓ ψ_{jℓ} φ_ℓ`` where the
component dictionary ``φ_1 … φ_m`` is common to all states and only the
proportion matrix ``ψ`` (shape k×m, row-stochastic) is state specific.

EM treats the component index ``Z_i`` as a second hidden variable, so the
E-step is an exact forward–backward pass on the joint chain over pairs
``(X_i, Z_i)`` with ``k·m`` states, transition
``(j,ℓ) → (j',ℓ') = Q[j,j'] ψ[j',ℓ']`` and emission ``φ_ℓ``.

Components are either free exponential families updated from weighted
sufficient statistics (Poisson, Gaussian, Binomial with fixed trial count)
or fixed shapes (point mass at zero, discrete triangular), which EM leaves
untouched.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binom, norm, poisson

from ..core import LOG_FLOOR, PosteriorSet, TransitionModel, forward_backward
from ..errors import (
    DegenerateVarianceWarning,
    DimensionMismatchError,
    EmptyStateError,
    InputError,
    RankDeficientError,
    ZeroWeightError,
)

_WEIGHT_EPS = 1e-12
VAR_FLOOR = 1e-8


# ------------------------------------------------------------- components

@dataclass
class PoissonComponent:
    rate: float
    free = True
    family = "poisson"

    def __post_init__(self):
        if self.rate <= 0:
            raise InputError("Poisson rate must be > 0")

    def log_density(self, values):
        return poisson.logpmf(np.asarray(values), self.rate)


@dataclass
class GaussianComponent:
    """Gaussian with scalar variance; mean may be a d-vector (isotropic)."""

    mean: np.ndarray
    var: float
    free = True
    family = "gaussian"

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.var = float(self.var)
        if self.var <= 0:
            raise InputError("Gaussian variance must be > 0")

    @property
    def d(self):
        return self.mean.shape[0]

    def log_density(self, values):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            if self.d != 1:
                raise DimensionMismatchError("scalar data, vector mean")
            return norm.logpdf(v, self.mean[0], np.sqrt(self.var))
        if v.shape[1] != self.d:
            raise DimensionMismatchError("observation dimension mismatch")
        sq = np.sum((v - self.mean) ** 2, axis=1)
        return -0.5 * (self.d * np.log(2 * np.pi * self.var) + sq / self.var)


@dataclass
class BinomialComponent:
    trials: int
    p: float
    free = True
    family = "binomial"

    def __post_init__(self):
        self.trials = int(self.trials)
        self.p = float(self.p)
        if self.trials < 1:
            raise InputError("trial count must be >= 1")
        if not 0 < self.p < 1:
            raise InputError("binomial p must lie in (0, 1)")

    def log_density(self, values):
        return binom.logpmf(np.asarray(values), self.trials, self.p)


@dataclass
class DiracAtZero:
    """Point mass at 0 (all-zero vector for multivariate data)."""

    free = False
    family = "dirac0"

    def log_density(self, values):
        v = np.asarray(values)
        zero = (v == 0) if v.ndim == 1 else np.all(v == 0, axis=1)
        return np.where(zero, 0.0, -np.inf)


@dataclass
class TriangularComponent:
    """Decreasing triangular pmf on {0, …, size-1}."""

    size: int
    free = False
    family = "triangular"

    def __post_init__(self):
        self.size = int(self.size)
        if self.size < 1:
            raise InputError("triangular size must be >= 1")

    def probs(self):
        ell = self.size
        y = np.arange(ell)
        return 2.0 * (ell - y) / (ell * (ell + 1))

    def log_density(self, values):
        v = np.asarray(values)
        ok = (v >= 0) & (v < self.size)
        out = np.full(v.shape, -np.inf)
        out[ok] = np.log(2.0 * (self.size - v[ok]) / (self.size * (self.size + 1)))
        return out


def triangular_component(size):
    """Probability vector of the decreasing triangular law on {0,…,size-1}."""
    return TriangularComponent(size).probs()


# ------------------------------------------------------------ the mixture

@dataclass
class MixtureEmission:
    """State-specific mixtures ``f_j = Σ_ℓ psi[j,ℓ] φ_ℓ`` over a shared dictionary.

    ``psi`` is k×m and row-stochastic with m >= k; ``components`` is the
    length-m dictionary. ``psi_mask``, when set, marks the entries that are
    structurally zero (e.g. the zero-inflated construction) so fitting can
    keep them pinned.
    """

    psi: np.ndarray
    components: list
    psi_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        if self.psi.ndim != 2:
            raise DimensionMismatchError("psi must be a k x m matrix")
        k, m = self.psi.shape
        if len(self.components) != m:
            raise DimensionMismatchError(
                f"psi has {m} columns but {len(self.components)} components given"
            )
        if m < k:
            raise InputError("need at least as many components as states")
        if np.any(self.psi < 0) or np.any(self.psi > 1):
            raise InputError("psi entries must lie in [0, 1]")
        if np.any(np.abs(self.psi.sum(axis=1) - 1.0) > 1e-10):
            raise InputError("each psi row must sum to 1 within 1e-10")
        if self.psi_mask is not None:
            self.psi_mask = np.asarray(self.psi_mask, dtype=bool)
            if self.psi_mask.shape != (k, m):
                raise DimensionMismatchError("psi_mask shape mismatch")
        # identifiability of binomial sub-dictionaries with a shared trial
        # count requires trials >= 2 * (group size) - 1
        trial_groups = {}
        for comp in self.components:
            if getattr(comp, "family", None) == "binomial":
                trial_groups[comp.trials] = trial_groups.get(comp.trials, 0) + 1
        for trials, count in trial_groups.items():
            if trials < 2 * count - 1:
                raise RankDeficientError(
                    f"{count} binomial components share trial count {trials}; "
                    f"need trials >= {2 * count - 1} for linear independence"
                )

    @property
    def k(self):
        return self.psi.shape[0]

    @property
    def m(self):
        return self.psi.shape[1]

    def component_log_densities(self, values):
        """(n, m) matrix of log φ_ℓ(Y_i), unfloored (may hold -inf)."""
        cols = [comp.log_density(values) for comp in self.components]
        return np.stack(cols, axis=1)

    def log_densities(self, values):
        """(n, k) per-state marginal log densities, floored at log(1e-300)."""
        log_phi = self.component_log_densities(values)
        with np.errstate(divide="ignore"):
            log_psi = np.log(self.psi)
        out = logsumexp(log_phi[:, None, :] + log_psi[None, :, :], axis=2)
        out[out == -np.inf] = LOG_FLOOR
        return out


@dataclass
class ExtendedPosteriorSet:
    """Posterior over the component index alongside the state index.

    ``xi[i, ℓ] = P(Z_i = ℓ | Y)`` (rows sum to 1 within 1e-10);
    ``joint_xz[i, j, ℓ] = P(X_i = j, Z_i = ℓ | Y)``; marginalising
    ``joint_xz`` over ℓ gives tau and over j gives xi, within 1e-8.
    """

    xi: np.ndarray
    joint_xz: np.ndarray


def e_step_extended(trans, mix, values):
    """Exact E-step on the joint (state, component) chain.

    Returns ``(ExtendedPosteriorSet, PosteriorSet)`` where the second element
    is the ordinary smoothing output for the states alone (its pair_joint is
    the posterior of consecutive state pairs, marginalised over components).
    """
    k, m = mix.k, mix.m
    if trans.k != k:
        raise DimensionMismatchError("transition model and mixture disagree on k")
    init_joint = (trans.init[:, None] * mix.psi).ravel()
    # row for joint state (j, ℓ) depends on j only: repeat each state row m times
    q_rows = np.einsum("ab,bl->abl", trans.q, mix.psi).reshape(k, k * m)
    q_joint = np.repeat(q_rows, m, axis=0)
    log_phi = mix.component_log_densities(values)
    log_phi = np.where(log_phi == -np.inf, LOG_FLOOR, log_phi)
    log_b_joint = np.tile(log_phi, (1, k))
    joint_trans = TransitionModel(init=init_joint, q=q_joint)
    post = forward_backward(joint_trans, log_b_joint)
    n = log_phi.shape[0]
    joint_xz = post.tau.reshape(n, k, m)
    tau = joint_xz.sum(axis=2)
    xi = joint_xz.sum(axis=1)
    pair_x = (
        post.pair_joint.reshape(n - 1, k, m, k, m).sum(axis=(2, 4))
    )
    ext = ExtendedPosteriorSet(xi=xi, joint_xz=joint_xz)
    return ext, PosteriorSet(tau=tau, pair_joint=pair_x, log_lik=post.log_lik)


# ----------------------------------------------------------------- M-steps

def m_step_psi(joint_xz, tau, psi_mask=None):
    """Proportion update ``ψ[j,ℓ] = Σ_i joint_xz[i,j,ℓ] / Σ_i tau[i,j]``.

    Entries flagged by ``psi_mask`` are structural zeros; they are pinned at
    0 and the row renormalised (the numerator there is zero anyway whenever
    the current psi already respects the mask, so this guards only float
    noise).
    """
    denom = tau.sum(axis=0)
    if np.any(denom <= _WEIGHT_EPS):
        raise EmptyStateError(
            f"state(s) {np.nonzero(denom <= _WEIGHT_EPS)[0]} lost all "
            "posterior weight"
        )
    psi = joint_xz.sum(axis=0) / denom[:, None]
    if psi_mask is not None:
        psi[psi_mask] = 0.0
        psi /= psi.sum(axis=1, keepdims=True)
    return psi


def m_step_expfam(family, t, n, trials=None):
    """Exponential-family parameter update from weighted sufficient statistics.

    Parameters
    ----------
    family : {"poisson", "gaussian", "binomial"}
    t : float or pair
        ``Σ_i ξ_i t(Y_i)``. Poisson/binomial: scalar ``Σ ξ y``. Gaussian:
        pair ``(Σ ξ y, Σ ξ y²)`` (vector first element for d-variate data,
        scalar second obtained from squared norms).
    n : float
        Total component weight ``Σ_i ξ_i``.
    trials : int, required for binomial
        The fixed trial count.

    Returns the updated parameter(s): rate; (mean, var); or p. A Gaussian
    variance below 1e-8 is floored and reported via
    ``DegenerateVarianceWarning``.
    """
    if n <= _WEIGHT_EPS:
        raise ZeroWeightError("component received (almost) no weight")
    if family == "poisson":
        return float(t) / n
    if family == "gaussian":
        t1, t2 = t
        mean = np.atleast_1d(np.asarray(t1, dtype=float)) / n
        d = mean.shape[0]
        var = (float(t2) / n - float(mean @ mean)) / d
        if var < VAR_FLOOR:
            warnings.warn(
                f"Gaussian variance {var:.3e} hit the {VAR_FLOOR:g} floor",
                DegenerateVarianceWarning,
                stacklevel=2,
            )
            var = VAR_FLOOR
        return (mean if d > 1 else float(mean[0])), var
    if family == "binomial":
        if trials is None:
            raise InputError("binomial update needs the trial count")
        p = float(t) / (trials * n)
        return float(np.clip(p, 1e-8, 1 - 1e-8))
    raise InputError(f"unknown exponential family {family!r}")


def update_components(components, xi, values):
    """One M-step over the free components of the dictionary.

    Fixed components (point mass, triangular) pass through unchanged; the
    exponential families are refit from their weighted sufficient
    statistics. Returns a new component list.
    """
    values = np.asarray(values)
    out = []
    for ell, comp in enumerate(components):
        w = xi[:, ell]
        if not comp.free:
            out.append(comp)
            continue
        n_ell = float(w.sum())
        if comp.family == "poisson":
            rate = m_step_expfam("poisson", float(w @ values), n_ell)
            out.append(PoissonComponent(rate=max(rate, 1e-12)))
        elif comp.family == "gaussian":
            if values.ndim == 1:
                t1 = float(w @ values)
                t2 = float(w @ (np.asarray(values, dtype=float) ** 2))
            else:
                t1 = w @ values
                t2 = float(w @ np.sum(values.astype(float) ** 2, axis=1))
            mean, var = m_step_expfam("gaussian", (t1, t2), n_ell)
            out.append(GaussianComponent(mean=mean, var=var))
        elif comp.family == "binomial":
            p = m_step_expfam(
                "binomial", float(w @ values), n_ell, trials=comp.trials
            )
            out.append(BinomialComponent(trials=comp.trials, p=p))
        else:
            raise InputError(f"no update rule for family {comp.family!r}")
    return out


# ------------------------------------------------------------ constructions

def make_zero_inflated(q, base_components):
    """Zero-inflated mixture: state j emits 0 with probability q[j].

    Builds the (k+1)-component dictionary ``base_components + [DiracAtZero]``
    with ``psi = [diag(1-q) | q]``; the zero pattern is recorded in
    ``psi_mask`` so fitting leaves it pinned (only q is effectively free).
    At most one q[j] may equal 1, otherwise psi drops rank.
    """
    q = np.asarray(q, dtype=float)
    k = q.shape[0]
    if len(base_components) != k:
        raise DimensionMismatchError("need one base component per state")
    if np.any(q < 0) or np.any(q > 1):
        raise InputError("inflation probabilities must lie in [0, 1]")
    if np.sum(q == 1.0) > 1:
        raise RankDeficientError(
            "more than one state fully inflated: psi would have identical rows"
        )
    psi = np.zeros((k, k + 1))
    psi[np.arange(k), np.arange(k)] = 1 - q
    psi[:, k] = q
    mask = np.ones((k, k + 1), dtype=bool)
    mask[np.arange(k), np.arange(k)] = False
    mask[:, k] = False
    return MixtureEmission(
        psi=psi,
        components=list(base_components) + [DiracAtZero()],
        psi_mask=mask,
    )


def check_psi_rank(psi, tol=1e-8):
    """(full_rank, sigma_k): is the k-th singular value of psi above tol?"""
    psi = np.asarray(psi, dtype=float)
    s = np.linalg.svd(psi, compute_uv=False)
    sigma_k = float(s[psi.shape[0] - 1])
    return sigma_k > tol, sigma_k
