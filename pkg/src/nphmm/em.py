"""Generic EM loop: initialization, ascent, restarts, label alignment.

The loop is the classical one — smooth, update the chain, update the
emissions — with the emission update dispatched by family:

* ``np`` / ``np-reg``: nonparametric discrete table, free or penalized;
  with a penalty the monitored objective is the penalized log-likelihood
  ``ℓ - λ Σ_j I(f_j)`` (ascent is only guaranteed for that quantity).
* ``nb``: per-state weighted negative binomial maximum likelihood.
* ``mixture``: shared component dictionary; the E-step runs on the joint
  (state, component) chain, see :mod:`nphmm.emissions.mixture`.
* ``kernel``: anchor-weight updates inside a Generalized EM; the bandwidth
  is chosen once (cross-validation by default) before any EM iteration.

Runs that starve a state abort and count as failed starts; the restart loop
absorbs failures and keeps the best surviving run. Everything is
deterministic given ``FitOptions.seed``.
"""

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    ObservationSequence,
    TransitionModel,
    forward_backward,
)
from .emissions.discrete import (
    DiscreteEmissionTable,
    NegBinEmission,
    PenaltySpec,
    m_step_negbin,
    m_step_np,
    m_step_regularized,
    penalty_value,
)
from .emissions.kernel import (
    KernelEmission,
    bandwidth_cv,
    gem_emission_m_step,
    kernel_matrix,
)
from .emissions.mixture import (
    BinomialComponent,
    GaussianComponent,
    MixtureEmission,
    PoissonComponent,
    TriangularComponent,
    e_step_extended,
    m_step_psi,
    make_zero_inflated,
    update_components,
)
from .errors import (
    DegenerateDataError,
    DegenerateDenominatorError,
    EmptyStateError,
    FitFailedError,
    IncompatibleFamilyError,
    InputError,
    KTooLargeError,
    SequenceTooShortError,
    UnderdispersedError,
    ZeroWeightError,
)
from .model import HMMModel, emission_tv_matrix

_WEIGHT_EPS = 1e-12

FAMILIES = ("np", "np-reg", "nb", "mixture", "kernel")
COMPONENT_FAMILIES = (
    "poisson", "gaussian", "binomial", "triangular", "zero-inflated",
)
_RECOVERABLE = (EmptyStateError, ZeroWeightError, DegenerateDenominatorError)

# uniform share mixed into band-empirical starting tables / anchor weights
_INIT_BLEND = 0.05


@dataclass
class FitOptions:
    """Knobs for :func:`fit`.

    ``family`` picks the emission family; the family-specific fields are
    ignored by the others. ``penalty`` drives the ``np-reg`` family (``np``
    is the λ=0 special case). Mixtures read ``component_family``,
    ``n_components`` (default: one per state) and, for binomial components,
    ``trials``. Kernel fits read ``kernel_id``, ``bandwidth`` (None means
    leave-one-out cross-validation on the data), ``bandwidth_grid`` and
    ``inner_iters``.
    """

    max_iter: int = 500
    tol: float = 1e-6
    n_starts: int = 5
    seed: int = 0
    family: str = "np"
    penalty: PenaltySpec = None
    y_max: int = None
    component_family: str = "poisson"
    n_components: int = None
    trials: int = 10
    kernel_id: str = "gaussian-spherical"
    bandwidth: float = None
    bandwidth_grid: np.ndarray = None
    inner_iters: int = 5

    def __post_init__(self):
        if self.max_iter < 1:
            raise InputError("max_iter must be >= 1")
        if self.tol <= 0:
            raise InputError("tol must be > 0")
        if self.n_starts < 1:
            raise InputError("n_starts must be >= 1")
        if self.family not in FAMILIES:
            raise InputError(
                f"unknown family {self.family!r}; pick from {FAMILIES}"
            )
        if self.component_family not in COMPONENT_FAMILIES:
            raise InputError(
                f"unknown component family {self.component_family!r}"
            )
        if self.penalty is None:
            self.penalty = (
                PenaltySpec() if self.family == "np-reg"
                else PenaltySpec(lam=0.0)
            )


@dataclass
class FitReport:
    """Outcome of the best run over restarts.

    ``objective_trace`` holds the monitored objective at every visited
    iterate (length ``iterations + 1``) and is non-decreasing up to 1e-8;
    ``log_lik`` is the final plain log-likelihood (equal to the last trace
    entry unless a penalty is active).
    """

    model: HMMModel
    objective_trace: np.ndarray
    converged: bool
    iterations: int
    best_start_index: int
    log_lik: float
    failed_starts: list = field(default_factory=list)


# ------------------------------------------------------------------ helpers

def _as_sequence(obs):
    return obs if isinstance(obs, ObservationSequence) else ObservationSequence(obs)


def _count_family(opts):
    if opts.family in ("np", "np-reg", "nb"):
        return True
    if opts.family == "mixture":
        return opts.component_family != "gaussian"
    return False


def _check_compat(seq, k, opts):
    if seq.n < 3:
        raise SequenceTooShortError("fitting needs at least 3 observations")
    if k < 1:
        raise InputError("k must be >= 1")
    if _count_family(opts):
        if seq.kind != "count":
            raise IncompatibleFamilyError(
                f"family {opts.family!r} needs count data, got real-valued"
            )
    elif seq.kind != "real":
        raise IncompatibleFamilyError(
            f"family {opts.family!r} needs real-valued data, got counts"
        )
    if opts.family in ("np", "np-reg", "nb"):
        if np.unique(seq.values).size < k:
            raise DegenerateDataError(
                f"only {np.unique(seq.values).size} distinct values "
                f"observed; cannot separate k={k} states"
            )


def _weighted_counts(values, tau, y_max):
    """S[j, y] = Σ_i tau[i, j] · 1{Y_i = y} for y in {0, …, y_max}."""
    k = tau.shape[1]
    s = np.empty((k, y_max + 1))
    for j in range(k):
        s[j] = np.bincount(values, weights=tau[:, j], minlength=y_max + 1)
    return s


def _quantile_bands(values, k):
    """Indices of the k contiguous bands of the sorted observations."""
    order = (
        np.argsort(values, kind="stable")
        if values.ndim == 1
        else np.argsort(values[:, 0], kind="stable")
    )
    n = len(order)
    edges = [(j * n) // k for j in range(k + 1)]
    return [order[edges[j]: edges[j + 1]] for j in range(k)]


def _component_support_sizes(y_max, m):
    """m distinct triangular sizes spread over {1, …, y_max+1}."""
    sizes = np.unique(np.round(np.linspace(1, y_max + 1, m)).astype(int))
    while sizes.size < m:  # pad with the next larger sizes
        sizes = np.unique(np.append(sizes, sizes.max() + 1))
    return sizes[:m]


# -------------------------------------------------------------- initializers

def _init_emission(seq, k, opts, rng=None):
    values = seq.values
    bands = _quantile_bands(values, k)

    if opts.family in ("np", "np-reg"):
        y_max = int(values.max()) if opts.y_max is None else int(opts.y_max)
        probs = np.empty((k, y_max + 1))
        for j, band in enumerate(bands):
            probs[j] = np.bincount(values[band], minlength=y_max + 1)
            probs[j] /= probs[j].sum()
        # Blend in a uniform floor: a zero in the table is absorbing for
        # the multiplicative EM updates (a state can never claim a value
        # its band missed), which traps every restart in the same basin.
        probs = (1.0 - _INIT_BLEND) * probs + _INIT_BLEND / (y_max + 1)
        return DiscreteEmissionTable(probs)

    if opts.family == "nb":
        r = np.empty(k)
        p = np.empty(k)
        for j, band in enumerate(bands):
            try:
                r[j], p[j] = m_step_negbin(
                    values[band].astype(float), np.ones(band.size)
                )
            except UnderdispersedError as exc:
                r[j], p[j] = exc.fallback
        return NegBinEmission(r=r, p=p)

    if opts.family == "kernel":
        weights = np.zeros((seq.n, k))
        for j, band in enumerate(bands):
            weights[band, j] = 1.0 / band.size
        # same absorbing-zero argument as for the discrete table: an anchor
        # with zero weight in a state can never earn any back
        weights = (1.0 - _INIT_BLEND) * weights + _INIT_BLEND / seq.n
        return KernelEmission(
            anchors=values,
            bandwidth=opts.bandwidth,
            weights=weights,
            kernel_id=opts.kernel_id,
        )

    # mixtures
    if opts.component_family == "zero-inflated":
        q = np.array([
            min(float(np.mean(values[band] == 0)), 0.95) for band in bands
        ])
        base = []
        for band in bands:
            nz = values[band][values[band] > 0]
            rate = float(nz.mean()) if nz.size else 1.0
            base.append(PoissonComponent(max(rate, 1e-3)))
        return make_zero_inflated(q, base)

    m = opts.n_components if opts.n_components is not None else k
    if m < k:
        raise InputError("need at least as many components as states")
    comp_bands = _quantile_bands(values, m)
    comps = []
    if opts.component_family == "poisson":
        for band in comp_bands:
            comps.append(
                PoissonComponent(max(float(values[band].mean()), 1e-3))
            )
    elif opts.component_family == "gaussian":
        overall_var = float(np.var(values))
        for band in comp_bands:
            sub = values[band]
            mean = sub.mean(axis=0)
            var = float(np.mean(np.var(sub, axis=0)))
            comps.append(
                GaussianComponent(mean, max(var, overall_var * 1e-3, 1e-6))
            )
    elif opts.component_family == "binomial":
        for band in comp_bands:
            p0 = float(values[band].mean()) / opts.trials
            comps.append(
                BinomialComponent(opts.trials, float(np.clip(p0, 1e-3, 1 - 1e-3)))
            )
    else:  # triangular: fixed dictionary spanning the observed support
        sizes = _component_support_sizes(int(values.max()), m)
        comps = [TriangularComponent(int(s)) for s in sizes]

    # state proportions from the dictionary's responsibilities on each band
    mix_probe = MixtureEmission(psi=np.full((1, m), 1 / m), components=comps)
    log_phi = mix_probe.component_log_densities(values)
    phi = np.exp(np.clip(log_phi, -700, None))
    psi = np.empty((k, m))
    for j, band in enumerate(bands):
        psi[j] = phi[band].mean(axis=0) + 1e-8
        psi[j] /= psi[j].sum()
    return MixtureEmission(psi=psi, components=comps)


def _perturb_emission(emission, rng):
    noise = lambda shape: rng.uniform(0.5, 1.5, size=shape)  # noqa: E731
    if isinstance(emission, DiscreteEmissionTable):
        probs = emission.probs * noise(emission.probs.shape)
        probs /= probs.sum(axis=1, keepdims=True)
        return DiscreteEmissionTable(probs)
    if isinstance(emission, NegBinEmission):
        r = emission.r * noise(emission.r.shape)
        mean = emission.mean() * noise(emission.r.shape)
        return NegBinEmission(r=r, p=r / (r + mean))
    if isinstance(emission, KernelEmission):
        w = emission.weights * noise(emission.weights.shape)
        w /= w.sum(axis=0, keepdims=True)
        return KernelEmission(
            anchors=emission.anchors,
            bandwidth=emission.bandwidth,
            weights=w,
            kernel_id=emission.kernel_id,
        )
    # mixture: jitter psi rows (structural zeros survive multiplication)
    psi = emission.psi * noise(emission.psi.shape)
    psi /= psi.sum(axis=1, keepdims=True)
    comps = []
    for comp in emission.components:
        if comp.family == "poisson":
            comps.append(PoissonComponent(comp.rate * float(noise(()))))
        elif comp.family == "gaussian":
            shift = (rng.uniform(-0.5, 0.5, size=np.shape(comp.mean))
                     * np.sqrt(comp.var))
            comps.append(
                GaussianComponent(comp.mean + shift, comp.var * float(noise(())))
            )
        elif comp.family == "binomial":
            p = float(np.clip(comp.p * float(noise(())), 1e-6, 1 - 1e-6))
            comps.append(BinomialComponent(comp.trials, p))
        else:
            comps.append(comp)
    return MixtureEmission(
        psi=psi, components=comps, psi_mask=emission.psi_mask
    )


def initialize(obs, k, opts=None, strategy="quantile", seed=0):
    """Deterministic starting model.

    ``quantile`` builds each state's emission from the observations in its
    quantile band of the sorted data and sets the transition matrix to 0.8
    on the diagonal (rest uniform); ``random-perturb`` applies multiplicative
    noise (re-normalized) on top of the quantile start, seeded by ``seed``
    (an integer or a ``numpy.random.SeedSequence``).
    """
    if strategy not in ("quantile", "random-perturb"):
        raise InputError(f"unknown initialization strategy {strategy!r}")
    seq = _as_sequence(obs)
    opts = opts if opts is not None else FitOptions()
    _check_compat(seq, k, opts)
    if opts.family == "kernel" and opts.bandwidth is None:
        opts = replace(
            opts,
            bandwidth=bandwidth_cv(
                seq.values, grid=opts.bandwidth_grid, kernel_id=opts.kernel_id
            ),
        )
    q = np.full((k, k), 0.2 / (k - 1)) if k > 1 else np.ones((1, 1))
    np.fill_diagonal(q, 0.8 if k > 1 else 1.0)
    init = np.full(k, 1.0 / k)
    emission = _init_emission(seq, k, opts)
    if strategy == "random-perturb":
        rng = np.random.default_rng(seed)
        q = q * rng.uniform(0.5, 1.5, size=q.shape)
        q /= q.sum(axis=1, keepdims=True)
        emission = _perturb_emission(emission, rng)
    return HMMModel(trans=TransitionModel(init=init, q=q), emission=emission)


# ----------------------------------------------------------------- EM steps

def m_step_transition(post):
    """Transition update from smoothed posteriors.

    ``Q[a, b] = Σ_i pair_joint[i, a, b] / Σ_{i<n} tau[i, a]`` and the initial
    distribution is the first tau row, renormalized.
    """
    occupancy = post.tau[:-1].sum(axis=0)
    if np.any(occupancy < _WEIGHT_EPS):
        starved = np.nonzero(occupancy < _WEIGHT_EPS)[0]
        raise EmptyStateError(f"state(s) {starved} starved during fitting")
    q = post.pair_joint.sum(axis=0) / occupancy[:, None]
    q = np.clip(q, 0.0, None)
    q /= q.sum(axis=1, keepdims=True)
    init = np.clip(post.tau[0], 0.0, None)
    return TransitionModel(init=init / init.sum(), q=q)


def _m_step_emission(emission, post, ext, seq, opts, kernel_r):
    values = seq.values
    if isinstance(emission, DiscreteEmissionTable):
        s = _weighted_counts(values, post.tau, emission.y_max)
        if opts.penalty.lam > 0:
            rows = [m_step_regularized(s[j], opts.penalty) for j in range(emission.k)]
        else:
            rows = [m_step_np(s[j]) for j in range(emission.k)]
        return DiscreteEmissionTable(np.vstack(rows))
    if isinstance(emission, NegBinEmission):
        r = np.empty(emission.k)
        p = np.empty(emission.k)
        y = values.astype(float)
        for j in range(emission.k):
            try:
                r[j], p[j] = m_step_negbin(y, post.tau[:, j])
            except UnderdispersedError as exc:
                r[j], p[j] = exc.fallback
        return NegBinEmission(r=r, p=p)
    if isinstance(emission, KernelEmission):
        weights = gem_emission_m_step(
            emission.weights, post.tau, kernel_r, inner_iters=opts.inner_iters
        )
        return KernelEmission(
            anchors=emission.anchors,
            bandwidth=emission.bandwidth,
            weights=weights,
            kernel_id=emission.kernel_id,
        )
    psi = m_step_psi(ext.joint_xz, post.tau, psi_mask=emission.psi_mask)
    comps = update_components(emission.components, ext.xi, values)
    return MixtureEmission(psi=psi, components=comps, psi_mask=emission.psi_mask)


def _e_step(model, seq):
    if isinstance(model.emission, MixtureEmission):
        ext, post = e_step_extended(model.trans, model.emission, seq.values)
        return post, ext
    return forward_backward(model.trans, model.log_densities(seq.values)), None


def _objective(post, emission, opts):
    if opts.penalty.lam > 0 and isinstance(emission, DiscreteEmissionTable):
        pen = sum(
            penalty_value(emission.probs[j], opts.penalty)
            for j in range(emission.k)
        )
        return post.log_lik - opts.penalty.lam * pen
    return post.log_lik


def _run_em(model, seq, opts, kernel_r):
    post, ext = _e_step(model, seq)
    trace = [_objective(post, model.emission, opts)]
    converged = False
    iterations = 0
    for it in range(1, opts.max_iter + 1):
        trans = m_step_transition(post)
        emission = _m_step_emission(
            model.emission, post, ext, seq, opts, kernel_r
        )
        model = HMMModel(trans=trans, emission=emission)
        post, ext = _e_step(model, seq)
        trace.append(_objective(post, model.emission, opts))
        iterations = it
        delta = trace[-1] - trace[-2]
        if delta < opts.tol * max(abs(trace[-2]), 1e-10):
            converged = True
            break
    return model, np.array(trace), converged, iterations, post.log_lik


def fit(obs, k, opts=None):
    """Fit a k-state model by EM with restarts; returns a :class:`FitReport`.

    Start 0 uses the quantile initialization, later starts random
    perturbations of it (seeded from ``opts.seed`` and the start index).
    Starts that starve a state are recorded in ``failed_starts`` and
    skipped; if every start fails, ``FitFailedError`` is raised.
    The best final objective wins; ties go to the earliest start.
    """
    opts = opts if opts is not None else FitOptions()
    seq = _as_sequence(obs)
    _check_compat(seq, k, opts)
    if opts.family == "kernel" and opts.bandwidth is None:
        opts = replace(
            opts,
            bandwidth=bandwidth_cv(
                seq.values, grid=opts.bandwidth_grid, kernel_id=opts.kernel_id
            ),
        )
    kernel_r = (
        kernel_matrix(seq.values, opts.kernel_id, opts.bandwidth)
        if opts.family == "kernel"
        else None
    )
    best = None
    failures = []
    for s in range(opts.n_starts):
        strategy = "quantile" if s == 0 else "random-perturb"
        start_seed = np.random.SeedSequence([int(opts.seed), s])
        try:
            model0 = initialize(
                seq, k, opts, strategy=strategy,
                seed=start_seed,
            )
            model, trace, converged, iterations, log_lik = _run_em(
                model0, seq, opts, kernel_r
            )
        except _RECOVERABLE as exc:
            failures.append((s, f"{type(exc).__name__}: {exc}"))
            continue
        if best is None or trace[-1] > best.objective_trace[-1]:
            best = FitReport(
                model=model,
                objective_trace=trace,
                converged=converged,
                iterations=iterations,
                best_start_index=s,
                log_lik=log_lik,
            )
    if best is None:
        raise FitFailedError(
            f"all {opts.n_starts} starts failed: {failures}"
        )
    best.failed_starts = failures
    return best


# ------------------------------------------------------------ label matching

def _path_agreement(reference, candidate, k):
    counts = np.zeros((k, k))
    np.add.at(counts, (reference, candidate), 1)
    return counts


def align_labels(reference, candidate, k=None):
    """Permutation σ (array: σ[candidate_label] = reference_label).

    For state paths σ maximizes position-wise agreement; for models it
    minimizes the summed total-variation distance between matched emissions.
    Exhaustive search over the k! permutations; k is capped at 10.
    """
    if isinstance(reference, HMMModel) != isinstance(candidate, HMMModel):
        raise InputError("compare two paths or two models, not a mix")
    if isinstance(reference, HMMModel):
        k = reference.k
        if candidate.k != k:
            raise InputError("models disagree on k")
        if k > 10:
            raise KTooLargeError("label alignment is exhaustive; k <= 10 only")
        cost = emission_tv_matrix(reference.emission, candidate.emission)
        best_perm, best_cost = None, np.inf
        for perm in itertools.permutations(range(k)):
            c = sum(cost[perm[b], b] for b in range(k))
            if c < best_cost - 1e-15:
                best_cost, best_perm = c, perm
        return np.array(best_perm)
    reference = np.asarray(reference)
    candidate = np.asarray(candidate)
    if reference.shape != candidate.shape:
        raise InputError("paths must have equal length")
    if k is None:
        k = int(max(reference.max(), candidate.max())) + 1
    if k > 10:
        raise KTooLargeError("label alignment is exhaustive; k <= 10 only")
    counts = _path_agreement(reference, candidate, k)
    best_perm, best_score = None, -1.0
    for perm in itertools.permutations(range(k)):
        score = sum(counts[perm[b], b] for b in range(k))
        if score > best_score + 1e-15:
            best_score, best_perm = score, perm
    return np.array(best_perm)
