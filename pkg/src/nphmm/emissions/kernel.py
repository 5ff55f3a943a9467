"""Kernel-weight emission family for continuous observations.

Each state's density is a weighted kernel estimate anchored at the training
observations:

    f_j(y) = (1 / w^d) Σ_u P[u, j] R((y - y_u) / w)

with a single bandwidth ``w`` shared by all states and a column-stochastic
weight matrix ``P`` (one column per state). Fitting runs inside a
Generalized EM: the M-step improves (rather than maximizes) the weighted
objective

    G(P) = Σ_{i,j} tau[i, j] · log f_j(Y_i)

through a multiplicative inner update that is guaranteed ascent — each pass
reweights ``P`` by the kernel-smoothed responsibilities and renormalises,
which is exactly an EM step on the within-state mixture over anchors.

The bandwidth is chosen once, before EM, by maximising the leave-one-out
log-likelihood of the pooled kernel density estimate over a grid.
"""

from dataclasses import dataclass

import numpy as np

from ..core import LOG_FLOOR
from ..errors import (
    DegenerateDataError,
    DegenerateDenominatorError,
    DimensionMismatchError,
    EmptyGridError,
    InputError,
    SequenceTooShortError,
)

_GAUSS = "gaussian-spherical"
_EPA = "epanechnikov-product"
KERNEL_IDS = (_GAUSS, _EPA)

_WEIGHT_FLOOR = 1e-12


def _as_points(values):
    """(n, d) float view of scalar or vector observations."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        return v[:, None]
    if v.ndim == 2:
        return v
    raise DimensionMismatchError("observations must be (n,) or (n, d)")


def cross_kernel(x, anchors, kernel_id, w):
    """Raw kernel evaluations R((x_i - a_u) / w) as an (n_x, n_a) matrix.

    No 1/w^d normalisation — that belongs to the density, not the kernel.
    """
    if w <= 0:
        raise InputError("bandwidth must be > 0")
    if kernel_id not in KERNEL_IDS:
        raise InputError(f"unknown kernel {kernel_id!r}; pick from {KERNEL_IDS}")
    x = _as_points(x)
    a = _as_points(anchors)
    if x.shape[1] != a.shape[1]:
        raise DimensionMismatchError("query and anchor dimensions differ")
    d = x.shape[1]
    if kernel_id == _GAUSS:
        sq = (
            np.sum(x**2, axis=1)[:, None]
            + np.sum(a**2, axis=1)[None, :]
            - 2.0 * (x @ a.T)
        )
        np.clip(sq, 0.0, None, out=sq)
        return np.exp(-0.5 * sq / (w * w)) / (2 * np.pi) ** (d / 2)
    # product of 1-D Epanechnikov kernels, (3/4)(1 - z_t^2) on |z_t| <= 1
    z = (x[:, None, :] - a[None, :, :]) / w
    return np.prod(0.75 * np.clip(1.0 - z**2, 0.0, None), axis=2)


def kernel_matrix(obs, kernel_id, w):
    """Symmetric kernel matrix R[i, u] = R((Y_i - Y_u) / w) of the data."""
    return cross_kernel(obs, obs, kernel_id, w)


@dataclass
class KernelEmission:
    """Kernel-weight emissions anchored at the training observations.

    ``weights`` is (n_anchors, k); each column sums to 1 within 1e-10.
    """

    anchors: np.ndarray
    bandwidth: float
    weights: np.ndarray
    kernel_id: str = _GAUSS

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.bandwidth = float(self.bandwidth)
        if self.bandwidth <= 0:
            raise InputError("bandwidth must be > 0")
        if self.kernel_id not in KERNEL_IDS:
            raise InputError(
                f"unknown kernel {self.kernel_id!r}; pick from {KERNEL_IDS}"
            )
        if self.weights.ndim != 2:
            raise DimensionMismatchError("weights must be (n_anchors, k)")
        if self.weights.shape[0] != self.anchors.shape[0]:
            raise DimensionMismatchError("one weight row per anchor required")
        if np.any(self.weights < 0) or np.any(self.weights > 1):
            raise InputError("weights must lie in [0, 1]")
        colsum = self.weights.sum(axis=0)
        if np.any(np.abs(colsum - 1.0) > 1e-10):
            raise InputError("each weight column must sum to 1 within 1e-10")

    @property
    def k(self):
        return self.weights.shape[1]

    @property
    def d(self):
        return 1 if self.anchors.ndim == 1 else self.anchors.shape[1]

    def densities(self, values):
        """(n, k) matrix of f_j evaluated at each value."""
        r = cross_kernel(values, self.anchors, self.kernel_id, self.bandwidth)
        return (r @ self.weights) / self.bandwidth**self.d

    def log_densities(self, values):
        """(n, k) log emission matrix, floored at log(1e-300)."""
        with np.errstate(divide="ignore"):
            out = np.log(self.densities(values))
        out[out == -np.inf] = LOG_FLOOR
        return out


def density_eval(emission, j, y):
    """f_j(y) = (1/w^d) Σ_u P[u, j] R((y - y_u)/w), for one point or many."""
    y_arr = np.asarray(y, dtype=float)
    single = y_arr.ndim == 0 or (y_arr.ndim == 1 and emission.d > 1)
    pts = y_arr.reshape(1, -1) if single else y_arr
    dens = emission.densities(pts)[:, j]
    return float(dens[0]) if single else dens


def gem_objective(p, tau, r, w, d):
    """G(P) = Σ_{ij} tau[i,j] log((1/w^d) Σ_u P[u,j] R[i,u])."""
    with np.errstate(divide="ignore"):
        logw = np.log(r @ p)
    return float(np.sum(tau * logw) - tau.sum() * d * np.log(w))


def gem_inner_update(p, tau, r):
    """One ascent pass on the anchor weights.

    Responsibility of anchor u for observation i in state j is
    ``P[u,j] R[i,u] / Σ_v P[v,j] R[i,v]``; the new weight is the
    tau-weighted average of these responsibilities, column-normalised.
    Columns stay exactly stochastic (the normaliser is the column sum).
    Entries below 1e-12 are zeroed and the column renormalised.
    """
    denom = r @ p  # (n, k): Σ_v P[v,j] R[i,v]
    bad = (denom <= 0) & (tau > 0)
    if np.any(bad):
        raise DegenerateDenominatorError(
            "kernel mixture density underflowed to 0 at "
            f"{int(bad.sum())} (observation, state) pairs; "
            "increase the bandwidth"
        )
    ratio = np.where(denom > 0, tau / np.where(denom > 0, denom, 1.0), 0.0)
    numer = p * (r.T @ ratio)
    total = numer.sum(axis=0)
    if np.any(total <= 0):
        raise DegenerateDenominatorError("a state lost all anchor weight")
    out = numer / total
    small = out < _WEIGHT_FLOOR
    if np.any(small):
        out[small] = 0.0
        out /= out.sum(axis=0)
    return out


def gem_emission_m_step(p, tau, r, inner_iters=5):
    """Apply ``gem_inner_update`` ``inner_iters`` times (each one is ascent)."""
    if inner_iters < 1:
        raise InputError("inner_iters must be >= 1")
    for _ in range(inner_iters):
        p = gem_inner_update(p, tau, r)
    return p


def default_bandwidth_grid(values, num=20):
    """20 log-spaced bandwidths around the classical n^(-1/(4+d)) scale."""
    pts = _as_points(values)
    n, d = pts.shape
    sigma = float(np.mean(np.std(pts, axis=0)))
    if sigma <= 0:
        raise DegenerateDataError(
            "all observations identical: no meaningful bandwidth scale"
        )
    scale = sigma * n ** (-1.0 / (4 + d))
    return np.geomspace(0.05 * scale, 2.0 * scale, num)


def bandwidth_cv(values, grid=None, kernel_id=_GAUSS):
    """Bandwidth maximising the pooled leave-one-out log-likelihood.

    The criterion is Σ_i log[(1/((n-1) w^d)) Σ_{u≠i} R((Y_i - Y_u)/w)],
    i.e. ordinary LOO cross-validation of the state-free kernel density
    estimate. Ties break toward the larger bandwidth.
    """
    pts = _as_points(values)
    n, d = pts.shape
    if n < 2:
        raise SequenceTooShortError("cross-validation needs at least 2 points")
    if grid is None:
        grid = default_bandwidth_grid(values)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise EmptyGridError("bandwidth grid is empty")
    if np.any(grid <= 0):
        raise InputError("bandwidths must be > 0")
    scores = np.empty(grid.size)
    for idx, w in enumerate(grid):
        r = kernel_matrix(pts, kernel_id, w)
        loo = r.sum(axis=1) - np.diag(r)
        with np.errstate(divide="ignore"):
            scores[idx] = float(
                np.sum(np.log(loo)) - n * np.log((n - 1) * w**d)
            )
    best = scores.max()
    return float(grid[scores == best].max())
