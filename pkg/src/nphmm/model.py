"""Model container pairing a transition model with an emission family.

Also hosts the density-evaluation helpers shared by label alignment and the
identifiability diagnostics: a common discrete support cap for count
emissions and a padded evaluation grid for continuous ones.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import nbinom, poisson

from .core import TransitionModel
from .emissions.discrete import DiscreteEmissionTable, NegBinEmission
from .emissions.kernel import KernelEmission
from .emissions.mixture import MixtureEmission
from .errors import DimensionMismatchError, InputError

_TAIL = 1e-9


@dataclass
class HMMModel:
    """A complete hidden Markov model: chain parameters plus emissions."""

    trans: TransitionModel
    emission: object

    def __post_init__(self):
        if self.emission_k() != self.trans.k:
            raise DimensionMismatchError(
                f"transition model has k={self.trans.k} but emission "
                f"family has k={self.emission_k()}"
            )

    @property
    def k(self):
        return self.trans.k

    def emission_k(self):
        return self.emission.k

    def log_densities(self, values):
        """(n, k) log emission matrix for the observations, floored."""
        return self.emission.log_densities(values)


def emission_kind(emission):
    """Family tag used in model files: discrete / negbin / mixture / kernel."""
    if isinstance(emission, DiscreteEmissionTable):
        return "discrete"
    if isinstance(emission, NegBinEmission):
        return "negbin"
    if isinstance(emission, MixtureEmission):
        return "mixture"
    if isinstance(emission, KernelEmission):
        return "kernel"
    raise InputError(f"unknown emission family {type(emission).__name__}")


def is_continuous(emission):
    """True when the emission family has a density w.r.t. Lebesgue measure."""
    if isinstance(emission, KernelEmission):
        return True
    if isinstance(emission, MixtureEmission):
        return any(c.family == "gaussian" for c in emission.components)
    return False


def _count_support_cap(emission):
    """Support cap beyond which every state's pmf mass is below ~1e-9."""
    if isinstance(emission, DiscreteEmissionTable):
        return emission.y_max
    if isinstance(emission, NegBinEmission):
        return int(np.max(nbinom.ppf(1 - _TAIL, emission.r, emission.p)))
    if isinstance(emission, MixtureEmission):
        cap = 0
        for comp in emission.components:
            if comp.family == "poisson":
                cap = max(cap, int(poisson.ppf(1 - _TAIL, comp.rate)))
            elif comp.family == "binomial":
                cap = max(cap, comp.trials)
            elif comp.family == "triangular":
                cap = max(cap, comp.size - 1)
            # dirac0 contributes only 0
        return cap
    raise InputError("no discrete support for this family")


def discrete_pmf_rows(emission, cap=None):
    """(k, cap+1) matrix of per-state pmf values on {0, …, cap}."""
    if cap is None:
        cap = _count_support_cap(emission)
    return np.exp(emission.log_densities(np.arange(cap + 1))).T


def continuous_eval_grid(emission, points=512):
    """Evaluation grid spanning the emission's effective support.

    The range is the anchor/mean span padded by 3 bandwidths (kernel) or
    3 standard deviations (Gaussian mixtures). For 2-D data the grid is the
    Cartesian product of per-axis grids with ``points`` clamped to 64 each.
    Returns (grid_points, cell_volume).
    """
    if isinstance(emission, KernelEmission):
        pts = np.atleast_2d(emission.anchors.T).T
        if pts.ndim == 1:
            pts = pts[:, None]
        pad = 3.0 * emission.bandwidth
        lo, hi = pts.min(axis=0) - pad, pts.max(axis=0) + pad
    elif isinstance(emission, MixtureEmission) and is_continuous(emission):
        means = np.stack(
            [np.atleast_1d(c.mean) for c in emission.components
             if c.family == "gaussian"]
        )
        stds = np.array(
            [np.sqrt(c.var) for c in emission.components
             if c.family == "gaussian"]
        )
        pad = 3.0 * stds.max()
        lo, hi = means.min(axis=0) - pad, means.max(axis=0) + pad
    else:
        raise InputError("no continuous grid for this family")
    d = lo.shape[0]
    if d == 1:
        grid = np.linspace(lo[0], hi[0], points)
        return grid, float(grid[1] - grid[0])
    if d == 2:
        side = min(points, 64)
        gx = np.linspace(lo[0], hi[0], side)
        gy = np.linspace(lo[1], hi[1], side)
        xx, yy = np.meshgrid(gx, gy)
        vol = float((gx[1] - gx[0]) * (gy[1] - gy[0]))
        return np.column_stack([xx.ravel(), yy.ravel()]), vol
    raise InputError("evaluation grids support d <= 2 only")


def emission_tv_matrix(em_a, em_b):
    """(k, k) total-variation distances between states of two emission models.

    Exact for count families (summed over the joint support cap); a
    quadrature approximation on the shared padded grid for continuous ones.
    """
    if is_continuous(em_a) != is_continuous(em_b):
        raise InputError("cannot compare count and continuous emissions")
    if is_continuous(em_a):
        grid_a, vol_a = continuous_eval_grid(em_a)
        grid_b, vol_b = continuous_eval_grid(em_b)
        # shared grid: union of ranges, finer cell volume
        if grid_a.ndim == 1:
            lo = min(grid_a[0], grid_b[0])
            hi = max(grid_a[-1], grid_b[-1])
            grid = np.linspace(lo, hi, 1024)
            vol = float(grid[1] - grid[0])
        else:
            lo = np.minimum(grid_a.min(axis=0), grid_b.min(axis=0))
            hi = np.maximum(grid_a.max(axis=0), grid_b.max(axis=0))
            gx = np.linspace(lo[0], hi[0], 64)
            gy = np.linspace(lo[1], hi[1], 64)
            xx, yy = np.meshgrid(gx, gy)
            grid = np.column_stack([xx.ravel(), yy.ravel()])
            vol = float((gx[1] - gx[0]) * (gy[1] - gy[0]))
        fa = np.exp(em_a.log_densities(grid))
        fb = np.exp(em_b.log_densities(grid))
        return 0.5 * vol * np.sum(
            np.abs(fa[:, :, None] - fb[:, None, :]), axis=0
        )
    cap = max(_count_support_cap(em_a), _count_support_cap(em_b))
    pa = discrete_pmf_rows(em_a, cap)
    pb = discrete_pmf_rows(em_b, cap)
    return 0.5 * np.sum(np.abs(pa[:, None, :] - pb[None, :, :]), axis=2)
