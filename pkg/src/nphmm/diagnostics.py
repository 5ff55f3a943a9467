"""Numerical checks of the identifiability conditions.

A k-state model is identifiable (up to relabeling) when the transition
matrix has full rank and the state emission distributions are linearly
independent. Both conditions are assessed through smallest singular
values against a tolerance.

For count emissions the independence check runs on the exact (truncated)
probability tables and the verdict is rigorous; for continuous emissions
the densities are compared on a finite evaluation grid, so a "true"
verdict is heuristic (sufficient evidence, not proof). The report says
which kind it is.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .emissions.mixture import MixtureEmission, check_psi_rank
from .model import (
    HMMModel,
    continuous_eval_grid,
    discrete_pmf_rows,
    is_continuous,
)

DEFAULT_TOL = 1e-8


@dataclass
class IdentifiabilityReport:
    """Verdicts plus the singular values they were derived from.

    ``notes`` carries auxiliary findings: whether the emission check was
    rigorous or grid-based, and the mixture ψ-rank result when applicable.
    """

    q_full_rank: bool
    q_sigma_min: float
    emissions_independent: bool
    emission_sigma_min: float
    tol: float
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def check_transition_rank(q, tol=DEFAULT_TOL):
    """(full_rank, sigma_min) of the transition matrix.

    Parameters
    ----------
    q : ndarray or TransitionModel
        Row-stochastic transition matrix (or a model carrying one).
    tol : float
        Rank tolerance; full rank means ``sigma_min > tol``.
    """
    q = np.asarray(q.q if hasattr(q, "q") else q, dtype=float)
    sigma = np.linalg.svd(q, compute_uv=False)
    s_min = float(sigma[-1])
    return s_min > tol, s_min


def _grid_gram_sigma_min(emission, points):
    grid, vol = continuous_eval_grid(emission, points=points)
    dens = np.exp(emission.log_densities(grid)).T  # (k, grid)
    gram = dens @ dens.T * vol
    scale = np.sqrt(np.diag(gram))
    gram = gram / np.outer(scale, scale)
    sigma = np.linalg.svd(gram, compute_uv=False)
    return float(sigma[-1])


def check_emission_independence(emission, tol=DEFAULT_TOL, points=512):
    """(independent, sigma_min) for the k state emission distributions.

    Count families: sigma_min of the per-state probability table after
    normalizing each row to unit Euclidean length (exact on the truncated
    support). Continuous families: sigma_min of the normalized Gram matrix
    of the densities on an evaluation grid of ``points`` per axis spanning
    the effective support padded by 3 bandwidths/standard deviations.
    """
    if is_continuous(emission):
        s_min = _grid_gram_sigma_min(emission, points)
    else:
        rows = discrete_pmf_rows(emission)
        rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
        sigma = np.linalg.svd(rows, compute_uv=False)
        s_min = float(sigma[-1])
    return s_min > tol, s_min


def diagnose(model, tol=DEFAULT_TOL):
    """Run every identifiability check on a model; returns the report."""
    if not isinstance(model, HMMModel):
        raise TypeError("diagnose expects a complete model")
    q_ok, q_sigma = check_transition_rank(model.trans, tol)
    e_ok, e_sigma = check_emission_independence(model.emission, tol)
    notes = []
    if is_continuous(model.emission):
        notes.append(
            "emission check is grid-based (heuristic): densities compared "
            "on a finite evaluation grid"
        )
    else:
        notes.append(
            "emission check is rigorous: exact probability tables on the "
            "truncated support"
        )
    if isinstance(model.emission, MixtureEmission):
        psi_ok, psi_sigma = check_psi_rank(model.emission.psi)
        notes.append(
            f"mixture weight matrix psi rank check: "
            f"{'pass' if psi_ok else 'FAIL'} (sigma_min={psi_sigma:.3e})"
        )
    return IdentifiabilityReport(
        q_full_rank=q_ok,
        q_sigma_min=q_sigma,
        emissions_independent=e_ok,
        emission_sigma_min=e_sigma,
        tol=tol,
        notes=notes,
    )
