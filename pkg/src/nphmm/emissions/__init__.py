"""Emission families: discrete tables, parametric baselines, mixtures, kernels."""

from .discrete import (
    DiscreteEmissionTable,
    NegBinEmission,
    PenaltySpec,
    m_step_negbin,
    m_step_np,
    m_step_regularized,
    penalty_value,
)
from .mixture import (
    BinomialComponent,
    DiracAtZero,
    ExtendedPosteriorSet,
    GaussianComponent,
    MixtureEmission,
    PoissonComponent,
    TriangularComponent,
    check_psi_rank,
    e_step_extended,
    m_step_expfam,
    m_step_psi,
    make_zero_inflated,
    triangular_component,
    update_components,
)

__all__ = [
    "BinomialComponent",
    "DiracAtZero",
    "DiscreteEmissionTable",
    "ExtendedPosteriorSet",
    "GaussianComponent",
    "MixtureEmission",
    "NegBinEmission",
    "PenaltySpec",
    "PoissonComponent",
    "TriangularComponent",
    "check_psi_rank",
    "e_step_extended",
    "m_step_expfam",
    "m_step_negbin",
    "m_step_np",
    "m_step_psi",
    "m_step_regularized",
    "make_zero_inflated",
    "penalty_value",
    "triangular_component",
    "update_components",
]
