"""Discrete weak-form operators of the pressure and momentum steps."""
from .base import (
    ConvectionConfig,
    Discretization,
    PenaltyConfig,
    sipg_tau,
)
from .momentum import (
    apply_continuity_penalty,
    apply_convective,
    apply_divergence_penalty,
    apply_mass,
    apply_viscous_sipg,
    cell_mean_speed,
    continuity_penalty_rhs,
    convective_rhs,
    divergence_penalty_factor,
    forcing_rhs,
    history_rhs,
    lax_friedrichs_lambda,
    pressure_gradient_rhs,
    viscous_rhs,
)
from .pressure import (
    apply_ppe_lhs,
    curl_curl_on_side,
    ppe_operator,
    ppe_rhs_convective,
    ppe_rhs_forcing,
    ppe_rhs_leray,
    ppe_rhs_sipg,
    vorticity_projection,
)
