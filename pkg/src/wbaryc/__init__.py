"""Wasserstein barycenters of discrete measures by stochastic approximation and sample average approximation."""

from .errors import (
    DegenerateMass,
    DimensionMismatch,
    InfeasibleNumerics,
    MissingReference,
    NonConvergence,
    NumericUnderflow,
    StreamExhausted,
    UndefinedDivergence,
    WbarycError,
)
from .geometry import BregmanPenalty, bregman_div, kl_divergence, project_simplex
from .measures import GaussianFamily, GridSpec, sample_truncated_gaussians, true_gaussian_barycenter, w2_distance_1d
from .ot_core import dual_gradient, dual_value, entropic_ot, ot_exact
from .planner import PlannerInput, plan_sa_entropic, plan_sa_unregularized, plan_saa_entropic, plan_saa_penalized
from .saa_solvers import run_ibp_barycenter, run_mirror_prox, run_penalized_erm, saddle_gradient_operator
from .sa_solvers import SaConfig, run_psgd_wb, run_smd_wb

__version__ = "0.1.0"
