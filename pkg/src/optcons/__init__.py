"""Distributed optimal consensus for linear multi-agent systems with a
positive semidefinite control weight."""

from .errors import (
    ConfigError,
    ConsensusError,
    GraphNotConnected,
    RegularityViolation,
    RiccatiError,
    SimulationDivergence,
    Unstabilizable,
    ValidationError,
)
from .graph import CommGraph, kappa, laplacian, laplacian_spectrum, reduced_disagreement_matrix
from .matlib import expm_apply, is_hurwitz, pinv, range_contained, spectrum, split_stable_unstable
from .riccati import reduce_control_weight, riccati_ode_oracle, solve_care, solve_regular_are
from .simulator import LtiAgentModel, SimConfig, SimReport, simulate
from .synthesis import closed_loop_pair, solve_unstable_are, synthesize, verify_mode_stability

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConsensusError",
    "GraphNotConnected",
    "RegularityViolation",
    "RiccatiError",
    "SimulationDivergence",
    "Unstabilizable",
    "ValidationError",
    "CommGraph",
    "kappa",
    "laplacian",
    "laplacian_spectrum",
    "reduced_disagreement_matrix",
    "expm_apply",
    "is_hurwitz",
    "pinv",
    "range_contained",
    "spectrum",
    "split_stable_unstable",
    "reduce_control_weight",
    "riccati_ode_oracle",
    "solve_care",
    "solve_regular_are",
    "LtiAgentModel",
    "SimConfig",
    "SimReport",
    "simulate",
    "closed_loop_pair",
    "solve_unstable_are",
    "synthesize",
    "verify_mode_stability",
]
