"""Hybrid IAS solvers for sparsity-promoting hierarchical Bayesian inversion."""

from .estimator import IASRegressor
from .exceptions import (
    ConfigError,
    DegenerateGrid,
    DegenerateSignal,
    DomainError,
    IASError,
    IntegrationFailure,
    InvalidModel,
    MissingArtifact,
    NonConvergence,
    NotSPD,
    RankDeficient,
    ZeroColumn,
)
from .forward import Problem
from .hyperprior import (
    HybridPair,
    HyperModel,
    convexity_bound,
    eta,
    match_vartheta2,
    penalty,
    phi_ivp,
    sensitivity_scaling,
    theta_update,
    x_bound,
)
from .ias import IasState, SolverControls, run
from .krylov import CglsResult, StoppingRule, cgls, g_functional

__version__ = "0.1.0"

__all__ = [
    "CglsResult",
    "ConfigError",
    "DegenerateGrid",
    "DegenerateSignal",
    "DomainError",
    "HybridPair",
    "HyperModel",
    "IASError",
    "IASRegressor",
    "IasState",
    "IntegrationFailure",
    "InvalidModel",
    "MissingArtifact",
    "NonConvergence",
    "NotSPD",
    "Problem",
    "RankDeficient",
    "SolverControls",
    "StoppingRule",
    "ZeroColumn",
    "cgls",
    "convexity_bound",
    "eta",
    "g_functional",
    "match_vartheta2",
    "penalty",
    "phi_ivp",
    "run",
    "sensitivity_scaling",
    "theta_update",
    "x_bound",
]
