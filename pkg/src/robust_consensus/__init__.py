"""Robust feedback control of interacting agents with random inputs.

Gains come from reduced Riccati equations, robustness is certified in the
H-infinity sense, and the uncertain dynamics are simulated with stochastic
Galerkin and Monte-Carlo methods. Set ``ROBUST_CONSENSUS_BACKEND=numpy`` to
bypass the numba kernels.
"""

from __future__ import annotations

from ._accel import backend
from .errors import (
    ConfigError,
    DegenerateBound,
    EmptyInput,
    InfeasibleGamma,
    NonConvergence,
    RobustConsensusError,
    SingularMiddleBlock,
    UnstableSystem,
)
from .gpc import GpcBasis, GpcCoefficients
from .hinf import HinfCertificate, StateSpaceSystem, certify, compute_c_n, gamma_lower_bound, hinf_norm_sweep
from .meanfield import DensityMoments, Histogram, run_mc_sg
from .model import Gaussian, ModelParams, Uniform, UncertaintySpec
from .quadrature import QuadratureRule, gauss_hermite, gauss_legendre
from .riccati import RiccatiGains, limit_gains, solve_finite_n_gains
from .sim import MomentSeries, run_micro_sampled, run_micro_sg

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateBound",
    "DensityMoments",
    "EmptyInput",
    "Gaussian",
    "GpcBasis",
    "GpcCoefficients",
    "HinfCertificate",
    "Histogram",
    "InfeasibleGamma",
    "ModelParams",
    "MomentSeries",
    "NonConvergence",
    "QuadratureRule",
    "RiccatiGains",
    "RobustConsensusError",
    "SingularMiddleBlock",
    "StateSpaceSystem",
    "UncertaintySpec",
    "Uniform",
    "UnstableSystem",
    "backend",
    "certify",
    "compute_c_n",
    "gamma_lower_bound",
    "gauss_hermite",
    "gauss_legendre",
    "hinf_norm_sweep",
    "limit_gains",
    "run_mc_sg",
    "run_micro_sampled",
    "run_micro_sg",
    "solve_finite_n_gains",
]
