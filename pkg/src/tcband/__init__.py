"""Finite-horizon power-utility investment under proportional transaction costs.

Closed-form expansion constants, no-trade band edges, bounding surfaces,
a reference PDE solve of the trading variational inequality, and Monte
Carlo of the reflected band strategy.
"""

from .model import (
    DerivedConstants,
    MarketParams,
    ParamsError,
    ValidationReport,
    derive_constants,
    load_params,
    merton_value,
    power_utility,
    validate,
    xi,
)
from .asymptotics import (
    BoundaryError,
    BoundarySet,
    SubSupSurface,
    VerificationReport,
    admissible_margin,
    band_profile,
    hjb_residuals,
    lambda_threshold,
    leading_offset,
    first_order_bracket,
    make_surfaces,
    margin_ceilings,
    pasting_residual,
    solve_boundaries,
    verify_sub_super,
)
from .hjb import GridSolution, GridSpec, SolverError, extract_boundaries, solve
from .rootfind import NoBracketError
from .simulate import PathConfig, SimulationResult, simulate_merton, simulate_reflected, strategy_gap
from .analysis import (
    SweepReport,
    expansion_study,
    loglog_fit,
    reference_params,
    sandwich_study,
    stress_params,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryError",
    "BoundarySet",
    "DerivedConstants",
    "GridSolution",
    "GridSpec",
    "MarketParams",
    "NoBracketError",
    "ParamsError",
    "PathConfig",
    "SimulationResult",
    "SolverError",
    "SubSupSurface",
    "SweepReport",
    "ValidationReport",
    "VerificationReport",
    "admissible_margin",
    "band_profile",
    "derive_constants",
    "expansion_study",
    "extract_boundaries",
    "hjb_residuals",
    "lambda_threshold",
    "leading_offset",
    "first_order_bracket",
    "load_params",
    "loglog_fit",
    "make_surfaces",
    "margin_ceilings",
    "merton_value",
    "pasting_residual",
    "power_utility",
    "reference_params",
    "sandwich_study",
    "simulate_merton",
    "simulate_reflected",
    "solve",
    "solve_boundaries",
    "strategy_gap",
    "stress_params",
    "validate",
    "verify_sub_super",
    "xi",
]
