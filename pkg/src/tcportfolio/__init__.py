"""Time-consistent behavioral portfolio policies for multi-period
mean-variance investment with piecewise-linear, wealth-dependent risk
aversion."""

from .kernels import BACKEND
from .market import (DiscountCurve, MarketError, MarketSpec, ScenarioSet, calibrate_lognormal,
                     discount_curve, generate_scenarios, lognormal_moments, scenario_moments)
from .recursion import (CoefficientTable, RiskAversionSpec, StageObjective, coercivity_certificate,
                        eval_F_minus, eval_F_plus, update_coefficients)
from .policy import (PolicyTable, PrecommittedPolicy, WealthState, action,
                     closed_form_terminal_moments, precommitted_policy)
from .optimizer import (ConeConstraint, SearchConfig, ValidityError, backward_solve,
                        project_onto_cone, solve_stage_cone, solve_stage_unconstrained)

__version__ = "0.1.0"


__all__ = [
    "BACKEND",
    "DiscountCurve",
    "MarketError",
    "MarketSpec",
    "ScenarioSet",
    "calibrate_lognormal",
    "discount_curve",
    "generate_scenarios",
    "lognormal_moments",
    "scenario_moments",
    "CoefficientTable",
    "RiskAversionSpec",
    "StageObjective",
    "coercivity_certificate",
    "eval_F_minus",
    "eval_F_plus",
    "update_coefficients",
    "PolicyTable",
    "PrecommittedPolicy",
    "WealthState",
    "action",
    "closed_form_terminal_moments",
    "precommitted_policy",
    "ConeConstraint",
    "SearchConfig",
    "ValidityError",
    "backward_solve",
    "project_onto_cone",
    "solve_stage_cone",
    "solve_stage_unconstrained",
]
