"""Feedback policies: the time-consistent piecewise-linear rule and the
pre-committed baseline."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .market import DiscountCurve, MarketSpec, ScenarioSet, discount_curve, scenario_moments
from .recursion import CoefficientTable


@dataclass(frozen=True)
class PolicyTable:
    """Stage fund vectors for both branches of the time-consistent policy.

    ``K_plus[t]`` applies when wealth is at or above the discounted target,
    ``K_minus[t]`` below it. Risky holdings are ``K * (X_t - target_t)``.
    """

    K_plus: np.ndarray
    K_minus: np.ndarray
    curve: DiscountCurve
    target: float
    constrained: bool = False
    cone: Optional[dict] = None

    def __post_init__(self):
        kp = np.atleast_2d(np.asarray(self.K_plus, dtype=float))
        km = np.atleast_2d(np.asarray(self.K_minus, dtype=float))
        if kp.shape != km.shape:
            raise ValueError(f"K_plus {kp.shape} and K_minus {km.shape} differ")
        if kp.shape[0] != self.curve.horizon:
            raise ValueError(f"{kp.shape[0]} stages but curve horizon {self.curve.horizon}")
        object.__setattr__(self, "K_plus", kp)
        object.__setattr__(self, "K_minus", km)
        object.__setattr__(self, "target", float(self.target))

    @property
    def horizon(self) -> int:
        return self.K_plus.shape[0]

    @property
    def n_assets(self) -> int:
        return self.K_plus.shape[1]

    def reference(self, t: int) -> float:
        """Discounted target at ``t``, the kink of the policy."""
        return self.curve.target_at(t, self.target)

    def feedback(self):
        """Arrays ``(reference, K_up, K_down)`` consumed by the wealth kernel."""
        ref = self.curve.factors[:-1] * self.target
        return ref, self.K_plus, self.K_minus

    def to_dict(self) -> dict:
        return {
            "K_plus": self.K_plus.tolist(),
            "K_minus": self.K_minus.tolist(),
            "discount_factors": self.curve.factors.tolist(),
            "riskfree": self.curve.rates.tolist(),
            "target": self.target,
            "constrained": self.constrained,
            "cone": self.cone,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyTable":
        curve = DiscountCurve(np.asarray(d["discount_factors"], dtype=float),
                              np.asarray(d["riskfree"], dtype=float))
        return cls(np.asarray(d["K_plus"], dtype=float), np.asarray(d["K_minus"], dtype=float),
                   curve, d["target"], bool(d.get("constrained", False)), d.get("cone"))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "PolicyTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class WealthState:
    t: int
    wealth: float

    def surplus(self, policy: PolicyTable) -> float:
        return self.wealth - policy.reference(self.t)


def action(p: PolicyTable, state: WealthState) -> np.ndarray:
    """Risky holdings at ``state``; the risk-free holding is ``X_t - sum(u)``."""
    if not 0 <= state.t < p.horizon:
        raise IndexError(f"period {state.t} outside 0..{p.horizon - 1}")
    y = state.surplus(p)
    K = p.K_plus[state.t] if y >= 0.0 else p.K_minus[state.t]
    return K * y


def closed_form_terminal_moments(p: PolicyTable, coeffs: CoefficientTable, x0: float):
    """Mean and variance of terminal wealth from the time-0 coefficients."""
    y0 = x0 - p.reference(0)
    side = "plus" if y0 >= 0.0 else "minus"
    rho0 = p.curve.growth(0)
    mean = rho0 * x0 + coeffs.a(0, side) * y0
    var = coeffs.spread(0, side) * y0 * y0
    return float(mean), float(var)


class PrecommittedPolicy:
    """Multi-period mean-variance policy optimal from time 0 (affine feedback).

    ``u_j = -E[P_j P_j']^{-1} E[P_j] s_j (X_j - lambda_0 / rho_j)`` with the
    sample moments of ``sc``. Used only as a comparison baseline.
    """

    def __init__(self, market: MarketSpec, sc: ScenarioSet, gamma: float, x0: float):
        self.curve = discount_curve(market)
        self.gamma = float(gamma)
        self.x0 = float(x0)
        T = market.horizon
        self.gains = np.empty((T, sc.n_assets))
        self.factors = np.empty(T)  # 1 - E[P]' E[PP']^{-1} E[P]
        for j in range(T):
            mean, second, _ = scenario_moments(sc, j)
            try:
                w = np.linalg.solve(second, mean)
            except np.linalg.LinAlgError:
                raise ValueError(f"E[PP'] is singular in period {j}") from None
            self.gains[j] = -w * self.curve.rate(j)
            self.factors[j] = 1.0 - float(mean @ w)
        self.lambda0 = self.lambda_at(0, self.x0)

    @property
    def horizon(self) -> int:
        return self.gains.shape[0]

    def lambda_at(self, t: int, wealth: float) -> float:
        """Multiplier of the truncated problem restarted at ``t`` from ``wealth``."""
        return self.curve.growth(t) * wealth + 0.5 * self.gamma / float(np.prod(self.factors[t:]))

    def action(self, t: int, wealth: float) -> np.ndarray:
        return self.gains[t] * (wealth - self.lambda0 * self.curve.factors[t])

    def feedback(self):
        ref = self.lambda0 * self.curve.factors[:-1]
        return ref, self.gains, self.gains


def precommitted_policy(market, sc, gamma, x0) -> PrecommittedPolicy:
    return PrecommittedPolicy(market, sc, gamma, x0)
