"""Stage objectives and the backward coefficient recursion.

For a stage ``t`` and a candidate fund vector ``K`` the next-period
normalised state is ``z = s_t + P_t'K``. Both stage objectives and the
coefficient updates depend on the scenarios only through four branch
sums of ``z`` and ``z^2``, which the kernels compute in one pass.

Branch orientation: on the surplus side (``"plus"``) the upper branch is
``z >= 0``; on the shortage side (``"minus"``) it is ``z <= 0``. The upper
branch is always the one where next-period wealth lands at or above its
discounted target, so it carries ``a^+``/``b^+``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._rng import standard_normals
from .market import DiscountCurve, ScenarioSet, scenario_moments

SIDES = ("plus", "minus")
VALIDITY_TOL = 1e-8


def _orientation(side: str) -> int:
    if side == "plus":
        return 1
    if side == "minus":
        return -1
    raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")


@dataclass(frozen=True)
class RiskAversionSpec:
    """Per-period slopes of the piecewise-linear trade-off and the target ``W``.

    Any real slopes are accepted; the sign restriction is not needed by the
    recursion.
    """

    gamma_plus: np.ndarray
    gamma_minus: np.ndarray
    target: float

    def __post_init__(self):
        gp = np.atleast_1d(np.asarray(self.gamma_plus, dtype=float))
        gm = np.atleast_1d(np.asarray(self.gamma_minus, dtype=float))
        if gp.shape != gm.shape or gp.ndim != 1:
            raise ValueError("gamma_plus and gamma_minus must be 1-D of equal length")
        object.__setattr__(self, "gamma_plus", gp)
        object.__setattr__(self, "gamma_minus", gm)
        object.__setattr__(self, "target", float(self.target))

    @classmethod
    def constant(cls, horizon: int, gamma_plus: float, gamma_minus: float, target: float):
        return cls(np.full(horizon, float(gamma_plus)), np.full(horizon, float(gamma_minus)), target)

    @property
    def horizon(self) -> int:
        return self.gamma_plus.size

    def gamma(self, t: int, side: str) -> float:
        return float(self.gamma_plus[t] if side == "plus" else self.gamma_minus[t])


@dataclass
class CoefficientTable:
    """``a^±_t, b^±_t`` for ``t = 0..T``; index ``T`` holds the terminal zeros."""

    a_plus: np.ndarray
    a_minus: np.ndarray
    b_plus: np.ndarray
    b_minus: np.ndarray

    @classmethod
    def zeros(cls, horizon: int) -> "CoefficientTable":
        return cls(*(np.zeros(horizon + 1) for _ in range(4)))

    @property
    def horizon(self) -> int:
        return self.a_plus.size - 1

    def a(self, t: int, side: str) -> float:
        return float(self.a_plus[t] if side == "plus" else self.a_minus[t])

    def b(self, t: int, side: str) -> float:
        return float(self.b_plus[t] if side == "plus" else self.b_minus[t])

    def spread(self, t: int, side: str) -> float:
        """``b - a^2``: the normalised conditional variance of terminal wealth."""
        return self.b(t, side) - self.a(t, side) ** 2

    def violations(self, tol: float = VALIDITY_TOL):
        """``(t, side, b - a^2)`` for every entry below ``-tol``."""
        out = []
        for t in range(self.horizon + 1):
            for side in SIDES:
                gap = self.spread(t, side)
                if gap < -tol:
                    out.append((t, side, gap))
        return out

    def copy(self) -> "CoefficientTable":
        return CoefficientTable(self.a_plus.copy(), self.a_minus.copy(),
                                self.b_plus.copy(), self.b_minus.copy())

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("a_plus", "a_minus", "b_plus", "b_minus")}

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientTable":
        arrays = [np.asarray(d[k], dtype=float) for k in ("a_plus", "a_minus", "b_plus", "b_minus")]
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
            raise ValueError("coefficient arrays must be 1-D of equal length")
        return cls(*arrays)


class StageObjective:
    """``F_t^+`` or ``F_t^-`` as a callable of the fund vector ``K``.

    Sample moments and downstream coefficients are captured at construction;
    evaluation is pure and touches the scenarios once per call.
    """

    def __init__(self, t, side, sc: ScenarioSet, coeffs: CoefficientTable, gamma: float,
                 curve: DiscountCurve):
        if not 0 <= t < sc.horizon:
            raise IndexError(f"stage {t} outside 0..{sc.horizon - 1}")
        self.t = t
        self.side = side
        self.orientation = _orientation(side)
        self.P = sc.period(t)
        self.n = self.P.shape[1]
        self.mean, self.second, self.cov = scenario_moments(sc, t)
        self.rho = curve.growth(t + 1)
        self.s = curve.rate(t)
        self.gamma = float(gamma)
        self.a_up, self.a_low = coeffs.a_plus[t + 1], coeffs.a_minus[t + 1]
        self.b_up, self.b_low = coeffs.b_plus[t + 1], coeffs.b_minus[t + 1]
        # +gamma on the surplus side enters with a minus sign, and vice versa
        self._g = self.gamma if side == "plus" else -self.gamma
        self.evaluations = 0

    def branch_sums(self, K):
        K = np.ascontiguousarray(K, dtype=float)
        if K.shape != (self.n,):
            raise ValueError(f"K must have shape ({self.n},), got {K.shape}")
        return kernels.branch_sums(self.P, K, self.s, self.orientation)

    def __call__(self, K) -> float:
        K = np.ascontiguousarray(K, dtype=float)
        s1u, s1l, s2u, s2l = self.branch_sums(K)
        self.evaluations += 1
        rho = self.rho
        drift = self.s + float(self.mean @ K)
        carry = self.a_up * s1u + self.a_low * s1l
        return (rho * rho * float(K @ self.cov @ K)
                + (2.0 * rho * self.a_up + self.b_up) * s2u
                + (2.0 * rho * self.a_low + self.b_low) * s2l
                - carry * carry
                - 2.0 * rho * carry * drift
                - self._g * carry
                - self._g * rho * drift)

    def analytic_seed(self) -> np.ndarray:
        """Minimiser of the objective when the downstream coefficients vanish."""
        sign = 1.0 if self.side == "plus" else -1.0
        return sign * 0.5 * self.gamma * np.linalg.solve(self.cov, self.mean)


def eval_F_plus(K, t, coeffs, sc, gamma_plus, curve) -> float:
    return StageObjective(t, "plus", sc, coeffs, gamma_plus, curve)(K)


def eval_F_minus(K, t, coeffs, sc, gamma_minus, curve) -> float:
    return StageObjective(t, "minus", sc, coeffs, gamma_minus, curve)(K)


def stage_coefficients(t, side, K, coeffs: CoefficientTable, sc: ScenarioSet, curve: DiscountCurve):
    """``(a_t, b_t)`` on one side given that side's fund vector."""
    P = sc.period(t)
    K = np.ascontiguousarray(K, dtype=float)
    if K.shape != (P.shape[1],):
        raise ValueError(f"K must have shape ({P.shape[1]},), got {K.shape}")
    rho = curve.growth(t + 1)
    s = curve.rate(t)
    mean, second, _ = scenario_moments(sc, t)
    s1u, s1l, s2u, s2l = kernels.branch_sums(P, K, s, _orientation(side))
    a_up, a_low = coeffs.a_plus[t + 1], coeffs.a_minus[t + 1]
    b_up, b_low = coeffs.b_plus[t + 1], coeffs.b_minus[t + 1]
    a = rho * float(mean @ K) + a_up * s1u + a_low * s1l
    # P'K = z - s inside each branch
    b = (rho * rho * float(K @ second @ K)
         + 2.0 * rho * (a_up * (s2u - s * s1u) + a_low * (s2l - s * s1l))
         + b_up * s2u + b_low * s2l)
    return a, b


def update_coefficients(t, K_plus, K_minus, coeffs: CoefficientTable, sc: ScenarioSet,
                        curve: DiscountCurve) -> CoefficientTable:
    """Return a copy of ``coeffs`` with stage ``t`` filled in from ``t + 1``."""
    out = coeffs.copy()
    out.a_plus[t], out.b_plus[t] = stage_coefficients(t, "plus", K_plus, coeffs, sc, curve)
    out.a_minus[t], out.b_minus[t] = stage_coefficients(t, "minus", K_minus, coeffs, sc, curve)
    return out


def unit_directions(n: int, count: int) -> np.ndarray:
    """Deterministic unit vectors: the ``2n`` signed axes, then seeded random ones."""
    if count <= 0:
        return np.empty((0, n))
    axes = np.vstack([np.eye(n), -np.eye(n)])
    extra = max(0, count - axes.shape[0])
    rand = standard_normals(0x5EED, 7919, 0, extra, n)
    dirs = np.vstack([axes, rand])[:count]
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


@dataclass
class CoercivityReport:
    t: int
    passed: bool
    hypothesis_ok: bool
    min_margin: float
    margins: dict = field(default_factory=dict)


def coercivity_certificate(t, coeffs, sc, curve, risk: RiskAversionSpec,
                           directions: int = 64, radius: float = 1e3) -> CoercivityReport:
    """Check ray growth ``F(radius L) > F(radius/10 L)`` on both sides.

    A violated downstream hypothesis ``b - a^2 >= 0`` is flagged in the
    report rather than raised.
    """
    hyp = all(coeffs.spread(t + 1, side) >= -VALIDITY_TOL for side in SIDES)
    dirs = unit_directions(sc.n_assets, directions)
    margins = {}
    for side in SIDES:
        F = StageObjective(t, side, sc, coeffs, risk.gamma(t, side), curve)
        m = np.inf
        for L in dirs:
            m = min(m, F(radius * L) - F(0.1 * radius * L))
        margins[side] = float(m)
    min_margin = min(margins.values())
    return CoercivityReport(t=t, passed=bool(min_margin > 0.0), hypothesis_ok=hyp,
                            min_margin=float(min_margin), margins=margins)
