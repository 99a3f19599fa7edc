"""Global search for the stage fund vectors and the backward solve.

The stage objectives are continuous and coercive but not convex; they have
kinks on the hyperplanes ``s_t + P'K = 0`` of the scenario set. Each
stage-side is solved by a deterministic multistart Hooke-Jeeves pattern
search: a pool of seeds is scored, and the best few are refined.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import lsq_linear

from .market import DiscountCurve, ScenarioSet, discount_curve
from .policy import PolicyTable
from .recursion import (SIDES, VALIDITY_TOL, CoefficientTable, RiskAversionSpec, StageObjective,
                        update_coefficients)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class ValidityError(SolverError):
    """``b - a^2`` came out negative: the stage search missed the optimum."""

    def __init__(self, t, side, gap):
        super().__init__(f"b - a^2 = {gap:.3e} < -{VALIDITY_TOL:g} at t={t}, side={side}")
        self.t, self.side, self.gap = t, side, gap


class ConeProjectionError(SolverError):
    def __init__(self, point, iterations):
        super().__init__(f"cone projection failed (iteration limit {iterations}) "
                         f"from {np.asarray(point).tolist()}")
        self.point = np.asarray(point)


MEMBERSHIP_TOL = 1e-10


@dataclass(frozen=True)
class ConeConstraint:
    """Admissible holdings ``{u : A u >= 0}``.

    On the shortage side holdings are ``u = K * y`` with ``y < 0``, so the
    admissible fund vectors there form the negative cone ``{K : -A K >= 0}``
    (``minus_domain="negative"``). ``minus_domain="same"`` instead places the
    fund vector itself in ``{K : A K >= 0}`` on both sides.
    """

    A: np.ndarray
    name: str = "custom"
    minus_domain: str = "negative"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", A)
        if self.minus_domain not in ("negative", "same"):
            raise ValueError(f"minus_domain must be 'negative' or 'same', got {self.minus_domain!r}")

    @classmethod
    def unconstrained(cls, n: int) -> "ConeConstraint":
        return cls(np.zeros((0, n)), name="none")

    @classmethod
    def preset(cls, name: str, n: int) -> "ConeConstraint":
        if name == "no_shorting":
            # fund vectors nonnegative on both branches
            return cls(np.eye(n), name="no_shorting", minus_domain="same")
        if name == "long_only":
            # holdings nonnegative on both branches
            return cls(np.eye(n), name="long_only", minus_domain="negative")
        if name == "none":
            return cls.unconstrained(n)
        raise ValueError(f"unknown cone preset {name!r}")

    @property
    def n_assets(self) -> int:
        return self.A.shape[1]

    def matrix(self, side: str) -> np.ndarray:
        """Constraint matrix ``M`` of the fund-vector domain ``{K : M K >= 0}``."""
        if side == "minus" and self.minus_domain == "negative":
            return -self.A
        return self.A

    def contains(self, K, side: str = "plus") -> bool:
        return cone_contains(self.matrix(side), K)

    def to_dict(self) -> dict:
        return {"name": self.name, "A": self.A.tolist(), "minus_domain": self.minus_domain}

    @classmethod
    def from_dict(cls, d: dict) -> "ConeConstraint":
        A = np.asarray(d["A"], dtype=float)
        return cls(A.reshape(-1, A.shape[-1]) if A.size else A, d.get("name", "custom"),
                   d.get("minus_domain", "negative"))


def cone_contains(M, K) -> bool:
    K = np.asarray(K, dtype=float)
    if M.shape[0] == 0:
        return True
    return bool(np.min(M @ K) >= -MEMBERSHIP_TOL * np.linalg.norm(K))


def project_onto_cone(y, M, max_iter: Optional[int] = None) -> np.ndarray:
    """Euclidean projection onto ``{K : M K >= 0}``.

    With mutually orthogonal rows (the presets) one sweep of halfspace
    projections is exact. Otherwise the dual ``min_{lam >= 0} |y + M'lam|``
    is solved as a bound-constrained least-squares problem (BVLS) and
    ``K = y + M'lam``. Alternating
    halfspace projections converge sublinearly when the cone is thin or
    collapses to the apex, which is why they are not used there.
    """
    y = np.asarray(y, dtype=float)
    m = M.shape[0]
    if m == 0 or cone_contains(M, y):
        return y.copy()
    gram = M @ M.T
    if np.count_nonzero(gram - np.diag(np.diag(gram))) == 0:
        x = y.copy()
        for i in range(m):
            slack = M[i] @ x
            if slack < 0.0 and gram[i, i] > 0.0:
                x = x - (slack / gram[i, i]) * M[i]
        return x
    res = lsq_linear(M.T, -y, bounds=(0.0, np.inf), method="bvls", tol=1e-15, max_iter=max_iter)
    if res.status <= 0:
        raise ConeProjectionError(y, max_iter)
    x = y + M.T @ res.x
    scale = np.linalg.norm(y)
    # round-off around the apex: the projection is the origin
    if np.linalg.norm(x) <= 1e-12 * scale:
        return np.zeros_like(x)
    if np.min(M @ x) < -MEMBERSHIP_TOL * scale * np.sqrt(gram.diagonal().max()):
        raise ConeProjectionError(y, max_iter)
    return x


@dataclass(frozen=True)
class SearchConfig:
    """Pattern-search settings for one stage-side.

    ``grid_per_axis`` lattice points per coordinate seed the search (the
    lattice is replaced by the signed axes when it would exceed
    ``max_lattice`` points); the ``multistart`` best seeds are refined.
    ``analytic_seed`` adds the closed-form last-stage minimiser to the pool.
    """

    grid_per_axis: int = 3
    multistart: int = 4
    initial_step: float = 0.25
    shrink: float = 0.5
    step_tol: float = 1e-6
    max_evaluations: int = 200_000
    max_lattice: int = 729
    analytic_seed: bool = True

    def __post_init__(self):
        if self.grid_per_axis < 1 or self.multistart < 1 or self.max_evaluations < 1:
            raise ValueError("search counts must be >= 1")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.step_tol <= 0.0 or self.initial_step <= 0.0:
            raise ValueError("steps must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        return cls(**d)


@dataclass
class SearchResult:
    x: np.ndarray
    f: float
    evaluations: int
    converged: bool
    final_step: float


def pattern_search(f, x0, step, shrink, tol, max_evals, project=None) -> SearchResult:
    """Hooke-Jeeves search: coordinate exploration plus pattern moves.

    ``project`` maps trial points back into the feasible set. Returns the
    best point; ``converged`` is False if the budget ran out before the step
    fell below ``tol``.
    """
    proj = project if project is not None else (lambda v: v)
    n = len(x0)
    evals = 0

    def value(v):
        nonlocal evals
        evals += 1
        return f(v)

    def explore(base, fbase, h):
        x, fx = base, fbase
        for i in range(n):
            for sgn in (1.0, -1.0):
                if evals >= max_evals:
                    return x, fx
                trial = x.copy()
                trial[i] += sgn * h
                trial = proj(trial)
                if np.array_equal(trial, x):
                    continue
                ft = value(trial)
                if ft < fx:
                    x, fx = trial, ft
                    break
        return x, fx

    x = proj(np.array(x0, dtype=float))
    fx = value(x)
    h = float(step)
    while h >= tol and evals < max_evals:
        y, fy = explore(x, fx, h)
        if fy < fx:
            while evals < max_evals:
                xp = proj(y + (y - x))
                x, fx = y, fy
                z, fz = explore(xp, value(xp), h)
                if fz < fx:
                    y, fy = z, fz
                else:
                    break
        else:
            h *= shrink
    return SearchResult(x, float(fx), evals, h < tol, h)


@dataclass
class StageSolution:
    K: np.ndarray
    F: float
    diagnostics: dict = field(default_factory=dict)


def _seeds(objective: StageObjective, previous, cfg: SearchConfig):
    n = objective.n
    analytic = objective.analytic_seed()
    seeds = [("analytic", analytic)] if cfg.analytic_seed else []
    if previous is not None:
        seeds.append(("previous", np.asarray(previous, dtype=float)))
    radius = 4.0 * float(np.linalg.norm(analytic)) + 1.0
    k = cfg.grid_per_axis
    if k ** n <= cfg.max_lattice:
        axis = np.linspace(-radius, radius, k) if k > 1 else np.zeros(1)
        for idx, pt in enumerate(itertools.product(axis, repeat=n)):
            seeds.append((f"lattice{idx}", np.array(pt)))
    else:
        seeds.append(("origin", np.zeros(n)))
        for i in range(n):
            for sgn in (1.0, -1.0):
                e = np.zeros(n)
                e[i] = sgn * radius
                seeds.append((f"axis{i}{'+' if sgn > 0 else '-'}", e))
    return seeds


def _solve_stage(objective: StageObjective, cfg: SearchConfig, M=None, previous=None) -> StageSolution:
    constrained = M is not None and M.shape[0] > 0
    project = (lambda v: project_onto_cone(v, M)) if constrained else None
    scored = []
    for label, x in _seeds(objective, previous, cfg):
        x = project(x) if constrained else x
        scored.append((objective(x), len(scored), label, x))
    scored.sort(key=lambda r: (r[0], r[1]))

    best = None
    runs = []
    budget = cfg.max_evaluations
    for f0, _, label, x in scored[:cfg.multistart]:
        res = pattern_search(objective, x, cfg.initial_step, cfg.shrink, cfg.step_tol,
                             budget, project)
        budget = max(1, budget - res.evaluations)
        runs.append({"seed": label, "seed_value": f0, "value": res.f,
                     "evaluations": res.evaluations, "converged": res.converged})
        if best is None or res.f < best[0].f:
            best = (res, label)
    res, label = best
    diag = {
        "t": objective.t,
        "side": objective.side,
        "winner_seed": label,
        "evaluations": objective.evaluations,
        "converged": all(r["converged"] for r in runs),
        "final_step": res.final_step,
        "seeds_scored": len(scored),
        "runs": runs,
    }
    if not diag["converged"]:
        log.warning("stage %d %s: evaluation budget exhausted", objective.t, objective.side)
    return StageSolution(res.x, res.f, diag)


def solve_stage_unconstrained(t, side, coeffs, sc, gamma, curve, cfg: SearchConfig = SearchConfig(),
                              previous=None) -> StageSolution:
    """Minimise ``F_t^side`` over all of R^n."""
    obj = StageObjective(t, side, sc, coeffs, gamma, curve)
    return _solve_stage(obj, cfg, previous=previous)


def solve_stage_cone(t, side, coeffs, sc, gamma, curve, cone: ConeConstraint,
                     cfg: SearchConfig = SearchConfig(), previous=None) -> StageSolution:
    """Minimise ``F_t^side`` over the fund-vector domain of ``cone`` for that side."""
    obj = StageObjective(t, side, sc, coeffs, gamma, curve)
    M = cone.matrix(side)
    sol = _solve_stage(obj, cfg, M=M, previous=previous)
    # the origin is always admissible
    f0 = obj(np.zeros(obj.n))
    if f0 < sol.F:
        sol = StageSolution(np.zeros(obj.n), f0, {**sol.diagnostics, "winner_seed": "origin"})
    return sol


def backward_solve(market, risk: RiskAversionSpec, sc: ScenarioSet,
                   cfg: SearchConfig = SearchConfig(), cone: Optional[ConeConstraint] = None):
    """Solve every stage from ``T-1`` down to ``0``.

    ``market`` is a :class:`MarketSpec` or a ready :class:`DiscountCurve`.
    Returns ``(PolicyTable, CoefficientTable, diagnostics)``; raises
    :class:`ValidityError` if a stage yields ``b - a^2 < -1e-8``.
    """
    curve = market if isinstance(market, DiscountCurve) else discount_curve(market)
    T, n = sc.horizon, sc.n_assets
    if curve.horizon != T or risk.horizon != T:
        raise ValueError(f"horizon mismatch: curve {curve.horizon}, risk {risk.horizon}, scenarios {T}")
    if cone is not None and cone.n_assets != n:
        raise ValueError(f"cone has {cone.n_assets} columns, market has {n} assets")
    constrained = cone is not None and cone.A.shape[0] > 0

    coeffs = CoefficientTable.zeros(T)
    K = {side: np.zeros((T, n)) for side in SIDES}
    stages = []
    for t in range(T - 1, -1, -1):
        found = {}
        for side in SIDES:
            prev = K[side][t + 1] if t + 1 < T else None
            g = risk.gamma(t, side)
            if constrained:
                sol = solve_stage_cone(t, side, coeffs, sc, g, curve, cone, cfg, prev)
            else:
                sol = solve_stage_unconstrained(t, side, coeffs, sc, g, curve, cfg, prev)
            found[side] = sol
            K[side][t] = sol.K
            stages.append(sol.diagnostics | {"F": sol.F, "K": sol.K.tolist()})
        coeffs = update_coefficients(t, found["plus"].K, found["minus"].K, coeffs, sc, curve)
        for side in SIDES:
            gap = coeffs.spread(t, side)
            if gap < -VALIDITY_TOL:
                raise ValidityError(t, side, gap)
        log.info("t=%d a+=%.4f a-=%.4f b+=%.4f b-=%.4f", t, coeffs.a_plus[t], coeffs.a_minus[t],
                 coeffs.b_plus[t], coeffs.b_minus[t])

    policy = PolicyTable(K["plus"], K["minus"], curve, risk.target, constrained,
                         cone.to_dict() if constrained else None)
    diagnostics = {
        "stages": stages,
        "total_evaluations": sum(s["evaluations"] for s in stages),
        "all_converged": all(s["converged"] for s in stages),
    }
    return policy, coeffs, diagnostics
