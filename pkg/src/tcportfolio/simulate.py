"""Monte Carlo evaluation of feedback policies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .market import MarketSpec, ScenarioSet, generate_scenarios
from .policy import PolicyTable, closed_form_terminal_moments

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
DENSITY_POINTS = 512


@dataclass
class SimulationResult:
    """Wealth paths ``(N, T+1)`` and summary statistics of terminal wealth."""

    wealth: np.ndarray = field(repr=False)
    x0: float
    mean: float
    variance: float
    stderr_mean: float
    stderr_variance: float
    quantiles: np.ndarray = field(repr=False)

    @property
    def terminal(self) -> np.ndarray:
        return self.wealth[:, -1]

    @property
    def n_paths(self) -> int:
        return self.wealth.shape[0]


def _summarize(X, x0) -> SimulationResult:
    xt = X[:, -1]
    N = xt.size
    mean = math.fsum(xt) / N
    dev = xt - mean
    var = math.fsum(dev * dev) / N
    m4 = math.fsum(dev ** 4) / N
    return SimulationResult(
        wealth=X,
        x0=float(x0),
        mean=mean,
        variance=var,
        stderr_mean=math.sqrt(var / N),
        # delta method for the sample variance
        stderr_variance=math.sqrt(max(m4 - var * var, 0.0) / N),
        quantiles=np.quantile(X, QUANTILES, axis=0).T,
    )


def simulate_on(policy, sc: ScenarioSet, x0: float) -> SimulationResult:
    """Run ``policy`` forward along the rows of ``sc`` (path ``i`` uses row ``i``)."""
    ref, k_up, k_down = policy.feedback()
    T = sc.horizon
    if len(ref) != T or k_up.shape[1] != sc.n_assets:
        raise ValueError(f"policy is for T={len(ref)}, n={k_up.shape[1]}; scenarios are "
                         f"T={T}, n={sc.n_assets}")
    X = kernels.wealth_paths(sc.excess, np.ascontiguousarray(policy.curve.rates, dtype=float),
                             np.ascontiguousarray(ref, dtype=float),
                             np.ascontiguousarray(k_up, dtype=float),
                             np.ascontiguousarray(k_down, dtype=float), float(x0))
    return _summarize(np.asarray(X), x0)


def simulate(policy, market: MarketSpec, x0: float, n_paths: int, seed: int,
             sampling: str = "plain") -> SimulationResult:
    """Simulate on a fresh scenario set drawn with ``seed``.

    Pass a seed different from the solving seed for out-of-sample results.
    """
    sc = generate_scenarios(market, n_paths, seed, sampling=sampling)
    return simulate_on(policy, sc, x0)


def tree_moments(policy, sc: ScenarioSet, x0: float, max_leaves: int = 5_000_000):
    """Exact mean and variance of terminal wealth on the full product tree of ``sc``.

    Every combination of per-period scenarios is a leaf with equal weight,
    which is the measure the solver's sample averages describe.
    """
    N, T = sc.size, sc.horizon
    if N ** T > max_leaves:
        raise ValueError(f"tree has {N ** T} leaves (limit {max_leaves})")
    ref, k_up, k_down = policy.feedback()
    x = np.array([float(x0)])
    for t in range(T):
        y = x - ref[t]
        g = np.where(y >= 0.0, (sc.period(t) @ k_up[t])[:, None], (sc.period(t) @ k_down[t])[:, None])
        x = (policy.curve.rate(t) * x + g * y).ravel(order="F")
    mean = math.fsum(x) / x.size
    return mean, math.fsum((x - mean) ** 2) / x.size


def sharpe_ratio(result: SimulationResult, x0: float, curve) -> float:
    """``(E[X_T] - rho_0 X_0) / std(X_T)``, excess over risk-free growth."""
    if result.variance <= 0.0:
        raise ValueError("terminal wealth has zero variance; Sharpe ratio undefined")
    return (result.mean - curve.growth(0) * x0) / math.sqrt(result.variance)


def threshold_probabilities(policy: PolicyTable, sc: ScenarioSet) -> np.ndarray:
    """``q_t = Pr(s_t + P_t'K_t^- > 0)`` on ``sc``.

    Starting below target, this is the probability of still being below
    the discounted target after period ``t``.
    """
    q = np.empty(policy.horizon)
    for t in range(policy.horizon):
        at_or_above = kernels.upper_fraction(sc.period(t), np.ascontiguousarray(policy.K_minus[t]),
                                             policy.curve.rate(t), -1)
        q[t] = 1.0 - at_or_above
    return q


def below_target_fraction(policy: PolicyTable, result: SimulationResult) -> np.ndarray:
    ref = policy.curve.factors * policy.target
    return (result.wealth < ref).mean(axis=0)


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * x.size ** (-0.2)


def density_estimate(samples, bandwidth: Optional[float] = None, points: int = DENSITY_POINTS,
                     chunk: int = 8192):
    """Gaussian kernel density on ``points`` grid nodes over ``[min - 3h, max + 3h]``.

    Returns ``(grid, pdf)``. The bandwidth defaults to Silverman's rule.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 100:
        raise ValueError(f"need at least 100 samples for a density estimate, got {x.size}")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 1e-12 * max(1.0, float(np.max(np.abs(x)))):
        raise ValueError("degenerate sample: zero spread, density is a point mass")
    grid = np.linspace(x.min() - 3.0 * h, x.max() + 3.0 * h, points)
    pdf = np.zeros(points)
    for start in range(0, x.size, chunk):
        u = (grid[:, None] - x[None, start:start + chunk]) / h
        pdf += np.exp(-0.5 * u * u).sum(axis=1)
    pdf /= x.size * h * math.sqrt(2.0 * math.pi)
    return grid, pdf


def count_modes(pdf, rel_tol: float = 1e-3) -> int:
    """Number of local maxima rising more than ``rel_tol * max`` above their valleys.

    The density is taken to vanish beyond the grid, so a maximum at either
    end counts.
    """
    pdf = np.asarray(pdf)
    thresh = rel_tol * pdf.max()
    modes, rising_from, peak, climbing = 0, 0.0, pdf[0], True
    for v in pdf[1:]:
        if climbing:
            if v >= peak:
                peak = v
            elif peak - v > thresh:
                if peak - rising_from > thresh:
                    modes += 1
                climbing, rising_from = False, v
        else:
            if v <= rising_from:
                rising_from = v
            elif v - rising_from > thresh:
                climbing, peak = True, v
    if climbing and peak - rising_from > thresh:
        modes += 1
    return modes


def comparison_block(result: SimulationResult, policy: PolicyTable, coeffs, x0: float) -> dict:
    """Closed-form terminal moments against Monte Carlo, with 3-sigma flags."""
    cf_mean, cf_var = closed_form_terminal_moments(policy, coeffs, x0)
    dm, dv = result.mean - cf_mean, result.variance - cf_var
    return {
        "closed_form_mean": cf_mean,
        "closed_form_variance": cf_var,
        "mc_mean": result.mean,
        "mc_variance": result.variance,
        "stderr_mean": result.stderr_mean,
        "stderr_variance": result.stderr_variance,
        "mean_z": dm / result.stderr_mean if result.stderr_mean > 0 else 0.0,
        "variance_z": dv / result.stderr_variance if result.stderr_variance > 0 else 0.0,
        "mean_within_3se": bool(abs(dm) <= 3.0 * result.stderr_mean + 1e-12),
        "variance_within_3se": bool(abs(dv) <= 3.0 * result.stderr_variance + 1e-12),
    }
