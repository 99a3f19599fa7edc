"""Market description, lognormal calibration and scenario generation.

Every expectation in the solver and the simulator is a sample average over
a fixed :class:`ScenarioSet`. Scenario sets are pure functions of
``(spec, N, seed, sampling)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._rng import standard_normals

SAMPLING_MODES = ("moment_matched", "antithetic", "plain")


class MarketError(ValueError):
    """Invalid market data or degenerate scenario moments."""


@dataclass(frozen=True)
class MarketSpec:
    """Risk-free rates and the risky-return model.

    ``riskfree`` holds gross per-period rates ``s_t``. The return model is
    either moment data (``mean``, ``std``, ``corr``) or ``raw_scenarios``,
    an array of excess returns shaped ``(T, N, n)``. ``moments`` chooses how
    the moment data are read: ``"arithmetic"`` for simple-return moments
    (moment-matched to a lognormal) or ``"log"`` for log-return moments.
    """

    riskfree: np.ndarray
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None
    corr: Optional[np.ndarray] = None
    assets: tuple = ()
    moments: str = "arithmetic"
    raw_scenarios: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.riskfree, dtype=float))
        object.__setattr__(self, "riskfree", s)
        if s.ndim != 1 or s.size < 1:
            raise MarketError("horizon must be at least one period")
        if np.any(s <= 1.0):
            raise MarketError(f"risk-free gross rates must exceed 1, got {s.tolist()}")
        if self.moments not in ("arithmetic", "log"):
            raise MarketError(f"unknown moment convention {self.moments!r}")

        if self.raw_scenarios is not None:
            raw = np.asarray(self.raw_scenarios, dtype=float)
            if raw.ndim != 3 or raw.shape[0] != s.size:
                raise MarketError(f"raw scenarios must be shaped (T={s.size}, N, n), got {raw.shape}")
            raw = np.ascontiguousarray(raw)
            raw.setflags(write=False)
            object.__setattr__(self, "raw_scenarios", raw)
            n = raw.shape[2]
        else:
            if self.mean is None or self.std is None or self.corr is None:
                raise MarketError("moment data (mean, std, corr) or raw scenarios required")
            mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
            std = np.atleast_1d(np.asarray(self.std, dtype=float))
            corr = np.atleast_2d(np.asarray(self.corr, dtype=float))
            n = mean.size
            if std.shape != (n,) or corr.shape != (n, n):
                raise MarketError("mean, std and corr dimensions disagree")
            _check_correlation(corr)
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "std", std)
            object.__setattr__(self, "corr", corr)
        if not self.assets:
            object.__setattr__(self, "assets", tuple(f"asset{i}" for i in range(n)))
        elif len(self.assets) != n:
            raise MarketError(f"{len(self.assets)} asset names for {n} assets")
        else:
            object.__setattr__(self, "assets", tuple(self.assets))

    @property
    def horizon(self) -> int:
        return int(self.riskfree.size)

    @property
    def n_assets(self) -> int:
        if self.raw_scenarios is not None:
            return int(self.raw_scenarios.shape[2])
        return int(self.mean.size)

    def lognormal_params(self):
        """``(mu, Sigma)`` of the log gross return."""
        if self.raw_scenarios is not None:
            raise MarketError("market is defined by raw scenarios; no lognormal model")
        if self.moments == "log":
            return self.mean.copy(), np.outer(self.std, self.std) * self.corr
        return calibrate_lognormal(self.mean, self.std, self.corr)


def _check_correlation(corr):
    if not np.allclose(corr, corr.T, atol=1e-12):
        raise MarketError("correlation matrix is not symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
        raise MarketError("correlation matrix must have unit diagonal")
    try:
        np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        raise MarketError("correlation matrix is not positive definite") from None


def calibrate_lognormal(mean, std, corr):
    """Moment-match a multivariate lognormal to simple-return moments.

    Returns ``(mu, Sigma)`` such that ``G = exp(N(mu, Sigma))`` has
    ``E[G] = 1 + mean`` and ``Cov(G) = diag(std) corr diag(std)``.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    std = np.atleast_1d(np.asarray(std, dtype=float))
    corr = np.atleast_2d(np.asarray(corr, dtype=float))
    gross = 1.0 + mean
    if np.any(gross <= 0.0):
        raise MarketError("gross mean return must be positive")
    if np.any(std < 0.0):
        raise MarketError("standard deviations must be nonnegative")
    cov = np.outer(std, std) * corr
    sigma = np.log1p(cov / np.outer(gross, gross))
    sigma = 0.5 * (sigma + sigma.T)
    mu = np.log(gross) - 0.5 * np.diag(sigma)
    if np.any(std > 0.0):
        active = std > 0.0
        try:
            np.linalg.cholesky(sigma[np.ix_(active, active)])
        except np.linalg.LinAlgError:
            raise MarketError("implied log-return covariance is not positive definite") from None
    return mu, sigma


def lognormal_moments(mu, sigma):
    """Exact ``(mean, std, corr)`` of simple returns ``exp(N(mu, Sigma)) - 1``."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    gross = np.exp(mu + 0.5 * np.diag(sigma))
    cov = np.outer(gross, gross) * np.expm1(sigma)
    std = np.sqrt(np.diag(cov))
    corr = cov / np.outer(std, std)
    return gross - 1.0, std, corr


@dataclass(frozen=True)
class ScenarioSet:
    """Excess-return samples ``P_t^(i) = e_t^(i) - s_t``, shaped ``(T, N, n)``."""

    excess: np.ndarray = field(repr=False)
    seed: Optional[int] = None
    sampling: str = "raw"

    def __post_init__(self):
        P = np.ascontiguousarray(self.excess, dtype=float)
        if P.ndim != 3:
            raise MarketError(f"scenario array must be 3-D, got shape {P.shape}")
        if P.shape[1] < 2:
            raise MarketError("at least two scenarios per period are required")
        if P.flags.writeable:
            P = P.copy()
            P.setflags(write=False)
        object.__setattr__(self, "excess", P)

    @property
    def horizon(self) -> int:
        return self.excess.shape[0]

    @property
    def size(self) -> int:
        return self.excess.shape[1]

    @property
    def n_assets(self) -> int:
        return self.excess.shape[2]

    def period(self, t: int) -> np.ndarray:
        return self.excess[t]


def _normal_block(seed, t, N, n, sampling):
    if sampling == "plain":
        return standard_normals(seed, t, 0, N, n)
    half = standard_normals(seed, t, 0, (N + 1) // 2, n)
    Z = np.vstack([half, -half])[:N]
    if sampling == "antithetic":
        return Z
    # moment_matched: exact zero mean and identity covariance of the block
    Z = Z - Z.mean(axis=0)
    if N <= n:
        return Z
    L = np.linalg.cholesky(Z.T @ Z / N)
    return np.linalg.solve(L, Z.T).T


def _matrix_root(sigma):
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        # singular (e.g. a deterministic asset): symmetric square root
        w, V = np.linalg.eigh(sigma)
        return V * np.sqrt(np.clip(w, 0.0, None))


def generate_scenarios(spec: MarketSpec, N: int, seed: int,
                       sampling: str = "moment_matched") -> ScenarioSet:
    """Draw ``N`` excess-return scenarios for every period.

    Period ``t`` uses its own counter stream keyed by ``(seed, t)``, so the
    periods are independent and each is reproducible on its own. A spec
    carrying raw scenarios is passed through unchanged.
    """
    if spec.raw_scenarios is not None:
        return ScenarioSet(spec.raw_scenarios, seed=None, sampling="raw")
    if N < 2:
        raise MarketError("need N >= 2 scenarios (covariance undefined otherwise)")
    if sampling not in SAMPLING_MODES:
        raise MarketError(f"unknown sampling mode {sampling!r}; choose from {SAMPLING_MODES}")
    mu, sigma = spec.lognormal_params()
    n = spec.n_assets
    L = _matrix_root(sigma)
    out = np.empty((spec.horizon, N, n))
    for t in range(spec.horizon):
        Z = _normal_block(seed, t, N, n, sampling)
        out[t] = np.exp(mu + Z @ L.T) - spec.riskfree[t]
    return ScenarioSet(out, seed=int(seed), sampling=sampling)


@dataclass(frozen=True)
class DiscountCurve:
    """``factors[t]`` is the discount factor from ``t`` to ``T``; ``factors[T] = 1``.

    ``rates`` keeps the gross per-period rates the factors were built from.
    """

    factors: np.ndarray
    rates: np.ndarray

    @property
    def horizon(self) -> int:
        return self.factors.size - 1

    def rate(self, t: int) -> float:
        return float(self.rates[t])

    def growth(self, t: int) -> float:
        """Risk-free growth ``rho_t`` from ``t`` to ``T`` (inverse of the factor)."""
        return 1.0 / float(self.factors[t])

    def target_at(self, t: int, target: float) -> float:
        return float(self.factors[t]) * target


def discount_curve(spec) -> DiscountCurve:
    """Build the curve from a :class:`MarketSpec` or a plain sequence of rates."""
    s = spec.riskfree if isinstance(spec, MarketSpec) else np.asarray(spec, dtype=float)
    s = np.atleast_1d(s) if np.ndim(s) else np.asarray([float(s)])
    T = s.size
    factors = np.ones(T + 1)
    for t in range(T - 1, -1, -1):
        factors[t] = factors[t + 1] / s[t]
    return DiscountCurve(factors, s.copy())


def scenario_moments(sc: ScenarioSet, t: int):
    """Sample ``(E[P], E[PP'], Cov(P))`` for period ``t``.

    Raises :class:`MarketError` if the sample covariance is not positive
    definite.
    """
    if not 0 <= t < sc.horizon:
        raise IndexError(f"period {t} outside 0..{sc.horizon - 1}")
    P = sc.period(t)
    N = P.shape[0]
    mean = P.mean(axis=0)
    second = P.T @ P / N
    cov = second - np.outer(mean, mean)
    cov = 0.5 * (cov + cov.T)
    eig = np.linalg.eigvalsh(cov)
    if eig[0] <= 1e-12 * max(1.0, eig[-1]):
        raise MarketError(f"sample covariance of period {t} is not positive definite "
                          f"(smallest eigenvalue {eig[0]:.3e})")
    return mean, second, cov


def read_scenario_csv(path, horizon: Optional[int] = None) -> np.ndarray:
    """Read excess returns from CSV rows ``period, sample, P_1, ..., P_n``.

    A header row is optional. Returns an array shaped ``(T, N, n)``.
    """
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                if rows:
                    raise MarketError(f"{path}: non-numeric row {rec}") from None
                continue  # header
    if not rows:
        raise MarketError(f"{path}: no scenario rows")
    width = {len(r) for r in rows}
    if len(width) != 1 or width.pop() < 3:
        raise MarketError(f"{path}: rows must have equal length >= 3")
    data = np.asarray(rows)
    periods = data[:, 0].astype(int)
    T = int(periods.max()) + 1 if horizon is None else horizon
    counts = np.bincount(periods, minlength=T)
    if counts.size != T or np.any(counts != counts[0]) or counts[0] < 2:
        raise MarketError(f"{path}: every period needs the same number (>= 2) of samples")
    out = np.empty((T, counts[0], data.shape[1] - 2))
    for t in range(T):
        block = data[periods == t]
        out[t] = block[np.argsort(block[:, 1], kind="stable"), 2:]
    return out


def write_scenario_csv(path, sc: ScenarioSet, assets: Sequence[str] = ()):
    names = list(assets) or [f"asset{i}" for i in range(sc.n_assets)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["period", "sample", *names])
        for t in range(sc.horizon):
            for i, row in enumerate(sc.period(t)):
                w.writerow([t, i, *(repr(float(v)) for v in row)])
