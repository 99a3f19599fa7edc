import functools

import numpy as np
import pytest

from tcportfolio import MarketSpec, RiskAversionSpec, backward_solve, generate_scenarios
from tcportfolio.optimizer import ConeConstraint

EXAMPLE = dict(
    riskfree=[1.05, 1.05, 1.05],
    assets=("SP", "EM", "MS"),
    mean=[0.14, 0.16, 0.17],
    std=[0.185, 0.30, 0.24],
    corr=[[1.00, 0.64, 0.79], [0.64, 1.00, 0.75], [0.79, 0.75, 1.00]],
)
SOLVE_SEED = 2015
OOS_SEED = 2016


@functools.lru_cache(maxsize=None)
def example_market():
    return MarketSpec(**EXAMPLE)


@functools.lru_cache(maxsize=None)
def example_scenarios(N=20000, seed=SOLVE_SEED):
    return generate_scenarios(example_market(), N, seed)


@functools.lru_cache(maxsize=None)
def oos_scenarios(N=100_000, seed=OOS_SEED):
    return generate_scenarios(example_market(), N, seed, sampling="plain")


# every instance solved through this helper, for the suite-wide validity and
# coercivity checks
SOLVED = {}


def solve_example(gamma_plus, gamma_minus, cone=None, N=20000, seed=SOLVE_SEED):
    key = (float(gamma_plus), float(gamma_minus), cone, N, seed)
    if key not in SOLVED:
        sc = example_scenarios(N, seed)
        c = ConeConstraint.preset(cone, 3) if cone else None
        risk = RiskAversionSpec.constant(3, gamma_plus, gamma_minus, 2.0)
        policy, coeffs, diag = backward_solve(example_market(), risk, sc, cone=c)
        SOLVED[key] = (policy, coeffs, diag, risk, sc)
    return SOLVED[key]


@pytest.fixture(scope="session")
def market():
    return example_market()


@pytest.fixture(scope="session")
def baseline():
    """Three-asset example solved at gamma+ = gamma- = 1."""
    return solve_example(1.0, 1.0)


@pytest.fixture
def small_market():
    return MarketSpec(riskfree=[1.04, 1.05], mean=[0.10, 0.14], std=[0.15, 0.25],
                      corr=[[1.0, 0.3], [0.3, 1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance criteria reporting -------------------------------------------

CRITERIA = []


@pytest.fixture
def criterion():
    """Record ``(number, title, passed, detail)``; printed in the terminal summary."""

    def record(number, title, passed, detail=""):
        CRITERIA.append((number, title, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(CRITERIA, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} {status}  {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
