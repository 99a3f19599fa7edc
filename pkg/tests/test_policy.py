import numpy as np
import pytest

from tcportfolio.market import MarketSpec, discount_curve, generate_scenarios, scenario_moments
from tcportfolio.optimizer import backward_solve
from tcportfolio.policy import (PolicyTable, PrecommittedPolicy, WealthState, action,
                                closed_form_terminal_moments, precommitted_policy)
from tcportfolio.recursion import RiskAversionSpec
from tcportfolio.simulate import simulate_on, tree_moments


@pytest.fixture
def table():
    curve = discount_curve([1.05, 1.05])
    return PolicyTable([[0.5, 0.2], [0.4, 0.1]], [[-0.6, -0.1], [-0.3, 0.2]], curve, target=2.0)


def test_action_switches_on_the_discounted_target(table):
    ref = table.reference(0)
    assert ref == pytest.approx(2.0 / 1.05**2)
    np.testing.assert_allclose(action(table, WealthState(0, ref + 0.5)), 0.5 * np.array([0.5, 0.2]))
    np.testing.assert_allclose(action(table, WealthState(0, ref - 0.5)), -0.5 * np.array([-0.6, -0.1]))
    np.testing.assert_array_equal(action(table, WealthState(1, table.reference(1))), np.zeros(2))
    with pytest.raises(IndexError):
        action(table, WealthState(2, 1.0))


@pytest.mark.parametrize("c", [0.1, 1.0, 7.5])
@pytest.mark.parametrize("y", [-0.8, 0.3])
def test_action_is_positively_homogeneous_in_surplus(table, c, y):
    ref = table.reference(1)
    u1 = action(table, WealthState(1, ref + y))
    uc = action(table, WealthState(1, ref + c * y))
    np.testing.assert_allclose(uc, c * u1, rtol=1e-12)


def test_state_surplus(table):
    assert WealthState(1, 3.0).surplus(table) == pytest.approx(3.0 - 2.0 / 1.05)


def test_closed_form_at_the_target_is_riskless(baseline):
    policy, coeffs, _, _, _ = baseline
    x0 = policy.reference(0)
    mean, var = closed_form_terminal_moments(policy, coeffs, x0)
    assert mean == pytest.approx(2.0) and var == 0.0


def test_closed_form_uses_the_initial_side(baseline):
    policy, coeffs, _, _, _ = baseline
    rho0 = policy.curve.growth(0)
    for x0 in (1.0, 3.0):
        y0 = x0 - policy.reference(0)
        side = "plus" if y0 > 0 else "minus"
        mean, var = closed_form_terminal_moments(policy, coeffs, x0)
        assert mean == pytest.approx(rho0 * x0 + coeffs.a(0, side) * y0)
        assert var == pytest.approx(coeffs.spread(0, side) * y0**2)


def test_json_round_trip(tmp_path, baseline):
    policy = baseline[0]
    path = tmp_path / "policy.json"
    policy.save(path)
    again = PolicyTable.load(path)
    np.testing.assert_array_equal(again.K_plus, policy.K_plus)
    np.testing.assert_array_equal(again.K_minus, policy.K_minus)
    np.testing.assert_array_equal(again.curve.factors, policy.curve.factors)
    assert again.to_dict() == policy.to_dict()


def test_table_validation():
    curve = discount_curve([1.05, 1.05])
    with pytest.raises(ValueError, match="differ"):
        PolicyTable(np.zeros((2, 2)), np.zeros((2, 3)), curve, 2.0)
    with pytest.raises(ValueError, match="horizon"):
        PolicyTable(np.zeros((3, 2)), np.zeros((3, 2)), curve, 2.0)


# -- pre-committed baseline ----------------------------------------------------

@pytest.fixture(scope="module")
def two_period():
    m = MarketSpec(riskfree=[1.04, 1.05], mean=[0.10, 0.14], std=[0.15, 0.25],
                   corr=[[1.0, 0.3], [0.3, 1.0]])
    return m, generate_scenarios(m, 6, 21, sampling="plain")


def test_precommitted_zero_gamma_is_riskless(two_period):
    market, sc = two_period
    pc = precommitted_policy(market, sc, 0.0, 1.0)
    assert pc.lambda0 == pytest.approx(discount_curve(market).growth(0))
    mean, var = tree_moments(pc, sc, 1.0)
    assert mean == pytest.approx(1.04 * 1.05) and var == pytest.approx(0.0, abs=1e-24)


def test_precommitted_single_period_matches_time_consistent():
    m = MarketSpec(riskfree=[1.05], mean=[0.10, 0.14], std=[0.15, 0.25],
                   corr=[[1.0, 0.3], [0.3, 1.0]])
    sc = generate_scenarios(m, 2000, 5)
    gamma, x0 = 1.2, 3.0
    tc, _, _ = backward_solve(m, RiskAversionSpec.constant(1, gamma, gamma, 2.0), sc)
    y0 = x0 - tc.reference(0)
    pc = PrecommittedPolicy(m, sc, gamma * y0, x0)
    np.testing.assert_allclose(pc.action(0, x0), action(tc, WealthState(0, x0)), atol=1e-5)
    mean, _, cov = scenario_moments(sc, 0)
    np.testing.assert_allclose(pc.action(0, x0), 0.5 * gamma * y0 * np.linalg.solve(cov, mean),
                               rtol=1e-10)


def test_precommitted_multiplier_bounds(two_period):
    market, sc = two_period
    pc = PrecommittedPolicy(market, sc, 1.5, 1.0)
    curve = discount_curve(market)
    assert np.all((pc.factors > 0) & (pc.factors <= 1))
    assert pc.lambda0 > curve.growth(0) * 1.0
    for x in (0.5, 1.0, 2.0):
        assert pc.lambda_at(1, x) > curve.growth(1) * x


def test_precommitted_is_time_inconsistent(two_period):
    market, sc = two_period
    pc = PrecommittedPolicy(market, sc, 1.5, 1.0)
    x1 = simulate_on(pc, sc, 1.0).wealth[:, 1]
    # re-solving at t = 1 from the realised wealth moves the multiplier
    gaps = np.array([pc.lambda_at(1, x) - pc.lambda0 for x in x1])
    assert np.max(np.abs(gaps)) > 1e-3


def test_precommitted_feedback_shapes(two_period):
    market, sc = two_period
    pc = PrecommittedPolicy(market, sc, 1.0, 1.0)
    ref, up, down = pc.feedback()
    assert ref.shape == (2,) and up.shape == (2, 2) and up is down
    assert pc.horizon == 2
