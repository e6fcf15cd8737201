import numpy as np
import pytest

from replearn.dynamics import DynamicsConfig, GammaSpec
from replearn.games import (GameError, NormalFormGame, PotentialSpec, lb2, load_balancing_game,
                            pure_to_mixed, rosenthal_spec)
from replearn.lyapunov import LyapunovFn
from replearn.oracle import (DriftPreconditionError, enumerate_outcomes, escape_fractions,
                             exact_expected_update, exact_one_step_drift, hitting_time_trials,
                             level_escape_probability, loglog_slope, mean_clipped_uniform,
                             ode_deviation)


@pytest.fixture
def g():
    return lb2()


@pytest.fixture
def phi(g):
    return rosenthal_spec(g)


def test_corner_has_zero_expected_update(g):
    for s in [(0, 0), (1, 0)]:
        for d in exact_expected_update(g, pure_to_mixed(g, s), DynamicsConfig(b=0.1)):
            assert not d.any()


def test_uniform_has_zero_expected_update(g):
    for d in exact_expected_update(g, ((0.5, 0.5), (0.5, 0.5)), DynamicsConfig(b=0.1)):
        assert np.abs(d).max() == 0


def test_outcome_probabilities_sum_to_one(g):
    cfg = DynamicsConfig(b=0.1, alpha=0.6, p=(0.2, 0.8))
    total = sum(o.prob for o in enumerate_outcomes(g, ((0.3, 0.7), (0.9, 0.1)), cfg))
    assert total == pytest.approx(1.0, abs=1e-15)


def test_drift_report_example(g, phi):
    rep = exact_one_step_drift(g, phi, ((1.0, 0.0), (0.5, 0.5)), DynamicsConfig(b=0.1))
    assert rep.formula == pytest.approx(-6.25e-3, abs=1e-15)
    assert rep.identity_holds
    assert abs(rep.residual) <= 1e-15
    assert rep.prob_total == pytest.approx(1.0)


def test_uniform_branch_leaves_quadratic_residual_at_nash(g, phi):
    Q = pure_to_mixed(g, (0, 1))
    coeffs = []
    for b in (0.1, 0.05, 0.025):
        rep = exact_one_step_drift(g, phi, Q, DynamicsConfig(b=b, alpha=0.5))
        assert rep.formula == 0 and rep.exact > 0
        coeffs.append(rep.b2_coefficient)
    np.testing.assert_allclose(coeffs, coeffs[0], rtol=1e-10)


def test_identity_fails_for_non_multiaffine_function(g):
    F = LyapunovFn(lambda Q: float(Q[0][0] * Q[0][1]),
                   lambda Q: (np.array([Q[0][1], Q[0][0]]), np.zeros(2)), multiaffine=False)
    rep = exact_one_step_drift(g, F, ((0.4, 0.6), (0.7, 0.3)), DynamicsConfig(b=0.2))
    assert not rep.identity_holds


def test_mean_clipped_uniform_matches_monte_carlo():
    u = np.random.default_rng(0).random(400_000)
    for c, a in [(0.2, 0.5), (1.8, 0.4), (1.0, 0.3), (0.0, 2.0)]:
        mc = np.clip(c + a * (2 * u - 1), 0, 2).mean()
        assert mean_clipped_uniform(c, a, 2.0) == pytest.approx(mc, abs=3e-3)


def test_noise_with_table_gamma_has_no_exact_oracle():
    game = load_balancing_game(2, [[0, 1, 2]] * 2, 2.0, noise=0.3)
    gamma = GammaSpec(2.0, "table", ((0.0, 1.0), (1.0, 0.6), (2.0, 0.0)))
    with pytest.raises(GameError):
        exact_expected_update(game, ((0.5, 0.5), (0.5, 0.5)), DynamicsConfig(b=0.1, gamma=gamma))


def test_nonzero_perturbation_term_is_rejected(g):
    cfg = DynamicsConfig(b=0.1, ob_term=lambda i, q: np.zeros_like(q))
    with pytest.raises(GameError):
        exact_expected_update(g, ((0.5, 0.5), (0.5, 0.5)), cfg)


def test_loglog_slope_recovers_power():
    x = np.array([0.1, 0.05, 0.025])
    assert loglog_slope(x, 3 * x**2) == pytest.approx(2.0)


def test_hitting_time_is_zero_at_an_equilibrium(g, phi):
    res = hitting_time_trials(g, phi, pure_to_mixed(g, (0, 1)), 0.1, trials=5, seed=1,
                              resamples=50)
    assert res.mean == 0 and res.censored == 0


def test_hitting_times_are_finite_from_a_corner(g, phi):
    res = hitting_time_trials(g, phi, pure_to_mixed(g, (0, 0)), 0.4, trials=40, seed=3,
                              max_steps=20_000, resamples=100)
    assert res.censored == 0 and res.taus.min() > 0
    assert res.ci[0] <= res.mean <= res.ci[1]


def test_hitting_times_reject_plain_rule(g, phi):
    with pytest.raises(GameError):
        hitting_time_trials(g, phi, pure_to_mixed(g, (0, 0)), 0.4, alpha=1.0)


def test_escape_with_lambda_one_is_trivial(g, phi):
    r = level_escape_probability(g, phi, ((0.95, 0.05), (0.05, 0.95)), 1.0, 0.05, trials=20,
                                 horizon=100)
    assert r.fraction == 1.0 and r.passed


def test_escape_fractions_are_monotone(g, phi):
    rs = escape_fractions(g, phi, ((0.9, 0.1), (0.1, 0.9)), [1.5, 3.0], 0.05, trials=200,
                          horizon=2000, seed=2)
    assert rs[0].fraction >= rs[1].fraction
    assert all(r.passed for r in rs)


def test_positive_drift_above_start_level_is_refused():
    costs = np.zeros((2, 2, 2))
    costs[0] = [[0, 10], [1, 0]]
    costs[1] = [[0, 1], [1, 0]]
    game = NormalFormGame(costs, 10.0)
    spec = PotentialSpec(np.array([[0.0, 1.0], [10.0, 0.0]]))
    with pytest.raises(DriftPreconditionError):
        escape_fractions(game, spec, ((0.9, 0.1), (0.9, 0.1)), [2.0], 0.1, trials=10,
                         horizon=10)


def test_deviation_at_time_zero_is_zero(g):
    rows = ode_deviation(g, ((0.9, 0.1), (0.6, 0.4)), [0.02], 0.0, trials=5)
    assert rows[0].mean == 0


def test_deviation_requires_dividing_reference_step(g):
    with pytest.raises(ValueError):
        ode_deviation(g, ((0.9, 0.1), (0.6, 0.4)), [0.03], 1.0, h=0.02)


def test_deviation_shrinks_with_step(g):
    rows = ode_deviation(g, ((0.9, 0.1), (0.6, 0.4)), [0.08, 0.01], 2.0, trials=60, seed=4)
    assert rows[0].mean > rows[1].mean


def test_trial_mean_deviation_is_first_order():
    game = NormalFormGame(np.array([[0.2, 1.0, 0.6]]), 1.0)
    bs = (0.04, 0.02, 0.01, 0.005)
    rows = ode_deviation(game, ((0.2, 0.5, 0.3),), bs, 2.0, trials=20_000, seed=0,
                         statistic="sup-mean")
    assert loglog_slope(bs, [r.mean for r in rows]) == pytest.approx(1.0, abs=0.5)
