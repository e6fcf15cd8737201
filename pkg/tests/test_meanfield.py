import numpy as np
import pytest

from replearn.games import (NormalFormGame, enumerate_pure_nash, lb2, pure_to_mixed,
                            random_potential_game)
from replearn.meanfield import (StepUnstableError, VectorField, classify_point, flatten, integrate,
                                is_nash, replicator_field, replicator_rhs, rk4_step, tangency_error)


@pytest.fixture
def g():
    return lb2()


def test_corners_are_stationary(g):
    for s in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        assert not flatten(replicator_rhs(g, pure_to_mixed(g, s))).any()


def test_uniform_is_stationary(g):
    assert np.abs(flatten(replicator_rhs(g, ((0.5, 0.5), (0.5, 0.5))))).max() == 0


def test_rhs_example(g):
    out = replicator_rhs(g, ((1.0, 0.0), (0.5, 0.5)), p=(0.5, 0.5))
    np.testing.assert_allclose(out[1], [-0.0625, 0.0625], atol=1e-15)
    assert not out[0].any()


def test_unscaled_field_is_M_times_larger(g):
    Q = ((0.7, 0.3), (0.2, 0.8))
    np.testing.assert_allclose(flatten(replicator_rhs(g, Q, scaled=False)),
                               2.0 * flatten(replicator_rhs(g, Q)))


def test_field_is_tangent():
    rng = np.random.default_rng(3)
    game, _ = random_potential_game((3, 2, 4), rng)
    f = replicator_field(game)
    for _ in range(50):
        Q = tuple(rng.dirichlet(np.ones(m)) for m in game.strategy_counts)
        assert tangency_error(f, Q) <= 1e-12


def test_rk4_fixed_points(g):
    zero = VectorField((2, 2), lambda Q: tuple(np.zeros_like(q) for q in Q))
    Q = (np.array([0.3, 0.7]), np.array([0.6, 0.4]))
    for a, b in zip(rk4_step(zero, Q, 0.1), Q):
        np.testing.assert_array_equal(a, b)
    corner = pure_to_mixed(g, (1, 1))
    for a, b in zip(rk4_step(replicator_field(g), corner, 0.5), corner):
        np.testing.assert_array_equal(a, b)


def test_rk4_is_fourth_order(g):
    f = replicator_field(g)
    Q0 = ((0.8, 0.2), (0.35, 0.65))
    T = 4.0
    ref = flatten(integrate(f, Q0, T, 0.0125).final)
    e1 = np.abs(flatten(integrate(f, Q0, T, 0.2).final) - ref).max()
    e2 = np.abs(flatten(integrate(f, Q0, T, 0.1).final) - ref).max()
    assert 12 < e1 / e2 < 20


def test_large_step_is_rejected(g):
    f = replicator_field(g, scaled=False)
    with pytest.raises(StepUnstableError):
        rk4_step(f, ((0.999, 0.001), (0.001, 0.999)), 50.0)


def test_integrate_zero_horizon(g):
    sol = integrate(replicator_field(g), ((0.9, 0.1), (0.9, 0.1)), 0.0, 0.01)
    assert len(sol.samples) == 1 and sol.times.tolist() == [0.0]


def test_integrate_partial_last_step(g):
    sol = integrate(replicator_field(g), ((0.9, 0.1), (0.6, 0.4)), 0.25, 0.1)
    assert sol.times.tolist() == pytest.approx([0.0, 0.1, 0.2, 0.25])


def test_diagonal_start_settles_at_mixed_equilibrium(g):
    # on the diagonal the two players stay identical, so the flow cannot pick a corner
    sol = integrate(replicator_field(g), ((0.9, 0.1), (0.9, 0.1)), 200.0, 0.01)
    assert sol.residual < 1e-6
    assert is_nash(g, sol.final, tol=1e-6)
    for q in sol.final:
        np.testing.assert_allclose(q, [0.5, 0.5], atol=1e-3)


def test_off_diagonal_start_reaches_pure_nash(g):
    sol = integrate(replicator_field(g), ((0.9, 0.1), (0.6, 0.4)), 200.0, 0.01)
    assert sol.residual < 1e-6
    np.testing.assert_allclose(flatten(sol.final), [1, 0, 0, 1], atol=1e-3)
    for Q in sol.samples:
        for q in Q:
            assert q.min() >= 0 and abs(q.sum() - 1) <= 1e-9


def test_classification_examples(g):
    f = replicator_field(g)
    c = classify_point(f, g, pure_to_mixed(g, (0, 1)))
    assert c.stationary and c.nash
    c = classify_point(f, g, pure_to_mixed(g, (0, 0)))
    assert c.stationary and not c.nash and c.stationary_non_nash
    c = classify_point(f, g, ((0.5, 0.5), (0.5, 0.5)), eps=0.0)
    assert c.stationary and c.nash and c.epsilon_nash


def test_nash_profiles_are_stationary():
    rng = np.random.default_rng(7)
    for _ in range(20):
        game, _ = random_potential_game((2, 3), rng)
        f = replicator_field(game)
        for s in enumerate_pure_nash(game):
            assert f.norm(pure_to_mixed(game, s)) <= 1e-9


def test_equal_support_costs_give_zero_field():
    # player 0's support {0, 2} faces equal costs; player 1 is pure
    costs = np.zeros((2, 3, 2))
    costs[0, :, 0] = [0.4, 0.9, 0.4]
    costs[1] = 0.5
    game = NormalFormGame(costs, 1.0)
    f = replicator_field(game)
    assert f.norm(((0.3, 0.0, 0.7), (1.0, 0.0))) <= 1e-15


def test_unstable_corner_is_left(g):
    d = 1e-3
    sol = integrate(replicator_field(g), ((1 - d, d), (1 - d, d)), 100.0, 0.01)
    dist = max(abs(Q[0][0] - 1.0) for Q in sol.samples)
    assert dist > 0.1
