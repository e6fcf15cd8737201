import warnings

import numpy as np
import pytest

from replearn.dynamics import DynamicsConfig
from replearn.games import (GameError, NormalFormGame, PotentialSpec, lb2, pure_to_mixed,
                            random_potential_game, rosenthal_spec, verify_ordinal_potential)
from replearn.lyapunov import (LyapunovFn, PathDependenceWarning, analytic_drift,
                               check_continuous_potential, check_lyapunov_inequality,
                               gradient_component, is_epsilon_nash, pairwise_drift,
                               potential_expectation, potential_from_path_integral)
from replearn.meanfield import integrate, replicator_field

UNIFORM = ((0.5, 0.5), (0.5, 0.5))
SPLIT = ((1.0, 0.0), (0.0, 1.0))


@pytest.fixture
def g():
    return lb2()


@pytest.fixture
def phi(g):
    return rosenthal_spec(g)


def ordinal_counterexample():
    """Ordinal but not exact; the drift is positive at the uniform profile."""
    costs = np.zeros((2, 2, 2))
    costs[0] = [[0, 10], [1, 0]]
    costs[1] = [[0, 1], [1, 0]]
    table = np.array([[0.0, 1.0], [10.0, 0.0]])
    return NormalFormGame(costs, 10.0), PotentialSpec(table)


def test_potential_expectation_values(phi):
    assert potential_expectation(phi, UNIFORM) == pytest.approx(2.5)
    assert potential_expectation(phi, SPLIT) == 2.0


def test_normalized_lyapunov_has_zero_minimum(phi):
    F = LyapunovFn.from_potential(phi)
    assert F.offset == 2.0
    assert F(SPLIT) == 0.0 and F(UNIFORM) == pytest.approx(0.5)


def test_potential_expectation_is_affine_per_block(phi):
    a, b, lam = np.array([0.9, 0.1]), np.array([0.2, 0.8]), 0.3
    other = np.array([0.6, 0.4])
    mix = potential_expectation(phi, (lam * a + (1 - lam) * b, other))
    ends = (lam * potential_expectation(phi, (a, other))
            + (1 - lam) * potential_expectation(phi, (b, other)))
    assert mix == pytest.approx(ends, abs=1e-14)


def test_gradient_component_values(phi):
    assert gradient_component(phi, 0, 0, UNIFORM) == pytest.approx(2.5)
    assert gradient_component(phi, 0, 0, SPLIT) == 2.0


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    game, spec = random_potential_game((3, 2), rng)
    F = LyapunovFn.from_potential(spec)
    Q = [rng.dirichlet(np.ones(m)) for m in game.strategy_counts]
    grad = F.gradient(Q)
    h = 1e-6
    for i, q in enumerate(Q):
        for l in range(len(q)):
            up, dn = [x.copy() for x in Q], [x.copy() for x in Q]
            up[i][l] += h
            dn[i][l] -= h
            assert (F(up) - F(dn)) / (2 * h) == pytest.approx(grad[i][l], abs=1e-8)


def test_analytic_drift_example(g):
    v = analytic_drift(g, rosenthal_spec(g), ((1.0, 0.0), (0.5, 0.5)), DynamicsConfig(b=0.1))
    assert v == pytest.approx(-6.25e-3, abs=1e-15)


def test_analytic_drift_vanishes_at_nash(g, phi):
    cfg = DynamicsConfig(b=0.1)
    assert analytic_drift(g, phi, SPLIT, cfg) == 0
    assert analytic_drift(g, phi, UNIFORM, cfg) == 0


def test_drift_is_nonpositive_for_exact_games():
    rng = np.random.default_rng(4)
    game, spec = random_potential_game((2, 2), rng)
    cfg = DynamicsConfig(b=0.1, alpha=0.7, p=(0.3, 0.7))
    for _ in range(200):
        Q = tuple(rng.dirichlet(np.ones(2)) for _ in range(2))
        assert analytic_drift(game, spec, Q, cfg) <= 1e-15


def test_pairwise_forms_agree_for_exact_games():
    rng = np.random.default_rng(6)
    game, spec = random_potential_game((3, 2, 2), rng)
    cfg = DynamicsConfig(b=0.05)
    for _ in range(20):
        Q = tuple(rng.dirichlet(np.ones(m)) for m in game.strategy_counts)
        a = analytic_drift(game, spec, Q, cfg)
        assert pairwise_drift(game, spec, Q, cfg) == pytest.approx(a, abs=1e-15)
        assert pairwise_drift(game, spec, Q, cfg, squared=True) == pytest.approx(a, abs=1e-15)


def test_lyapunov_inequality_holds_on_lb2(g, phi):
    assert check_lyapunov_inequality(g, phi, samples=300).passed


def test_epsilon_nash_examples(g):
    assert is_epsilon_nash(g, SPLIT, 0.0)
    corner = pure_to_mixed(g, (0, 0))
    assert not is_epsilon_nash(g, corner, 0.25)
    assert is_epsilon_nash(g, corner, 1.0)
    with pytest.raises(GameError):
        is_epsilon_nash(g, corner, -0.1)


def test_continuous_potential_on_lb2(g, phi):
    rep = check_continuous_potential(g, phi, samples=30)
    assert rep.passed


def test_perturbed_potential_breaks_gradient_identity(g, phi):
    table = phi.table.copy()
    table[0, 0] += 0.5
    rep = check_continuous_potential(g, PotentialSpec(table), samples=10)
    assert not rep.gradient_ok and rep.symmetry_ok
    assert rep.gradient_witness is not None


def test_single_player_game_has_trivial_symmetry():
    game = NormalFormGame(np.array([[0.3, 0.9, 0.1]]), 1.0)
    rep = check_continuous_potential(game, PotentialSpec(game.costs[0]), samples=10)
    assert rep.passed and rep.symmetry_error == 0


def test_path_integral_values(g):
    assert potential_from_path_integral(g, UNIFORM, UNIFORM).value == 0
    res = potential_from_path_integral(g, UNIFORM, SPLIT, segments=400)
    assert res.value == pytest.approx(-0.5, abs=1e-9)
    assert res.path_gap <= 1e-9


def test_path_integral_warns_without_symmetry():
    c0 = np.array([[0.0, 1.0], [1.0, 0.0]])
    game = NormalFormGame(np.stack([c0, 1 - c0]), 1.0)
    with pytest.warns(PathDependenceWarning):
        potential_from_path_integral(game, UNIFORM, SPLIT, segments=50)


def test_potential_decreases_along_the_flow(g, phi):
    F = LyapunovFn.from_potential(phi)
    sol = integrate(replicator_field(g), ((0.9, 0.1), (0.6, 0.4)), 50.0, 0.05)
    vals = np.array([F(Q) for Q in sol.samples])
    assert np.all(np.diff(vals) <= 1e-14)


def test_ordinal_potential_can_have_positive_drift():
    game, spec = ordinal_counterexample()
    rep = verify_ordinal_potential(game, spec)
    assert rep.is_ordinal and not rep.is_exact
    assert analytic_drift(game, spec, UNIFORM, DynamicsConfig(b=0.1)) > 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert not check_lyapunov_inequality(game, spec, samples=200).passed
