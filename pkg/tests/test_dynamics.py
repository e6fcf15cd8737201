import numpy as np
import pytest

from replearn.dynamics import (BatchRunner, DynamicsConfig, GammaSpec, RoundRecord, _float_kernel,
                               gamma_eval, initial_state, perturbed_increment,
                               replicator_increment, round_width, run, sample_round, step)
from replearn.games import GameError, lb2, load_balancing_game, pure_to_mixed
from replearn.oracle import exact_expected_update

G2 = GammaSpec(2.0)


@pytest.fixture
def g():
    return lb2()


def test_affine_gamma_values():
    assert gamma_eval(G2, 0.0) == 1.0
    assert gamma_eval(G2, 1.0) == 0.5
    assert gamma_eval(G2, 2.0 - 1e-12) == pytest.approx(0.0, abs=1e-11)
    with pytest.raises(GameError):
        gamma_eval(G2, 2.5)


def test_table_gamma_interpolates_and_validates():
    spec = GammaSpec(2.0, "table", ((0.0, 1.0), (1.0, 0.8), (2.0, 0.0)))
    assert gamma_eval(spec, 0.5) == pytest.approx(0.9)
    with pytest.raises(GameError):
        GammaSpec(2.0, "table", ((0.0, 0.2), (1.0, 0.8)))


def test_config_validation():
    with pytest.raises(GameError):
        DynamicsConfig(b=0.0)
    with pytest.raises(GameError):
        DynamicsConfig(b=0.1, alpha=1.5)
    with pytest.raises(GameError):
        DynamicsConfig(b=0.1, p=(0.3, 0.3))
    assert DynamicsConfig(b=0.1).mode == "plain"
    assert DynamicsConfig(b=0.1, alpha=0.5).mode == "perturbed"


def test_corner_sampling_is_deterministic(g):
    st = initial_state(g, pure_to_mixed(g, (1, 0)), seed=2)
    for _ in range(20):
        assert sample_round(st, g, DynamicsConfig(b=0.1)).profile == (1, 0)


def test_point_mass_selection(g):
    st = initial_state(g, ((0.5, 0.5), (0.5, 0.5)), seed=2)
    cfg = DynamicsConfig(b=0.1, p=(1.0, 0.0))
    assert all(sample_round(st, g, cfg).player == 0 for _ in range(50))


def test_profile_frequency_on_uniform(g):
    st = initial_state(g, ((0.5, 0.5), (0.5, 0.5)), seed=9)
    cfg = DynamicsConfig(b=0.1)
    N = 100_000
    U = st.rng.random((N, round_width(g)))
    hits = sum(sample_round(st, g, cfg, u).profile == (0, 0) for u in U)
    sigma = np.sqrt(0.25 * 0.75 / N)
    assert abs(hits / N - 0.25) <= 3 * sigma


def _round(i, s, cost, branch="replicator", j=0):
    return RoundRecord(s, i, cost, branch, j)


def test_replicator_increment_examples():
    cfg = DynamicsConfig(b=0.1)
    q = np.array([0.5, 0.5])
    np.testing.assert_allclose(replicator_increment(_round(0, (0, 0), 1.0), q, cfg, G2),
                               [0.025, -0.025])
    assert not replicator_increment(_round(0, (0, 0), 2.0), q, cfg, G2).any()
    assert not replicator_increment(_round(0, (0, 0), 0.3), np.array([1.0, 0.0]), cfg, G2).any()


def test_perturbed_increment_examples():
    cfg = DynamicsConfig(b=0.1, alpha=0.5)
    np.testing.assert_allclose(
        perturbed_increment(_round(0, (0, 0), 1.0, "uniform", 1), np.array([1.0, 0.0]), cfg, G2),
        [-0.01, 0.01])
    np.testing.assert_allclose(
        perturbed_increment(_round(0, (0, 0), 1.0, "uniform", 0), np.array([0.5, 0.5]), cfg, G2),
        [0.005, -0.005])
    rnd = _round(0, (1, 0), 0.4)
    q = np.array([0.3, 0.7])
    np.testing.assert_array_equal(perturbed_increment(rnd, q, cfg, G2),
                                  replicator_increment(rnd, q, DynamicsConfig(b=0.1), G2))


def test_larger_cost_moves_less():
    cfg = DynamicsConfig(b=0.2)
    q = np.array([0.2, 0.5, 0.3])
    lo = replicator_increment(_round(0, (1,), 0.4), q, cfg, G2)
    hi = replicator_increment(_round(0, (1,), 1.3), q, cfg, G2)
    assert np.all(np.abs(hi) < np.abs(lo))


def test_step_changes_one_player_only():
    game = load_balancing_game(3, [[0, 1, 2, 3]] * 3, 3.0)
    st = initial_state(game, [[0.2, 0.3, 0.5]] * 3, seed=4)
    cfg = DynamicsConfig(b=0.3, alpha=0.7)
    for _ in range(500):
        new = step(st, game, cfg)
        changed = [i for i in range(3) if not np.array_equal(new.Q[i], st.Q[i])]
        assert len(changed) <= 1
        for q in new.Q:
            assert q.min() >= 0 and abs(q.sum() - 1) <= 1e-9
        st = new


def test_run_record_counts(g):
    st = initial_state(g, ((0.9, 0.1), (0.9, 0.1)))
    cfg = DynamicsConfig(b=0.01)
    assert len(run(st, g, cfg, 0)) == 1
    assert len(run(st, g, cfg, 100, stride=10)) == 11
    seen = []
    run(st, g, cfg, 20, stride=5, recorder=lambda t, Q, F: seen.append((t, F)),
        lyapunov=lambda Q: 1.0)
    assert seen == [(0, 1.0), (5, 1.0), (10, 1.0), (15, 1.0), (20, 1.0)]


@pytest.mark.parametrize("alpha,noise", [(1.0, 0.0), (0.6, 0.0), (0.8, 0.4)])
def test_fast_run_matches_step(alpha, noise):
    game = load_balancing_game(2, [[0, 1, 2], [0, 1.5, 2]], 2.0, allowed=[[0, 1], [0, 1]],
                               noise=noise)
    cfg = DynamicsConfig(b=0.05, alpha=alpha, p=(0.3, 0.7))
    st = initial_state(game, ((0.6, 0.4), (0.2, 0.8)), seed=5)
    ref = st
    for _ in range(700):
        ref = step(ref, game, cfg)
    fast = run(initial_state(game, ((0.6, 0.4), (0.2, 0.8)), seed=5), game, cfg, 700).final
    for a, b in zip(ref.Q, fast.Q):
        np.testing.assert_array_equal(a, b)
    # the generator is left in the same position
    assert ref.rng.random() == fast.rng.random()


def test_batch_trial_is_independent_of_batch_size(g):
    cfg = DynamicsConfig(b=0.05, alpha=0.8)
    a = BatchRunner(g, cfg, ((0.7, 0.3), (0.4, 0.6)), 2, seed=3)
    b = BatchRunner(g, cfg, ((0.7, 0.3), (0.4, 0.6)), 5, seed=3)
    for _ in range(600):
        a.step()
        b.step()
    np.testing.assert_array_equal(a.Q[1], b.Q[1])


def test_frozen_trials_stop_moving(g):
    br = BatchRunner(g, DynamicsConfig(b=0.1), ((0.5, 0.5), (0.5, 0.5)), 4, seed=1)
    br.step()
    br.freeze([2])
    held = br.Q[2].copy()
    for _ in range(50):
        br.step()
    np.testing.assert_array_equal(br.Q[2], held)


def test_empirical_one_step_mean_matches_exact():
    game = load_balancing_game(2, [[0, 0.3, 1.0], [0, 0.6, 0.9]], 1.0)
    cfg = DynamicsConfig(b=0.2, alpha=0.7, p=(0.4, 0.6))
    Q = ((0.35, 0.65), (0.8, 0.2))
    advance = _float_kernel(game, cfg)
    N = 1_000_000
    U = np.random.default_rng(12).random((N, round_width(game))).tolist()
    deltas = np.empty((N, 4))
    base = np.concatenate(Q)
    for k, u in enumerate(U):
        cur = [list(q) for q in Q]
        advance(cur, u)
        deltas[k] = np.concatenate(cur) - base
    mean, se = deltas.mean(axis=0), deltas.std(axis=0, ddof=1) / np.sqrt(N)
    exact = np.concatenate(exact_expected_update(game, Q, cfg))
    assert np.all(np.abs(mean - exact) <= 4 * se + 1e-15)


def test_symmetric_start_converges_to_pure_nash(g):
    br = BatchRunner(g, DynamicsConfig(b=0.01), ((0.9, 0.1), (0.9, 0.1)), 200, seed=8)
    for _ in range(100_000):
        br.step()
    corners = [np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[0.0, 1.0], [1.0, 0.0]])]
    close = [min(np.abs(br.Q[k] - c).max() for c in corners) <= 0.05 for k in range(200)]
    assert np.mean(close) >= 0.95
