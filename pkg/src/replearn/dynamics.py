"""Distributed stochastic learning with replicator-like updates.

Each round every player samples a pure strategy from its mixed strategy,
one player is selected with probability ``p_i`` and moves its own vector;
everyone else keeps theirs. The selected player either moves toward the
strategy it just played with weight ``b * gamma(cost)`` (probability
``alpha``) or toward a uniformly chosen strategy with weight ``b**2``.

Randomness is consumed as ``n + 4`` uniforms per round, in this order:
one per player for strategy sampling, then player selection, branch,
uniform strategy index, cost noise. The single-trial ``step`` and the
batched :class:`BatchRunner` share one kernel and one layout, so a trial
replays bit-identically through either path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .games import Game, GameError, MixedProfile, PureProfile, as_profile

RENORM_TOL = 1e-12


@dataclass(frozen=True)
class GammaSpec:
    """Decreasing map from cost to movement weight in [0, 1].

    ``form="affine"`` is ``(M - x) / M``. ``form="table"`` interpolates
    linearly through ``points`` (sorted by cost, nonincreasing values).
    """

    M: float
    form: str = "affine"
    points: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.M <= 0:
            raise GameError("cost bound M must be positive")
        if self.form == "table":
            if not self.points or len(self.points) < 2:
                raise GameError("table gamma needs at least two points")
            xs, ys = zip(*self.points)
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise GameError("gamma table costs must be strictly increasing")
            if any(b > a for a, b in zip(ys, ys[1:])) or min(ys) < 0 or max(ys) > 1:
                raise GameError("gamma table values must be nonincreasing within [0, 1]")
        elif self.form != "affine":
            raise GameError(f"unknown gamma form {self.form!r}")

    @property
    def affine(self) -> bool:
        return self.form == "affine"


def gamma_eval(spec: GammaSpec, cost):
    c = np.asarray(cost, dtype=float)
    if np.any(c < 0) or np.any(c > spec.M):
        raise GameError(f"cost outside [0, {spec.M}]")
    if spec.affine:
        out = (spec.M - c) / spec.M
    else:
        xs, ys = zip(*spec.points)
        out = np.interp(c, xs, ys)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class DynamicsConfig:
    """Step size ``b``, replicator weight ``alpha`` and selection law ``p``.

    ``alpha == 1`` is the plain replicator-like rule; ``alpha < 1`` the
    perturbed one. ``ob_term(i, q_i)`` is an optional bounded perturbation
    added to the selected player's update; moves it would push outside
    the simplex are rejected. ``None`` means zero.
    """

    b: float
    alpha: float = 1.0
    p: tuple[float, ...] | None = None
    gamma: GammaSpec | None = None
    ob_term: Callable[[int, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not 0 < self.b <= 1:
            raise GameError("step size b must lie in (0, 1]")
        if not 0 < self.alpha <= 1:
            raise GameError("alpha must lie in (0, 1]")
        if self.p is not None:
            p = tuple(float(x) for x in self.p)
            if min(p) < 0 or abs(sum(p) - 1) > 1e-12:
                raise GameError("player selection law p must be a probability vector")
            object.__setattr__(self, "p", p)

    @property
    def mode(self) -> str:
        return "plain" if self.alpha == 1 else "perturbed"

    def selection(self, n: int) -> np.ndarray:
        if self.p is None:
            return np.full(n, 1.0 / n)
        if len(self.p) != n:
            raise GameError(f"p has {len(self.p)} entries for {n} players")
        return np.array(self.p)

    def gamma_for(self, game: Game) -> GammaSpec:
        g = self.gamma or GammaSpec(game.cost_bound)
        if g.M < game.cost_bound:
            raise GameError("gamma cost bound is below the game's cost bound")
        return g


@dataclass(frozen=True)
class RoundRecord:
    profile: PureProfile
    player: int
    cost: float
    branch: str  # "replicator" or "uniform"
    uniform_index: int


@dataclass
class LearnerState:
    Q: MixedProfile
    t: int
    rng: np.random.Generator


def trial_streams(seed: int | np.random.SeedSequence, trials: int) -> list[np.random.Generator]:
    """One independent generator per trial, spawned from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(trials)]


def initial_state(game: Game, Q, seed: int = 0) -> LearnerState:
    """State for trial 0 of ``seed``; matches :class:`BatchRunner` trial 0."""
    return LearnerState(as_profile(game, Q), 0, trial_streams(seed, 1)[0])


def round_width(game: Game) -> int:
    return game.n + 4


def _pick(cum: np.ndarray, u: float) -> int:
    return int(np.sum(cum[:-1] <= u))


def sample_round(state: LearnerState, game: Game, config: DynamicsConfig,
                 u: np.ndarray | None = None) -> RoundRecord:
    """Draw one round: sampled profile, selected player, its cost, branch."""
    if u is None:
        u = state.rng.random(round_width(game))
    n = game.n
    s = tuple(_pick(np.cumsum(q), u[k]) for k, q in enumerate(state.Q))
    i = _pick(np.cumsum(config.selection(n)), u[n])
    m = game.strategy_counts[i]
    j = min(int(u[n + 2] * m), m - 1)
    branch = "replicator" if u[n + 1] < config.alpha else "uniform"
    cost = game.sample_cost(i, s, u[n + 3])
    return RoundRecord(s, i, cost, branch, j)


def replicator_increment(rnd: RoundRecord, q_i: np.ndarray, config: DynamicsConfig,
                         gamma: GammaSpec) -> np.ndarray:
    """``b * gamma(cost) * (e_s - q_i)`` for the selected player."""
    w = config.b * gamma_eval(gamma, rnd.cost)
    e = np.zeros_like(q_i)
    e[rnd.profile[rnd.player]] = 1.0
    return w * (e - q_i)


def perturbed_increment(rnd: RoundRecord, q_i: np.ndarray, config: DynamicsConfig,
                        gamma: GammaSpec) -> np.ndarray:
    """Replicator move, or ``b**2 * (e_j - q_i)`` on the uniform branch."""
    if rnd.branch == "replicator":
        return replicator_increment(rnd, q_i, config, gamma)
    w = config.b * config.b
    e = np.zeros_like(q_i)
    e[rnd.uniform_index] = 1.0
    return w * (e - q_i)


def _apply(q: np.ndarray, delta: np.ndarray) -> np.ndarray:
    new = q + delta
    total = new.sum()
    if abs(total - 1.0) > RENORM_TOL:
        new = new / total
    return new


def _with_ob(config: DynamicsConfig, i: int, q_old: np.ndarray, new: np.ndarray) -> np.ndarray:
    extra = config.b * np.asarray(config.ob_term(i, q_old), dtype=float)
    cand = new + extra
    if cand.min() < 0 or abs(cand.sum() - 1.0) > 1e-9:
        return new
    return cand


def step(state: LearnerState, game: Game, config: DynamicsConfig) -> LearnerState:
    """Advance one round; only the selected player's vector changes."""
    rnd = sample_round(state, game, config)
    i = rnd.player
    q_i = state.Q[i]
    delta = perturbed_increment(rnd, q_i, config, config.gamma_for(game))
    new = _apply(q_i, delta)
    if config.ob_term is not None:
        new = _with_ob(config, i, q_i, new)
    Q = state.Q[:i] + (new,) + state.Q[i + 1:]
    return LearnerState(Q, state.t + 1, state.rng)


@dataclass
class Trajectory:
    steps: list[int] = field(default_factory=list)
    profiles: list[MixedProfile] = field(default_factory=list)
    values: list[float | None] = field(default_factory=list)
    max_sum_error: float = 0.0  # largest |sum(q_i) - 1| seen after any step
    final: LearnerState | None = None

    def __len__(self):
        return len(self.steps)


def _fast_path_ok(game: Game, config: DynamicsConfig) -> bool:
    # The float kernel reproduces numpy's sequential sums only for short vectors.
    return (config.ob_term is None and game.has_exact_costs
            and max(game.strategy_counts) < 8)


def _float_kernel(game: Game, config: DynamicsConfig):
    """Per-round update on lists of Python floats, same arithmetic as ``step``."""
    n = game.n
    counts = game.strategy_counts
    table = game.cost_table().reshape(n, -1).tolist()
    radix = [int(np.prod(counts[k + 1:])) for k in range(n)]
    pcum = np.cumsum(config.selection(n)).tolist()[:-1]
    gamma = config.gamma_for(game)
    M, affine = gamma.M, gamma.affine
    b, alpha, noise, bound = config.b, config.alpha, game.noise, game.cost_bound

    def pick(cum_src, u):
        k, acc = 0, 0.0
        for x in cum_src[:-1]:
            acc += x
            if acc <= u:
                k += 1
        return k

    def advance(Q, u):
        idx = 0
        s = []
        for k in range(n):
            sk = pick(Q[k], u[k])
            s.append(sk)
            idx += sk * radix[k]
        i = 0
        for x in pcum:
            if x <= u[n]:
                i += 1
        q = Q[i]
        m = counts[i]
        if u[n + 1] < alpha:
            c = table[i][idx]
            if noise:
                c = min(max(c + noise * (2.0 * u[n + 3] - 1.0), 0.0), bound)
            if not 0.0 <= c <= M:
                raise GameError(f"cost outside [0, {M}]")
            w = b * ((M - c) / M if affine else gamma_eval(gamma, c))
            target = s[i]
        else:
            w = b * b
            target = min(int(u[n + 2] * m), m - 1)
        new = [x + w * ((1.0 if k == target else 0.0) - x) for k, x in enumerate(q)]
        total = 0.0
        for x in new:
            total += x
        if abs(total - 1.0) > RENORM_TOL:
            new = [x / total for x in new]
            total = 0.0
            for x in new:
                total += x
        Q[i] = new
        return abs(total - 1.0)

    return advance


def run(state: LearnerState, game: Game, config: DynamicsConfig, steps: int,
        stride: int = 1, recorder: Callable | None = None,
        lyapunov: Callable[[MixedProfile], float] | None = None) -> Trajectory:
    """Apply ``step`` repeatedly, recording every ``stride`` steps.

    ``recorder(t, Q, F)`` is called at each record; ``F`` is ``None``
    without a ``lyapunov`` function. Small exact-cost games go through a
    scalar kernel that is bit-identical to ``step`` but much faster. The
    returned state is available as ``traj.final``.
    """
    if steps < 0 or stride < 1:
        raise ValueError("steps must be >= 0 and stride >= 1")
    traj = Trajectory()

    def record(t, Q):
        F = lyapunov(Q) if lyapunov is not None else None
        traj.steps.append(t)
        traj.profiles.append(Q)
        traj.values.append(F)
        if recorder is not None:
            recorder(t, Q, F)

    record(state.t, state.Q)
    if _fast_path_ok(game, config):
        advance = _float_kernel(game, config)
        Q = [q.tolist() for q in state.Q]
        width = round_width(game)
        done, worst = 0, 0.0
        while done < steps:
            block = state.rng.random((min(256, steps - done), width)).tolist()
            for u in block:
                err = advance(Q, u)
                if err > worst:
                    worst = err
                done += 1
                if done % stride == 0:
                    record(state.t + done, tuple(np.array(q) for q in Q))
        traj.max_sum_error = worst
        state = LearnerState(tuple(np.array(q) for q in Q), state.t + steps, state.rng)
    else:
        for k in range(1, steps + 1):
            state = step(state, game, config)
            traj.max_sum_error = max(traj.max_sum_error,
                                     max(abs(float(q.sum()) - 1.0) for q in state.Q))
            if k % stride == 0:
                record(state.t, state.Q)
    traj.final = state
    return traj


class BatchRunner:
    """Advance many independent trials in lockstep.

    Profiles live in a padded array ``Q`` of shape ``(trials, n, m_max)``.
    Trial ``k`` draws its uniforms from its own stream, in blocks of
    ``chunk`` rounds, so its path does not depend on the batch it runs in.
    Trials can be frozen with :meth:`freeze`; frozen trials stop consuming
    randomness.
    """

    def __init__(self, game: Game, config: DynamicsConfig, Q0, trials: int,
                 seed: int | np.random.SeedSequence = 0, chunk: int = 256):
        Q0 = as_profile(game, Q0)
        self.game, self.config = game, config
        self.n = game.n
        self.counts = np.array(game.strategy_counts)
        self.m_max = int(self.counts.max())
        self.trials = trials
        self.Q = np.zeros((trials, self.n, self.m_max))
        for i, q in enumerate(Q0):
            self.Q[:, i, :len(q)] = q
        self.t = 0
        self.active = np.arange(trials)
        self.rngs = trial_streams(seed, trials)
        self.chunk = chunk
        self.width = round_width(game)
        self._buf = np.empty((trials, chunk, self.width))
        self._mask = np.arange(self.m_max - 1)[None, :] < (self.counts[:, None] - 1)
        self._pcum = np.cumsum(config.selection(self.n))[:-1]
        self._gamma = config.gamma_for(game)
        if game.has_exact_costs:
            self._table = game.cost_table().reshape(self.n, -1)
            self._radix = np.array([int(np.prod(self.counts[k + 1:])) for k in range(self.n)])
        else:
            self._table = None

    def freeze(self, idx) -> None:
        self.active = np.setdiff1d(self.active, idx)

    def profile(self, k: int) -> MixedProfile:
        return tuple(self.Q[k, i, :m].copy() for i, m in enumerate(self.counts))

    def step(self) -> None:
        act = self.active
        if act.size == 0:
            self.t += 1
            return
        pos = self.t % self.chunk
        if pos == 0:
            for k in act:
                self._buf[k] = self.rngs[k].random((self.chunk, self.width))
        U = self._buf[act, pos]
        Q = self.Q[act]
        n, b, cfg = self.n, self.config.b, self.config
        T = act.size
        rows = np.arange(T)

        cum = np.cumsum(Q, axis=2)[..., :-1]
        s = ((cum <= U[:, :n, None]) & self._mask).sum(axis=2)
        i = (self._pcum[None, :] <= U[:, n:n + 1]).sum(axis=1)
        m_i = self.counts[i]
        j = np.minimum((U[:, n + 2] * m_i).astype(int), m_i - 1)
        replic = U[:, n + 1] < cfg.alpha

        if self._table is not None:
            cost = self._table[i, s @ self._radix]
            if self.game.noise:
                cost = np.clip(cost + self.game.noise * (2.0 * U[:, n + 3] - 1.0),
                               0.0, self.game.cost_bound)
        else:
            cost = np.array([self.game.sample_cost(int(i[r]), tuple(int(x) for x in s[r]),
                                                   U[r, n + 3]) for r in range(T)])

        target = np.where(replic, s[rows, i], j)
        w = np.where(replic, b * gamma_eval(self._gamma, cost), b * b)
        q_sel = Q[rows, i]
        e = np.zeros_like(q_sel)
        e[rows, target] = 1.0
        new = q_sel + w[:, None] * (e - q_sel)
        total = new.sum(axis=1)
        fix = np.abs(total - 1.0) > RENORM_TOL
        if fix.any():
            new[fix] /= total[fix, None]
        if cfg.ob_term is not None:
            for r in range(T):
                m = m_i[r]
                new[r, :m] = _with_ob(cfg, int(i[r]), q_sel[r, :m], new[r, :m])
        Q[rows, i] = new
        self.Q[act] = Q
        self.t += 1
