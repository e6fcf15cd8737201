"""Finite games with exact, enumeration-based cost and potential oracles.

Players and strategies are 0-indexed. A pure profile is a tuple of strategy
indices, one per player. A mixed profile is a tuple of 1-D probability
vectors, one per player.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

DEFAULT_CAP = 10**6
COST_TOL = 1e-12
SIMPLEX_TOL = 1e-9

PureProfile = tuple[int, ...]
MixedProfile = tuple[np.ndarray, ...]


class GameError(ValueError):
    """Invalid game definition or profile."""


class EnumerationCapError(GameError):
    """Raised when exact enumeration would exceed the profile cap."""


class UndefinedCostError(GameError):
    """Raised when a game exposes only a sampler and no exact cost."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


class Game:
    """Immutable finite cost-minimisation game.

    Subclasses provide ``cost(i, s)``, the exact expected cost of player
    ``i`` under pure profile ``s``; sampler-only games raise
    :class:`UndefinedCostError` there instead.
    """

    strategy_counts: tuple[int, ...]
    cost_bound: float
    noise: float = 0.0

    @property
    def n(self) -> int:
        return len(self.strategy_counts)

    @property
    def num_profiles(self) -> int:
        return math.prod(self.strategy_counts)

    @property
    def has_exact_costs(self) -> bool:
        return True

    def cost(self, i: int, s: PureProfile) -> float:
        raise NotImplementedError

    def sample_cost(self, i: int, s: PureProfile, u: float) -> float:
        """Realised cost driven by one uniform ``u`` in [0, 1).

        Additive noise of amplitude ``noise`` (zero mean before clamping),
        clamped to ``[0, cost_bound]``.
        """
        c = self.cost(i, s)
        if self.noise:
            c = min(max(c + self.noise * (2.0 * u - 1.0), 0.0), self.cost_bound)
        return c

    def check_profile(self, s: Sequence[int]) -> PureProfile:
        s = tuple(int(x) for x in s)
        if len(s) != self.n:
            raise GameError(f"profile has {len(s)} entries, game has {self.n} players")
        for i, (x, m) in enumerate(zip(s, self.strategy_counts)):
            if not 0 <= x < m:
                raise GameError(f"player {i} strategy {x} outside [0, {m})")
        return s

    def profiles(self, cap: int = DEFAULT_CAP) -> Iterator[PureProfile]:
        require_cap(self, cap)
        return itertools.product(*(range(m) for m in self.strategy_counts))

    def cost_table(self, cap: int = DEFAULT_CAP) -> np.ndarray:
        """Array of shape ``(n, m_1, ..., m_n)`` of exact expected costs."""
        require_cap(self, cap)
        cached = getattr(self, "_table_cache", None)
        if cached is not None:
            return cached
        table = np.empty((self.n, *self.strategy_counts))
        for s in self.profiles(cap):
            for i in range(self.n):
                table[(i, *s)] = self.cost(i, s)
        table.setflags(write=False)
        object.__setattr__(self, "_table_cache", table)
        return table


def require_cap(game: Game, cap: int) -> None:
    if game.num_profiles > cap:
        raise EnumerationCapError(
            f"{game.num_profiles} pure profiles exceed enumeration cap {cap}; "
            "use a Monte Carlo estimate instead"
        )


def _check_costs(game: Game, table: np.ndarray) -> None:
    if table.size and (table.min() < 0 or table.max() > game.cost_bound):
        raise GameError(
            f"costs must lie in [0, {game.cost_bound}], got range "
            f"[{table.min()}, {table.max()}]"
        )


@dataclass(frozen=True, eq=False)
class NormalFormGame(Game):
    """Game given by an explicit cost tensor of shape ``(n, m_1, ..., m_n)``."""

    costs: np.ndarray
    cost_bound: float
    noise: float = 0.0
    strategy_counts: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        costs = _frozen(self.costs)
        if costs.ndim < 2 or costs.shape[0] != costs.ndim - 1:
            raise GameError("cost tensor must have shape (n, m_1, ..., m_n)")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "strategy_counts", tuple(costs.shape[1:]))
        object.__setattr__(self, "_table_cache", costs)
        if self.noise < 0:
            raise GameError("noise amplitude must be nonnegative")
        _check_costs(self, costs)

    def cost(self, i, s):
        return float(self.costs[(i, *s)])


@dataclass(frozen=True, eq=False)
class CongestionGame(Game):
    """Congestion game over ``n_resources`` resources.

    ``strategies[i]`` lists player ``i``'s pure strategies as resource
    subsets. ``resource_costs[r][k]`` is the cost of resource ``r`` at
    integer load ``k`` and must be nondecreasing in ``k``. With ``weights``
    the load of a resource is the total weight of its users.
    """

    n_resources: int
    strategies: tuple[tuple[frozenset[int], ...], ...]
    resource_costs: tuple[tuple[float, ...], ...]
    cost_bound: float
    weights: tuple[int, ...] | None = None
    noise: float = 0.0
    strategy_counts: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        strategies = tuple(tuple(frozenset(int(r) for r in st) for st in sset)
                           for sset in self.strategies)
        costs = tuple(tuple(float(c) for c in row) for row in self.resource_costs)
        object.__setattr__(self, "strategies", strategies)
        object.__setattr__(self, "resource_costs", costs)
        object.__setattr__(self, "strategy_counts", tuple(len(s) for s in strategies))
        if len(costs) != self.n_resources:
            raise GameError("need one cost table per resource")
        for r, row in enumerate(costs):
            if any(b < a for a, b in zip(row, row[1:])):
                raise GameError(f"cost table of resource {r} is not nondecreasing")
        for i, sset in enumerate(strategies):
            if not sset:
                raise GameError(f"player {i} has no strategies")
            for st in sset:
                if not st or not all(0 <= r < self.n_resources for r in st):
                    raise GameError(f"player {i} has an invalid resource subset {set(st)}")
        if self.weights is not None:
            w = tuple(int(x) for x in self.weights)
            if len(w) != self.n or any(x <= 0 for x in w) or any(
                x != y for x, y in zip(w, self.weights)
            ):
                raise GameError("weights must be positive integers, one per player")
            object.__setattr__(self, "weights", w)
        total = sum(self.weights) if self.weights else self.n
        for r, row in enumerate(costs):
            if len(row) <= total:
                raise GameError(
                    f"cost table of resource {r} needs entries for loads 0..{total}"
                )
        if self.noise < 0:
            raise GameError("noise amplitude must be nonnegative")
        if self.num_profiles <= DEFAULT_CAP:
            _check_costs(self, self.cost_table())

    @property
    def is_weighted(self) -> bool:
        return self.weights is not None and any(w != 1 for w in self.weights)

    def loads(self, s: PureProfile) -> list[int]:
        lam = [0] * self.n_resources
        for j, sj in enumerate(s):
            w = self.weights[j] if self.weights else 1
            for r in self.strategies[j][sj]:
                lam[r] += w
        return lam

    def cost(self, i, s):
        lam = self.loads(s)
        return float(sum(self.resource_costs[r][lam[r]] for r in self.strategies[i][s[i]]))


def load_balancing_game(
    n_players: int,
    machine_costs: Sequence[Sequence[float]],
    cost_bound: float,
    weights: Sequence[int] | None = None,
    allowed: Sequence[Sequence[int]] | None = None,
    noise: float = 0.0,
) -> CongestionGame:
    """Singleton congestion game: each player picks one machine.

    ``allowed[i]`` optionally restricts player ``i`` to a subset of machines.
    """
    m = len(machine_costs)
    if allowed is None:
        allowed = [range(m)] * n_players
    strategies = tuple(tuple(frozenset([r]) for r in a) for a in allowed)
    return CongestionGame(m, strategies, tuple(map(tuple, machine_costs)), cost_bound,
                          tuple(weights) if weights is not None else None, noise)


def lb2() -> CongestionGame:
    """Two unit-weight players, two machines, ``C_r(k) = k``, ``M = 2``."""
    return load_balancing_game(2, [[0, 1, 2], [0, 1, 2]], cost_bound=2.0)


@dataclass(frozen=True, eq=False)
class TaskAllocationGame(Game):
    """Task allocation on ``n_machines`` machines under SPT or LPT scheduling.

    A task's cost is its completion time: the total weight of co-assigned
    tasks processed no later than it, times the machine's slowdown factor.
    SPT processes lighter tasks first, LPT heavier first; equal weights are
    ordered by player index.
    """

    n_machines: int
    weights: tuple[float, ...]
    policy: str
    cost_bound: float
    machine_factors: tuple[float, ...] | None = None
    noise: float = 0.0
    strategy_counts: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        policy = self.policy.upper()
        if policy not in ("SPT", "LPT"):
            raise GameError(f"unknown policy {self.policy!r}; expected SPT or LPT")
        object.__setattr__(self, "policy", policy)
        w = tuple(float(x) for x in self.weights)
        if not w or any(x <= 0 for x in w):
            raise GameError("weights must be positive")
        object.__setattr__(self, "weights", w)
        f = self.machine_factors
        f = tuple(float(x) for x in f) if f is not None else (1.0,) * self.n_machines
        if len(f) != self.n_machines or any(x <= 0 for x in f):
            raise GameError("need one positive slowdown factor per machine")
        object.__setattr__(self, "machine_factors", f)
        object.__setattr__(self, "strategy_counts", (self.n_machines,) * len(w))
        if self.num_profiles <= DEFAULT_CAP:
            _check_costs(self, self.cost_table())

    def priority_order(self) -> list[int]:
        """Players sorted by processing priority, first processed first."""
        if self.policy == "SPT":
            return sorted(range(self.n), key=lambda j: (self.weights[j], j))
        return sorted(range(self.n), key=lambda j: (-self.weights[j], j))

    def _before(self, j: int, i: int) -> bool:
        wj, wi = self.weights[j], self.weights[i]
        if wj == wi:
            return j <= i
        return wj < wi if self.policy == "SPT" else wj > wi

    def cost(self, i, s):
        r = s[i]
        done = sum(self.weights[j] for j in range(self.n) if s[j] == r and self._before(j, i))
        return float(done * self.machine_factors[r])


@dataclass(frozen=True, eq=False)
class SampledGame(Game):
    """Game known only through a cost sampler ``sampler(i, s, u) -> cost``."""

    strategy_counts: tuple[int, ...]
    cost_bound: float
    sampler: Callable[[int, PureProfile, float], float]

    @property
    def has_exact_costs(self) -> bool:
        return False

    def cost(self, i, s):
        raise UndefinedCostError("this game exposes only a cost sampler")

    def sample_cost(self, i, s, u):
        return float(self.sampler(i, s, u))


# -- mixed profiles ---------------------------------------------------------

def as_profile(game: Game, Q, tol: float = SIMPLEX_TOL) -> MixedProfile:
    """Validate and convert nested sequences to a mixed profile."""
    Q = tuple(np.asarray(q, dtype=float) for q in Q)
    if len(Q) != game.n:
        raise GameError(f"profile has {len(Q)} blocks, game has {game.n} players")
    for i, (q, m) in enumerate(zip(Q, game.strategy_counts)):
        if q.shape != (m,):
            raise GameError(f"player {i} block has shape {q.shape}, expected ({m},)")
        if q.min() < -tol or q.max() > 1 + tol or abs(q.sum() - 1) > tol:
            raise GameError(f"player {i} block {q} is not a probability vector")
    return Q


def pure_to_mixed(game: Game, s: Sequence[int]) -> MixedProfile:
    s = game.check_profile(s)
    return tuple(np.eye(m)[x] for x, m in zip(s, game.strategy_counts))


def uniform_profile(game: Game) -> MixedProfile:
    return tuple(np.full(m, 1.0 / m) for m in game.strategy_counts)


def random_interior_profile(game: Game, rng: np.random.Generator) -> MixedProfile:
    return tuple(rng.dirichlet(np.ones(m)) for m in game.strategy_counts)


def expectation(tensor: np.ndarray, Q: Sequence[np.ndarray], skip: int | None = None) -> np.ndarray:
    """Contract a tensor over player axes with each player's distribution.

    Axis ``k`` of ``tensor`` belongs to player ``k``. The axis of player
    ``skip`` is left uncontracted.
    """
    out = tensor
    for j in reversed(range(len(Q))):
        if j != skip:
            out = np.tensordot(out, Q[j], axes=([j], [0]))
    return out


# -- exact cost oracles -----------------------------------------------------

def expected_cost(game: Game, i: int, s: Sequence[int]) -> float:
    """Exact expected cost of player ``i`` under pure profile ``s``."""
    return game.cost(i, game.check_profile(s))


def pinned_costs(game: Game, i: int, Q: Sequence[np.ndarray], cap: int = DEFAULT_CAP) -> np.ndarray:
    """Vector of ``c_i(e_l, Q_{-i})`` over player ``i``'s strategies."""
    if not game.has_exact_costs:
        raise UndefinedCostError("this game exposes only a cost sampler")
    return expectation(game.cost_table(cap)[i], Q, skip=i)


def mixed_expected_cost(game: Game, i: int, strategy, Q: Sequence[np.ndarray],
                        cap: int = DEFAULT_CAP) -> float:
    """Exact ``c_i(strategy, Q_{-i})``.

    ``strategy`` is a pure strategy index or a probability vector over
    player ``i``'s strategies.
    """
    c = pinned_costs(game, i, Q, cap)
    if np.ndim(strategy) == 0:
        return float(c[int(strategy)])
    return float(np.dot(c, np.asarray(strategy, dtype=float)))


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float


def mixed_expected_cost_mc(game: Game, i: int, strategy, Q: Sequence[np.ndarray],
                           samples: int, rng: np.random.Generator) -> Estimate:
    """Monte Carlo estimate of ``c_i(strategy, Q_{-i})`` through the sampler."""
    if samples < 2:
        raise GameError("need at least two samples")
    Q = list(Q)
    if np.ndim(strategy) == 0:
        Q[i] = np.eye(game.strategy_counts[i])[int(strategy)]
    else:
        Q[i] = np.asarray(strategy, dtype=float)
    draws = np.empty(samples)
    for k in range(samples):
        s = tuple(int(rng.choice(len(q), p=q)) for q in Q)
        draws[k] = game.sample_cost(i, s, rng.random())
    return Estimate(float(draws.mean()), float(draws.std(ddof=1) / math.sqrt(samples)))


def enumerate_pure_nash(game: Game, cap: int = DEFAULT_CAP, tol: float = COST_TOL) -> list[PureProfile]:
    """All pure profiles where no unilateral pure deviation is strictly cheaper."""
    table = game.cost_table(cap)
    ok = np.ones(game.strategy_counts, dtype=bool)
    for i in range(game.n):
        best = table[i].min(axis=i, keepdims=True)
        ok &= table[i] <= best + tol
    return [tuple(int(x) for x in s) for s in np.argwhere(ok)]


# -- potentials -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """A pure-profile potential as a table of shape ``(m_1, ..., m_n)``."""

    table: np.ndarray
    source: str = "table"

    def __post_init__(self):
        t = _frozen(self.table)
        if not np.all(np.isfinite(t)):
            raise GameError("potential values must be finite")
        object.__setattr__(self, "table", t)

    def __call__(self, s: Sequence[int]) -> float:
        return float(self.table[tuple(s)])

    def scaled(self, factor: float) -> "PotentialSpec":
        return PotentialSpec(self.table * factor, f"{self.source}*{factor:g}")


def rosenthal_potential(game: CongestionGame, s: Sequence[int]) -> float:
    """``sum_r sum_{t=1}^{load_r} C_r(t)`` for a unit-weight congestion game."""
    if not isinstance(game, CongestionGame):
        raise GameError("Rosenthal potential needs a congestion game")
    if game.is_weighted:
        raise GameError("weighted congestion games have no Rosenthal potential")
    lam = game.loads(game.check_profile(s))
    return float(sum(sum(game.resource_costs[r][1:lam[r] + 1]) for r in range(game.n_resources)))


def rosenthal_spec(game: CongestionGame, cap: int = DEFAULT_CAP) -> PotentialSpec:
    require_cap(game, cap)
    table = np.empty(game.strategy_counts)
    for s in game.profiles(cap):
        table[s] = rosenthal_potential(game, s)
    return PotentialSpec(table, "rosenthal")


def lexicographic_spec(game: TaskAllocationGame, cap: int = DEFAULT_CAP) -> PotentialSpec:
    """Base-``K`` encoding of completion times listed in priority order.

    A task's completion time depends only on tasks processed before it, so
    a deviation leaves every higher-priority digit unchanged and moves the
    deviator's own digit by its cost change. Costs must be integers;
    ``K`` is one more than the largest completion time.
    """
    table = game.cost_table(cap)
    if not np.allclose(table, np.round(table)):
        raise GameError("lexicographic encoding needs integer completion times")
    K = int(round(table.max())) + 1
    order = game.priority_order()
    phi = np.zeros(game.strategy_counts)
    for rank, j in enumerate(order):
        phi += np.round(table[j]) * float(K) ** (game.n - 1 - rank)
    return PotentialSpec(phi, "lexicographic")


@dataclass(frozen=True)
class Deviation:
    player: int
    profile: PureProfile
    alternative: PureProfile
    cost_diff: float
    potential_diff: float


@dataclass(frozen=True)
class OrdinalReport:
    is_ordinal: bool
    is_exact: bool
    witness: Deviation | None
    exact_witness: Deviation | None


def verify_ordinal_potential(game: Game, phi: PotentialSpec, cap: int = DEFAULT_CAP,
                             tol: float = COST_TOL) -> OrdinalReport:
    """Check every unilateral pure deviation against ``phi``.

    Ordinal: cost difference and potential difference have the same sign
    (within ``tol``) for every deviation. Exact: the differences are equal.
    """
    table = game.cost_table(cap)
    if phi.table.shape != tuple(game.strategy_counts):
        raise GameError("potential table shape does not match the game")
    scale = max(1.0, float(np.abs(phi.table).max()))
    witness = exact_witness = None
    for i in range(game.n):
        c = np.moveaxis(table[i], i, 0)
        f = np.moveaxis(phi.table, i, 0)
        dc = c[:, None] - c[None, :]
        df = f[:, None] - f[None, :]
        sign_bad = np.sign(np.where(np.abs(dc) > tol, dc, 0)) != np.sign(
            np.where(np.abs(df) > tol * scale, df, 0))
        exact_bad = np.abs(dc - df) > tol * scale
        for bad, slot in ((sign_bad, "witness"), (exact_bad, "exact_witness")):
            if (witness if slot == "witness" else exact_witness) is None and bad.any():
                a, b, *rest = (int(x) for x in np.argwhere(bad)[0])
                s = tuple(rest[:i]) + (a,) + tuple(rest[i:])
                t = tuple(rest[:i]) + (b,) + tuple(rest[i:])
                dev = Deviation(i, s, t, float(dc[(a, b, *rest)]), float(df[(a, b, *rest)]))
                if slot == "witness":
                    witness = dev
                else:
                    exact_witness = dev
    return OrdinalReport(witness is None, exact_witness is None, witness, exact_witness)


def random_potential_game(counts: Sequence[int], rng: np.random.Generator,
                          cost_bound: float = 1.0) -> tuple[NormalFormGame, PotentialSpec]:
    """Exact potential game ``c_i(s) = phi(s) + d_i(s_-i)`` with costs in ``[0, cost_bound)``.

    ``phi`` and the dummy terms ``d_i`` are drawn uniformly, then everything
    is rescaled by one common factor so the differences stay exact.
    """
    counts = tuple(int(m) for m in counts)
    n = len(counts)
    phi = rng.random(counts)
    costs = np.empty((n, *counts))
    for i in range(n):
        shape = list(counts)
        shape[i] = 1
        costs[i] = phi + rng.random(shape)
    scale = 0.999 * cost_bound / costs.max()
    return NormalFormGame(costs * scale, cost_bound), PotentialSpec(phi * scale, "table")
