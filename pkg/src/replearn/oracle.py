"""Brute-force ground truth for one round, and Monte Carlo martingale checks.

Exact oracles enumerate every outcome of a round (pure profile, selected
player, branch, uniform index) with its probability. They need exact
expected costs and the affine gamma, for which ``E[gamma(r) | s]`` equals
``gamma(E[r | s])``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .dynamics import BatchRunner, DynamicsConfig, gamma_eval
from .games import (DEFAULT_CAP, EnumerationCapError, Game, GameError, MixedProfile,
                    PotentialSpec, as_profile, random_interior_profile)
from .lyapunov import LyapunovFn, analytic_drift, as_lyapunov, is_epsilon_nash
from .meanfield import integrate, replicator_field

IDENTITY_TOL = 1e-12


class DriftPreconditionError(RuntimeError):
    """The one-step drift is positive where the level-set bound needs it nonpositive."""


class AllCensoredWarning(UserWarning):
    """No trial reached the target before the step limit."""


def mean_clipped_uniform(c: float, a: float, M: float) -> float:
    """``E[clip(c + a * (2U - 1), 0, M)]`` for ``U`` uniform on [0, 1]."""
    if a == 0:
        return min(max(c, 0.0), M)

    def H(x):
        if x <= 0:
            return 0.0
        if x <= M:
            return 0.5 * x * x
        return 0.5 * M * M + M * (x - M)

    return (H(c + a) - H(c - a)) / (2 * a)


@dataclass(frozen=True)
class Outcome:
    prob: float
    player: int
    delta: np.ndarray
    branch: str


def _expected_gamma(game: Game, config: DynamicsConfig, i: int, s) -> float:
    gamma = config.gamma_for(game)
    c = game.cost(i, s)
    if game.noise:
        if not gamma.affine:
            raise GameError("noisy costs with a non-affine gamma have no exact expectation; "
                            "use Monte Carlo estimates")
        c = mean_clipped_uniform(c, game.noise, game.cost_bound)
    return gamma_eval(gamma, c)


def enumerate_outcomes(game: Game, Q, config: DynamicsConfig,
                       cap: int = DEFAULT_CAP) -> Iterator[Outcome]:
    """Every round outcome with its probability and the mover's increment."""
    if config.ob_term is not None:
        raise GameError("exact enumeration assumes a zero perturbation term")
    Q = as_profile(game, Q)
    count = game.num_profiles * sum(1 + m for m in game.strategy_counts)
    if count > cap:
        raise EnumerationCapError(f"{count} round outcomes exceed enumeration cap {cap}")
    p = config.selection(game.n)
    b, alpha = config.b, config.alpha
    for s in itertools.product(*(range(m) for m in game.strategy_counts)):
        ps = math.prod(Q[j][x] for j, x in enumerate(s))
        for i in range(game.n):
            q = Q[i]
            e = np.zeros_like(q)
            e[s[i]] = 1.0
            w = b * _expected_gamma(game, config, i, s)
            yield Outcome(ps * p[i] * alpha, i, w * (e - q), "replicator")
            if alpha < 1:
                m = len(q)
                for j in range(m):
                    e = np.zeros_like(q)
                    e[j] = 1.0
                    yield Outcome(ps * p[i] * (1 - alpha) / m, i, b * b * (e - q), "uniform")


def exact_expected_update(game: Game, Q, config: DynamicsConfig,
                          cap: int = DEFAULT_CAP) -> MixedProfile:
    """``E[Delta q | Q]`` summed over all round outcomes."""
    Q = as_profile(game, Q)
    out = [np.zeros_like(q) for q in Q]
    for o in enumerate_outcomes(game, Q, config, cap):
        out[o.player] += o.prob * o.delta
    return tuple(out)


@dataclass
class DriftReport:
    b: float
    exact: float
    gradient_form: float
    formula: float
    branches: dict[str, float] = field(default_factory=dict)
    prob_total: float = 1.0

    @property
    def identity_gap(self) -> float:
        return abs(self.exact - self.gradient_form)

    @property
    def identity_holds(self) -> bool:
        return self.identity_gap <= IDENTITY_TOL

    @property
    def residual(self) -> float:
        return self.exact - self.formula

    @property
    def b2_coefficient(self) -> float:
        return self.residual / self.b**2


def exact_one_step_drift(game: Game, F, Q, config: DynamicsConfig,
                         cap: int = DEFAULT_CAP) -> DriftReport:
    """Exact ``E[F(Q') - F(Q) | Q]`` next to its gradient and closed forms."""
    F = as_lyapunov(F)
    Q = as_profile(game, Q)
    F0 = F(Q)
    branches = {"replicator": 0.0, "uniform": 0.0}
    mean = [np.zeros_like(q) for q in Q]
    total_p = 0.0
    for o in enumerate_outcomes(game, Q, config, cap):
        i = o.player
        succ = Q[:i] + (Q[i] + o.delta,) + Q[i + 1:]
        branches[o.branch] += o.prob * (F(succ) - F0)
        mean[i] += o.prob * o.delta
        total_p += o.prob
    grad = F.gradient(Q)
    gradient_form = float(sum(g @ d for g, d in zip(grad, mean)))
    formula = analytic_drift(game, F, Q, config)
    return DriftReport(config.b, branches["replicator"] + branches["uniform"], gradient_form,
                       formula, branches, total_p)


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


# -- batched helpers --------------------------------------------------------

def _blocks(Qpad: np.ndarray, counts: Sequence[int]) -> list[np.ndarray]:
    return [Qpad[:, j, :m] for j, m in enumerate(counts)]


def batched_pinned_costs(game: Game, Qpad: np.ndarray, i: int) -> np.ndarray:
    """``c_i(e_l, Q_-i)`` for a batch of padded profiles, shape ``(T, m_i)``."""
    n = game.n
    table = game.cost_table()[i]
    blocks = _blocks(Qpad, game.strategy_counts)
    ops: list = [table, list(range(1, n + 1))]
    for j in range(n):
        if j != i:
            ops += [blocks[j], [0, j + 1]]
    return np.einsum(*ops, [0, i + 1])


def batched_potential(phi: PotentialSpec, Qpad: np.ndarray, counts: Sequence[int]) -> np.ndarray:
    n = len(counts)
    blocks = _blocks(Qpad, counts)
    ops: list = [phi.table, list(range(1, n + 1))]
    for j in range(n):
        ops += [blocks[j], [0, j + 1]]
    return np.einsum(*ops, [0])


def batched_epsilon_nash(game: Game, Qpad: np.ndarray, eps: float) -> np.ndarray:
    ok = np.ones(Qpad.shape[0], dtype=bool)
    for i, m in enumerate(game.strategy_counts):
        c = batched_pinned_costs(game, Qpad, i)
        cbar = (Qpad[:, i, :m] * c).sum(axis=1)
        ok &= c.min(axis=1) >= (1.0 - eps) * cbar
    return ok


def bootstrap_ci(x: np.ndarray, resamples: int, rng: np.random.Generator,
                 level: float = 0.95) -> tuple[float, float]:
    idx = rng.integers(0, len(x), size=(resamples, len(x)))
    means = x[idx].mean(axis=1)
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


# -- hitting times ----------------------------------------------------------

@dataclass
class HittingTimes:
    eps: float
    b: float
    taus: np.ndarray
    censored: int
    ci: tuple[float, float]
    z0: float

    @property
    def mean(self) -> float:
        return float(self.taus.mean())


def hitting_time_trials(game: Game, F, Q0, eps: float, b: float | None = None, c: float = 0.25,
                        alpha: float = 0.9, p: Sequence[float] | None = None,
                        trials: int = 1000, max_steps: int = 10**6, seed: int = 0,
                        resamples: int = 1000) -> HittingTimes:
    """First step at which each trial is an ``eps``-Nash profile.

    Runs the perturbed rule with ``b = c * eps`` unless ``b`` is given.
    Censored trials count as ``max_steps``.
    """
    if alpha >= 1:
        raise GameError("hitting-time trials use the perturbed rule (alpha < 1)")
    b = c * eps if b is None else b
    cfg = DynamicsConfig(b=b, alpha=alpha, p=tuple(p) if p is not None else None)
    F = as_lyapunov(F)
    Q0 = as_profile(game, Q0)
    ss = np.random.SeedSequence(seed)
    run_ss, boot_ss = ss.spawn(2)
    runner = BatchRunner(game, cfg, Q0, trials, run_ss)
    taus = np.full(trials, max_steps, dtype=np.int64)
    if is_epsilon_nash(game, Q0, eps):
        taus[:] = 0
        runner.freeze(runner.active)
    while runner.active.size and runner.t < max_steps:
        runner.step()
        act = runner.active
        hit = act[batched_epsilon_nash(game, runner.Q[act], eps)]
        if hit.size:
            taus[hit] = runner.t
            runner.freeze(hit)
    censored = int(runner.active.size)
    if censored == trials:
        warnings.warn("every trial was censored", AllCensoredWarning, stacklevel=2)
    ci = bootstrap_ci(taus.astype(float), resamples, np.random.default_rng(boot_ss))
    return HittingTimes(eps, b, taus, censored, ci, F(Q0))


@dataclass(frozen=True)
class DriftConstant:
    kappa: float
    witness: MixedProfile | None
    checked: int


def drift_constant(game: Game, F, config: DynamicsConfig, eps: float, samples: int = 2000,
                   seed: int = 0) -> DriftConstant:
    """Smallest ``-E[Delta F | Q]`` over sampled profiles that are not ``eps``-Nash.

    Half the samples are drawn near the faces of the simplex.
    """
    F = as_lyapunov(F)
    rng = np.random.default_rng(seed)
    kappa, witness, checked = math.inf, None, 0
    for k in range(samples):
        conc = 1.0 if k % 2 == 0 else 0.2
        Q = tuple(rng.dirichlet(np.full(m, conc)) for m in game.strategy_counts)
        Q = tuple(np.maximum(q, 0) / np.maximum(q, 0).sum() for q in Q)
        if is_epsilon_nash(game, Q, eps):
            continue
        checked += 1
        d = -exact_one_step_drift(game, F, Q, config).exact
        if d < kappa:
            kappa, witness = d, Q
    return DriftConstant(kappa, witness, checked)


# -- level sets -------------------------------------------------------------

@dataclass
class EscapeResult:
    lam: float
    fraction: float
    trials: int
    threshold: float

    @property
    def bound(self) -> float:
        return 1.0 / self.lam

    @property
    def margin(self) -> float:
        p = self.bound
        return 3.0 * math.sqrt(p * (1 - p) / self.trials)

    @property
    def passed(self) -> bool:
        return self.fraction <= self.bound + self.margin


def check_drift_precondition(game: Game, F, Q0, config: DynamicsConfig, samples: int = 500,
                             seed: int = 0, tol: float = 1e-14) -> MixedProfile | None:
    """Witness of positive drift above the level ``F(Q0)``, or ``None``."""
    F = as_lyapunov(F)
    level = F(as_profile(game, Q0))
    rng = np.random.default_rng(seed)
    found = 0
    for _ in range(50 * samples):
        if found >= samples:
            break
        Q = random_interior_profile(game, rng)
        if F(Q) <= level:
            continue
        found += 1
        if exact_one_step_drift(game, F, Q, config).exact > tol:
            return Q
    return None


def escape_fractions(game: Game, F, Q0, lams: Sequence[float], b: float, trials: int = 2000,
                     horizon: int = 10**5, seed: int = 0, alpha: float = 1.0,
                     p: Sequence[float] | None = None,
                     precondition_samples: int = 500) -> list[EscapeResult]:
    """Fraction of trials whose ``F`` reaches ``lam * F(Q0)`` within ``horizon`` steps.

    One batch of trials serves every ``lam``: each trial tracks its running
    maximum of ``F`` (time 0 included) and stops once it passes the largest
    threshold.
    """
    F = as_lyapunov(F)
    if F.potential is None:
        raise GameError("level-set trials need a potential-based Lyapunov function")
    if not lams or min(lams) < 1:
        raise GameError("lambda values must be >= 1")
    Q0 = as_profile(game, Q0)
    cfg = DynamicsConfig(b=b, alpha=alpha, p=tuple(p) if p is not None else None)
    witness = check_drift_precondition(game, F, Q0, cfg, precondition_samples, seed)
    if witness is not None:
        raise DriftPreconditionError(f"positive drift at {witness}; reduce b")
    F0 = F(Q0)
    if F0 <= 0:
        raise GameError("F(Q0) must be positive for the level-set bound")
    top = max(lams) * F0
    runner = BatchRunner(game, cfg, Q0, trials, np.random.SeedSequence(seed).spawn(1)[0])
    peak = np.full(trials, F0)
    counts = game.strategy_counts
    while runner.active.size and runner.t < horizon:
        runner.step()
        act = runner.active
        vals = batched_potential(F.potential, runner.Q[act], counts) - F.offset
        peak[act] = np.maximum(peak[act], vals)
        out = act[vals >= top]
        if out.size:
            runner.freeze(out)
    return [EscapeResult(lam, float((peak >= lam * F0).mean()), trials, lam * F0) for lam in lams]


def level_escape_probability(game: Game, F, Q0, lam: float, b: float, trials: int = 2000,
                             horizon: int = 10**5, seed: int = 0, **kw) -> EscapeResult:
    return escape_fractions(game, F, Q0, [lam], b, trials, horizon, seed, **kw)[0]


# -- mean-field deviation ---------------------------------------------------

@dataclass(frozen=True)
class DeviationRow:
    b: float
    mean: float
    stderr: float
    steps: int


def ode_deviation(game: Game, Q0, b_list: Sequence[float], T: float, trials: int = 200,
                  seed: int = 0, alpha: float = 1.0, p: Sequence[float] | None = None,
                  h: float | None = None, statistic: str = "mean-sup") -> list[DeviationRow]:
    """Sup-norm gap between interpolated stochastic paths and the ODE.

    Stochastic states at steps ``k`` sit at rescaled time ``k * b`` and are
    joined linearly; the gap is taken on the reference grid of step ``h``
    (which must divide every ``b``). ``statistic="mean-sup"`` averages the
    per-trial sup gap; ``"sup-mean"`` takes the sup gap of the trial mean.
    """
    if statistic not in ("mean-sup", "sup-mean"):
        raise ValueError(f"unknown statistic {statistic!r}")
    Q0 = as_profile(game, Q0)
    h = min(b_list) / 4 if h is None else h
    for b in b_list:
        if abs(b / h - round(b / h)) > 1e-9:
            raise ValueError(f"reference step {h} does not divide b={b}")
    field_ = replicator_field(game, p, scaled=True, alpha=alpha)
    ref_steps = int(round(T / h))
    ref = integrate(field_, Q0, ref_steps * h, h)
    ref_flat = np.array([np.concatenate(s) for s in ref.samples])
    counts = np.array(game.strategy_counts)
    cols = np.concatenate([i * counts.max() + np.arange(m) for i, m in enumerate(counts)])
    rows = []
    for b, child in zip(b_list, np.random.SeedSequence(seed).spawn(len(b_list))):
        cfg = DynamicsConfig(b=b, alpha=alpha, p=tuple(p) if p is not None else None)
        steps = int(math.ceil(T / b - 1e-9))
        ratio = int(round(b / h))
        runner = BatchRunner(game, cfg, Q0, trials, child)
        frac = (np.arange(ratio) / ratio)[:, None, None]

        def view():
            x = runner.Q.reshape(trials, -1)[:, cols]
            return x if statistic == "mean-sup" else x.mean(axis=0, keepdims=True)

        prev = view()
        sup = np.abs(prev - ref_flat[0]).max(axis=1)
        for k in range(1, steps + 1):
            runner.step()
            cur = view()
            g0 = (k - 1) * ratio
            if g0 <= ref_steps:
                width = min(ratio, ref_steps - g0 + 1)
                seg = prev + frac[:width] * (cur - prev)
                gap = np.abs(seg - ref_flat[g0:g0 + width, None, :]).max(axis=(0, 2))
                sup = np.maximum(sup, gap)
            prev = cur
        if steps * ratio <= ref_steps:
            sup = np.maximum(sup, np.abs(prev - ref_flat[steps * ratio]).max(axis=1))
        err = float(sup.std(ddof=1) / math.sqrt(sup.size)) if sup.size > 1 else 0.0
        rows.append(DeviationRow(b, float(sup.mean()), err, steps))
    return rows
