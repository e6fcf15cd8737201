"""Mean-field ODE of the learning dynamics and its fixed-step integrator.

Costs are used in cost form: lower is better, so the field moves mass
toward strategies cheaper than the player's current average,

    dq_il/dt = -alpha * p_i * q_il * (c_i(e_l, Q_-i) - c_i(q_i, Q_-i)) / M.

With ``scaled=True`` the ``1/M`` factor is included, which makes ODE time
equal to ``step * b`` for the stochastic rule with affine gamma.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .games import COST_TOL, Game, MixedProfile, as_profile, pinned_costs
from .lyapunov import is_epsilon_nash

STATIONARY_TOL = 1e-9
NEG_TOL = 1e-12


class StepUnstableError(ArithmeticError):
    """An integration step produced a clearly negative probability."""


def flatten(Q: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(q, dtype=float) for q in Q])


def split(x: np.ndarray, counts: Sequence[int]) -> MixedProfile:
    return tuple(np.split(x, np.cumsum(counts)[:-1]))


@dataclass(frozen=True)
class VectorField:
    """Tangent field on the product of simplices, evaluated block-wise."""

    counts: tuple[int, ...]
    evaluate: Callable[[MixedProfile], MixedProfile]

    def __call__(self, Q) -> MixedProfile:
        return self.evaluate(tuple(Q))

    def flat(self, x: np.ndarray) -> np.ndarray:
        return flatten(self.evaluate(split(x, self.counts)))

    def norm(self, Q) -> float:
        return float(np.abs(flatten(self(Q))).max())


def tangency_error(field: VectorField, Q) -> float:
    """Largest per-player sum of the field; zero for a tangent field."""
    return max(abs(float(v.sum())) for v in field(Q))


def replicator_rhs(game: Game, Q, p: Sequence[float] | None = None, scaled: bool = True,
                   alpha: float = 1.0) -> MixedProfile:
    Q = tuple(np.asarray(q, dtype=float) for q in Q)
    p = np.full(game.n, 1.0 / game.n) if p is None else np.asarray(p, dtype=float)
    scale = alpha / game.cost_bound if scaled else alpha
    out = []
    for i, q in enumerate(Q):
        c = pinned_costs(game, i, Q)
        out.append(-p[i] * scale * q * (c - q @ c))
    return tuple(out)


def replicator_field(game: Game, p: Sequence[float] | None = None, scaled: bool = True,
                     alpha: float = 1.0) -> VectorField:
    return VectorField(tuple(game.strategy_counts),
                       lambda Q: replicator_rhs(game, Q, p, scaled, alpha))


def _project(x: np.ndarray, counts: Sequence[int]) -> np.ndarray:
    if x.min() < -NEG_TOL:
        raise StepUnstableError(f"entry {x.min():.3e} below -{NEG_TOL}; reduce the step size")
    x = np.maximum(x, 0.0)
    blocks = []
    for q in split(x, counts):
        total = q.sum()
        blocks.append(q / total if abs(total - 1.0) > NEG_TOL else q)
    return np.concatenate(blocks)


def _rk4(field: VectorField, x: np.ndarray, h: float) -> np.ndarray:
    k1 = field.flat(x)
    k2 = field.flat(x + 0.5 * h * k1)
    k3 = field.flat(x + 0.5 * h * k2)
    k4 = field.flat(x + h * k3)
    return _project(x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), field.counts)


def rk4_step(field: VectorField, Q, h: float) -> MixedProfile:
    """One classical fourth-order Runge-Kutta step of length ``h``."""
    if h <= 0:
        raise ValueError("step size h must be positive")
    return split(_rk4(field, flatten(Q), h), field.counts)


@dataclass
class OdeSolution:
    times: np.ndarray
    samples: list[MixedProfile]
    h: float
    residual: float

    @property
    def final(self) -> MixedProfile:
        return self.samples[-1]


def integrate(field: VectorField, Q0, T: float, h: float, record_every: int = 1) -> OdeSolution:
    """Integrate from ``Q0`` over ``[0, T]`` with fixed step ``h``.

    Samples are kept at every ``record_every``-th multiple of ``h`` and at
    ``T``. A final shorter step is taken when ``T`` is not a multiple of
    ``h``. ``residual`` is the sup-norm of the field at the endpoint.
    """
    if T < 0 or h <= 0:
        raise ValueError("need T >= 0 and h > 0")
    x = flatten(Q0)
    n_full = int(np.floor(T / h + 1e-9))
    times, samples = [0.0], [split(x.copy(), field.counts)]
    t = 0.0
    for k in range(1, n_full + 1):
        x = _rk4(field, x, h)
        t = k * h
        if k % record_every == 0 or k == n_full:
            times.append(t)
            samples.append(split(x.copy(), field.counts))
    rest = T - n_full * h
    if rest > 1e-12:
        x = _rk4(field, x, rest)
        times.append(T)
        samples.append(split(x.copy(), field.counts))
    return OdeSolution(np.array(times), samples, h, float(np.abs(field.flat(x)).max()))


@dataclass(frozen=True)
class PointClass:
    stationary: bool
    nash: bool
    epsilon_nash: bool | None
    field_norm: float

    @property
    def stationary_non_nash(self) -> bool:
        return self.stationary and not self.nash


def is_nash(game: Game, Q, tol: float = COST_TOL) -> bool:
    """No pure deviation is cheaper than the current expected cost."""
    Q = as_profile(game, Q)
    for i, q in enumerate(Q):
        c = pinned_costs(game, i, Q)
        if q @ c > c.min() + tol:
            return False
    return True


def classify_point(field: VectorField, game: Game, Q, tol: float = STATIONARY_TOL,
                   eps: float | None = None, cost_tol: float = COST_TOL) -> PointClass:
    Q = as_profile(game, Q)
    norm = field.norm(Q)
    return PointClass(
        stationary=norm <= tol,
        nash=is_nash(game, Q, cost_tol),
        epsilon_nash=None if eps is None else is_epsilon_nash(game, Q, eps),
        field_norm=norm,
    )
