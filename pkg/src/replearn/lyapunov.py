"""Multiaffine Lyapunov functions built from pure-profile potentials.

``F(Q) = E[phi(s)]`` with ``s`` drawn from ``Q`` is affine in every
player's block, so ``dF/dq_il (Q) = F(e_l, Q_-i)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import DynamicsConfig
from .games import (DEFAULT_CAP, Game, GameError, MixedProfile, PotentialSpec,
                    expectation, pinned_costs, random_interior_profile, require_cap,
                    uniform_profile)


class PathDependenceWarning(UserWarning):
    """Externality symmetry failed, so a path integral may depend on the path."""


def potential_expectation(phi: PotentialSpec, Q: Sequence[np.ndarray]) -> float:
    """``sum_s prod_i q_{i, s_i} * phi(s)``."""
    return float(expectation(phi.table, [np.asarray(q, dtype=float) for q in Q]))


def pinned_potential(phi: PotentialSpec, i: int, Q: Sequence[np.ndarray]) -> np.ndarray:
    """Vector of ``F(e_l, Q_-i)`` over player ``i``'s strategies."""
    return expectation(phi.table, [np.asarray(q, dtype=float) for q in Q], skip=i)


def gradient_component(phi: PotentialSpec, i: int, l: int, Q: Sequence[np.ndarray]) -> float:
    return float(pinned_potential(phi, i, Q)[l])


@dataclass(frozen=True, eq=False)
class LyapunovFn:
    """Candidate Lyapunov function with its gradient.

    Built from a potential it is multiaffine and shifted by ``offset`` so
    that its minimum over pure profiles is zero.
    """

    value: Callable[[MixedProfile], float]
    gradient: Callable[[MixedProfile], MixedProfile]
    multiaffine: bool = True
    potential: PotentialSpec | None = None
    offset: float = 0.0

    def __call__(self, Q) -> float:
        return self.value(tuple(Q))

    @classmethod
    def from_potential(cls, phi: PotentialSpec, normalize: bool = True) -> "LyapunovFn":
        offset = float(phi.table.min()) if normalize else 0.0
        table = phi.table

        def value(Q):
            return float(expectation(table, Q)) - offset

        def gradient(Q):
            return tuple(expectation(table, Q, skip=i) for i in range(len(Q)))

        return cls(value, gradient, True, phi, offset)


def as_lyapunov(F) -> LyapunovFn:
    return F if isinstance(F, LyapunovFn) else LyapunovFn.from_potential(F)


def is_epsilon_nash(game: Game, Q, eps: float) -> bool:
    """``c_i(e_l, Q_-i) >= (1 - eps) * c_i(q_i, Q_-i)`` for every ``i, l``."""
    if eps < 0:
        raise GameError("epsilon must be nonnegative")
    Q = tuple(np.asarray(q, dtype=float) for q in Q)
    for i, q in enumerate(Q):
        c = pinned_costs(game, i, Q)
        if c.min() < (1.0 - eps) * (q @ c):
            return False
    return True


def _affine_bound(game: Game, config: DynamicsConfig) -> float:
    gamma = config.gamma_for(game)
    if not gamma.affine:
        raise GameError("closed-form drift needs the affine gamma")
    return gamma.M


def analytic_drift(game: Game, F, Q, config: DynamicsConfig) -> float:
    """Leading-order one-step drift ``b * sum_il p_i dF/dq_il * G_il(Q)``.

    With affine gamma ``G_il = -alpha * q_il * (c_il - cbar_i) / M``; for a
    potential-based ``F`` this equals

        -(b * alpha / M) * sum_i p_i sum_{l<l'} q_il q_il' dF_ll' dc_ll'

    with ``dF`` and ``dc`` the pinned differences.
    """
    F = as_lyapunov(F)
    Q = tuple(np.asarray(q, dtype=float) for q in Q)
    M = _affine_bound(game, config)
    p = config.selection(game.n)
    grad = F.gradient(Q)
    total = 0.0
    for i, q in enumerate(Q):
        c = pinned_costs(game, i, Q)
        G = -config.alpha * q * (c - q @ c) / M
        total += p[i] * float(grad[i] @ G)
    return config.b * total


def pairwise_drift(game: Game, phi: PotentialSpec, Q, config: DynamicsConfig,
                   squared: bool = False) -> float:
    """The drift written over unordered strategy pairs.

    ``squared=True`` replaces ``dF * dc`` by ``dc**2``, the form valid for
    exact potential games.
    """
    Q = tuple(np.asarray(q, dtype=float) for q in Q)
    M = _affine_bound(game, config)
    p = config.selection(game.n)
    total = 0.0
    for i, q in enumerate(Q):
        c = pinned_costs(game, i, Q)
        f = pinned_potential(phi, i, Q)
        m = len(q)
        for a in range(m):
            for b in range(a + 1, m):
                dc = c[a] - c[b]
                total += p[i] * q[a] * q[b] * (dc * dc if squared else (f[a] - f[b]) * dc)
    return -config.b * config.alpha / M * total


@dataclass(frozen=True)
class LyapunovViolation:
    profile: MixedProfile
    value: float
    field_norm: float


@dataclass
class LyapunovCheck:
    samples: int
    violations: list[LyapunovViolation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def check_lyapunov_inequality(game: Game, phi: PotentialSpec, p: Sequence[float] | None = None,
                              samples: int = 1000, seed: int = 0,
                              stationary_tol: float = 1e-9) -> LyapunovCheck:
    """Sample interior profiles and check ``sum p_i dF/dq * G < 0`` off stationarity."""
    F = LyapunovFn.from_potential(phi)
    rng = np.random.default_rng(seed)
    cfg = DynamicsConfig(b=1.0, p=tuple(p) if p is not None else None)
    report = LyapunovCheck(samples)
    for _ in range(samples):
        Q = random_interior_profile(game, rng)
        norm = 0.0
        for i, q in enumerate(Q):
            c = pinned_costs(game, i, Q)
            norm = max(norm, float(np.abs(q * (c - q @ c)).max()) / game.cost_bound)
        if norm <= stationary_tol:
            continue
        v = analytic_drift(game, F, Q, cfg)
        if not v < 0:
            report.violations.append(LyapunovViolation(Q, v, norm))
    return report


@dataclass
class ContinuousPotentialReport:
    gradient_ok: bool
    gradient_error: float
    symmetry_ok: bool
    symmetry_error: float
    gradient_witness: MixedProfile | None = None
    symmetry_witness: tuple | None = None

    @property
    def passed(self) -> bool:
        return self.gradient_ok and self.symmetry_ok


def _shift(Q, j, a, b, t):
    Q = list(Q)
    v = Q[j].copy()
    v[a] += t
    v[b] -= t
    Q[j] = v
    return Q


def externality_asymmetry(game: Game, Q, delta: float = 1e-5) -> tuple[float, tuple | None]:
    """Largest mismatch of mixed second differences across player pairs.

    For players ``i != j`` and strategies ``l`` of ``i``, ``k`` of ``j``
    (each relative to strategy 0), compares the derivative of
    ``c_i(e_l) - c_i(e_0)`` along ``e_k - e_0`` in ``j``'s block with the
    derivative of ``c_j(e_k) - c_j(e_0)`` along ``e_l - e_0`` in ``i``'s
    block, by central differences.
    """
    worst, where = 0.0, None
    counts = game.strategy_counts
    for i in range(game.n):
        for j in range(i + 1, game.n):
            for l in range(1, counts[i]):
                for k in range(1, counts[j]):
                    def dci(QQ):
                        c = pinned_costs(game, i, QQ)
                        return c[l] - c[0]

                    def dcj(QQ):
                        c = pinned_costs(game, j, QQ)
                        return c[k] - c[0]

                    A = (dci(_shift(Q, j, k, 0, delta)) - dci(_shift(Q, j, k, 0, -delta))) / (2 * delta)
                    B = (dcj(_shift(Q, i, l, 0, delta)) - dcj(_shift(Q, i, l, 0, -delta))) / (2 * delta)
                    if abs(A - B) > worst:
                        worst, where = abs(A - B), (i, l, j, k, A, B)
    return worst, where


def check_continuous_potential(game: Game, phi: PotentialSpec, samples: int = 100, seed: int = 0,
                               delta: float = 1e-5, gradient_tol: float = 1e-8,
                               symmetry_tol: float = 1e-4) -> ContinuousPotentialReport:
    """Gradient identity and externality symmetry at sampled interior profiles.

    On the simplex the gradient of ``F`` is determined only up to a
    per-player constant, so the gradient identity compares pinned
    differences ``F(e_l) - F(e_0)`` with ``c(e_l) - c(e_0)``.
    """
    rng = np.random.default_rng(seed)
    g_err, s_err = 0.0, 0.0
    g_wit = s_wit = None
    for _ in range(samples):
        Q = random_interior_profile(game, rng)
        for i in range(game.n):
            f = pinned_potential(phi, i, Q)
            c = pinned_costs(game, i, Q)
            err = float(np.abs((f - f[0]) - (c - c[0])).max())
            if err > g_err:
                g_err, g_wit = err, Q
        err, where = externality_asymmetry(game, Q, delta)
        if err > s_err:
            s_err, s_wit = err, (Q, where)
    return ContinuousPotentialReport(g_err <= gradient_tol, g_err, s_err <= symmetry_tol, s_err,
                                     g_wit if g_err > gradient_tol else None,
                                     s_wit if s_err > symmetry_tol else None)


def _line_integral(game: Game, z, Q, segments: int) -> float:
    d = [np.asarray(q, dtype=float) - np.asarray(a, dtype=float) for a, q in zip(z, Q)]
    total = 0.0
    for k in range(segments):
        t = (k + 0.5) / segments
        x = [np.asarray(a, dtype=float) + t * v for a, v in zip(z, d)]
        total += sum(float(pinned_costs(game, i, x) @ d[i]) for i in range(game.n))
    return total / segments


@dataclass(frozen=True)
class PathIntegral:
    value: float
    alternative: float
    waypoint: MixedProfile

    @property
    def path_gap(self) -> float:
        return abs(self.value - self.alternative)


def potential_from_path_integral(game: Game, z, Q, segments: int = 2000, via=None,
                                 seed: int = 0) -> PathIntegral:
    """``sum_il integral c_i(e_l, x(t)) x'_il(t) dt`` along the segment ``z -> Q``.

    Midpoint rule with ``segments`` pieces. The result is compared with a
    two-leg path through ``via`` (default: a seeded interior point).
    """
    z = tuple(np.asarray(a, dtype=float) for a in z)
    Q = tuple(np.asarray(a, dtype=float) for a in Q)
    if via is None:
        rng = np.random.default_rng(seed)
        w = random_interior_profile(game, rng)
        via = tuple(0.5 * a + 0.5 * u for a, u in zip(w, uniform_profile(game)))
    via = tuple(np.asarray(a, dtype=float) for a in via)
    err, _ = externality_asymmetry(game, via)
    if err > 1e-4:
        warnings.warn(f"externality symmetry violated by {err:.3g}; the integral may be "
                      "path dependent", PathDependenceWarning, stacklevel=2)
    if all(np.array_equal(a, b) for a, b in zip(z, Q)):
        return PathIntegral(0.0, 0.0, via)
    direct = _line_integral(game, z, Q, segments)
    two_leg = _line_integral(game, z, via, segments) + _line_integral(game, via, Q, segments)
    return PathIntegral(direct, two_leg, via)
