"""Acceptance checks on the bundled fixtures.

Each check returns a :class:`Verdict`. ``scale < 1`` shrinks trial counts
for quick runs; statistical checks then allow for the larger sampling
error (noted in the verdict) instead of applying the full-size rule.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..dynamics import BatchRunner, DynamicsConfig, initial_state, run
from ..games import (NormalFormGame, PotentialSpec, as_profile, enumerate_pure_nash,
                     random_interior_profile, uniform_profile, verify_ordinal_potential)
from ..lyapunov import LyapunovFn, check_continuous_potential, potential_from_path_integral
from ..meanfield import classify_point, integrate, replicator_field
from ..oracle import (drift_constant, escape_fractions, exact_one_step_drift,
                      hitting_time_trials, loglog_slope, ode_deviation)
from .gamefile import LoadedGame, load_game
from .io import csv_bytes

HIT_Q0 = ((1.0, 0.0), (1.0, 0.0))          # the potential-maximising corner of LB2
ESCAPE_Q0 = ((0.95, 0.05), (0.05, 0.95))   # F0 = 0.095, so both thresholds stay below max F
DRIFT_Q = ((0.8, 0.2), (0.3, 0.7))         # non-Nash, uniform pull has nonzero effect


@dataclass
class Verdict:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0
    reduced: bool = False

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = " (reduced)" if self.reduced else ""
        info = ", ".join(f"{k}={_short(v)}" for k, v in self.detail.items())
        return f"[{tag}] {self.number}. {self.name}{extra}: {info} [{self.seconds:.1f}s]"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(str(_short(x)) for x in v) + "]"
    return str(v)


def fixtures() -> dict[str, LoadedGame]:
    names = ("lb2", "congestion3", "taskalloc_spt", "taskalloc_lpt", "random23")
    return {n: load_game(f"builtin:{n}") for n in names}


def _n(base: int, scale: float, floor: int = 20) -> int:
    return base if scale >= 1 else max(floor, int(base * scale))


def drift_identity(scale: float = 1.0, seed: int = 0) -> Verdict:
    rng = np.random.default_rng(seed)
    count = _n(1000, scale)
    worst_gap = worst_prob = 0.0
    for _ in range(count):
        counts = tuple(int(x) for x in rng.integers(2, 4, size=2))
        game = NormalFormGame(rng.random((2, *counts)), 1.0)
        F = LyapunovFn.from_potential(PotentialSpec(rng.normal(size=counts)))
        alpha = 1.0 if rng.random() < 0.25 else float(rng.uniform(0.05, 1.0))
        cfg = DynamicsConfig(b=float(rng.uniform(1e-3, 1.0)), alpha=alpha,
                             p=tuple(rng.dirichlet(np.ones(2))))
        r = exact_one_step_drift(game, F, random_interior_profile(game, rng), cfg)
        worst_gap = max(worst_gap, r.identity_gap)
        worst_prob = max(worst_prob, abs(r.prob_total - 1.0))
    return Verdict(1, "multiaffine drift identity", worst_gap <= 1e-12 and worst_prob <= 1e-12,
                   {"cases": count, "max_gap": worst_gap, "max_prob_error": worst_prob})


def drift_order(fx=None) -> Verdict:
    lb2 = (fx or fixtures())["lb2"]
    F = LyapunovFn.from_potential(lb2.potential)
    bs = [0.1 * 2.0**-k for k in range(6)]
    resid = [abs(exact_one_step_drift(lb2.game, F, DRIFT_Q, DynamicsConfig(b=b, alpha=0.5)).residual)
             for b in bs]
    slope = loglog_slope(bs, resid)
    C = max(r / b**2 for r, b in zip(resid, bs))
    return Verdict(2, "drift formula order", slope >= 1.9, {"exponent": slope, "C": C})


def stationary_points(fx=None) -> Verdict:
    g = (fx or fixtures())["lb2"].game
    field_ = replicator_field(g)
    points = [as_profile(g, np.eye(2)[list(s)]) for s in enumerate_pure_nash(g)]
    points.append(uniform_profile(g))
    worst = max(field_.norm(Q) for Q in points)
    corner = classify_point(field_, g, ((1.0, 0.0), (1.0, 0.0)))
    d = 1e-3
    sol = integrate(field_, ((1 - d, d), (1 - d, d)), 100.0, 0.01)
    reach = max(max(float(np.abs(q - np.array([1.0, 0.0])).max()) for q in Q) for Q in sol.samples)
    ok = worst <= 1e-9 and corner.stationary_non_nash and reach > 0.1
    return Verdict(3, "stationary points", ok, {"max_rhs_at_nash": worst,
                                           "corner_stationary_non_nash": corner.stationary_non_nash,
                                           "escape_distance": reach})


def lyapunov_descent(fx=None, seed: int = 0, h: float = 0.1, t_max: float = 20000.0) -> Verdict:
    fx = fx or fixtures()
    rng = np.random.default_rng(seed)
    detail, ok = {}, True
    for name, lg in fx.items():
        if lg.potential is None:
            continue
        F = LyapunovFn.from_potential(lg.potential)
        field_ = replicator_field(lg.game)
        Q = random_interior_profile(lg.game, rng)
        t, worst_rise, residual = 0.0, -math.inf, math.inf
        while t < t_max:
            sol = integrate(field_, Q, 50.0, h)
            vals = [F(s) for s in sol.samples]
            worst_rise = max(worst_rise, max(b - a for a, b in zip(vals, vals[1:])))
            Q, t = sol.final, t + 50.0
            residual = sol.residual
            if residual < 1e-6:
                break
        good = residual < 1e-6 and worst_rise <= 1e-9
        ok &= good
        detail[name] = f"rise={worst_rise:.2e},res={residual:.1e},T={t:g}"
    return Verdict(4, "Lyapunov descent along ODE", ok, detail)


def meanfield_ordering(scale: float = 1.0, seed: int = 0, fx=None) -> Verdict:
    g = (fx or fixtures())["lb2"].game
    trials = _n(200, scale)
    rows = ode_deviation(g, ((0.9, 0.1), (0.9, 0.1)), (0.04, 0.02, 0.01), 5.0, trials, seed)
    if scale >= 1:
        ok = all(b.mean < a.mean for a, b in zip(rows, rows[1:]))
    else:
        ok = all(b.mean < a.mean + 3 * math.hypot(a.stderr, b.stderr) for a, b in zip(rows, rows[1:]))
    return Verdict(5, "mean-field convergence ordering", ok,
                   {"trials": trials, "deviation": [r.mean for r in rows]}, reduced=scale < 1)


def hitting_scaling(scale: float = 1.0, seed: int = 0, fx=None) -> Verdict:
    lb2 = (fx or fixtures())["lb2"]
    F = LyapunovFn.from_potential(lb2.potential)
    trials = _n(1000, scale)
    eps_list = (0.4, 0.2, 0.1)
    hits, bounds = [], []
    for k, eps in enumerate(eps_list):
        h = hitting_time_trials(lb2.game, F, HIT_Q0, eps, c=0.25, alpha=0.9, trials=trials,
                                max_steps=10**6, seed=seed + 1000 * k)
        kc = drift_constant(lb2.game, F, DynamicsConfig(b=h.b, alpha=0.9), eps, 2000, seed)
        hits.append(h)
        bounds.append(h.z0 / kc.kappa if kc.kappa > 0 else -math.inf)
    ratios = [b.mean / a.mean for a, b in zip(hits, hits[1:])]
    if scale >= 1:
        ratio_ok = all(1.3 <= r <= 3.0 for r in ratios)
    else:
        ratio_ok = all(b.ci[0] / a.ci[1] <= 3.0 and b.ci[1] / a.ci[0] >= 1.3
                       for a, b in zip(hits, hits[1:]))
    bound_ok = all(h.mean <= bd for h, bd in zip(hits, bounds))
    return Verdict(6, "hitting-time scaling", ratio_ok and bound_ok,
                   {"trials": trials, "mean_tau": [h.mean for h in hits], "ratios": ratios,
                    "bounds": bounds, "censored": [h.censored for h in hits]}, reduced=scale < 1)


def level_sets(scale: float = 1.0, seed: int = 0, fx=None, horizon: int = 10**5) -> Verdict:
    lb2 = (fx or fixtures())["lb2"]
    trials = _n(2000, scale)
    res = escape_fractions(lb2.game, LyapunovFn.from_potential(lb2.potential), ESCAPE_Q0,
                           [2.0, 10.0], 0.01, trials, horizon, seed)
    return Verdict(7, "level-set containment", all(r.passed for r in res),
                   {"trials": trials, "fractions": [r.fraction for r in res],
                    "limits": [r.bound + r.margin for r in res]}, reduced=scale < 1)


def potential_structure(fx=None, seed: int = 0) -> Verdict:
    fx = fx or fixtures()
    detail, ok = {}, True
    rng = np.random.default_rng(seed)
    for name in ("lb2", "congestion3", "random23"):
        lg = fx[name]
        rep = check_continuous_potential(lg.game, lg.potential, 100, seed)
        F = LyapunovFn.from_potential(lg.potential)
        z, Q = random_interior_profile(lg.game, rng), random_interior_profile(lg.game, rng)
        pi = potential_from_path_integral(lg.game, z, Q, seed=seed)
        path_err = max(pi.path_gap, abs(pi.value - (F(Q) - F(z))))
        exact = verify_ordinal_potential(lg.game, lg.potential)
        good = rep.passed and path_err <= 1e-6 and exact.is_ordinal
        ok &= good
        detail[name] = (f"grad={rep.gradient_error:.1e},sym={rep.symmetry_error:.1e},"
                        f"path={path_err:.1e},ordinal={exact.is_ordinal}")
        if not good and exact.witness is not None:
            detail[name + "_witness"] = exact.witness
    for name in ("taskalloc_spt", "taskalloc_lpt"):
        lg = fx[name]
        r = verify_ordinal_potential(lg.game, lg.potential)
        ok &= r.is_ordinal
        detail[name] = f"ordinal={r.is_ordinal}"
        if r.witness is not None:
            detail[name + "_witness"] = r.witness
    return Verdict(8, "potential structure", ok, detail)


def simplex_determinism(fx=None, steps: int = 10**6, seed: int = 11) -> Verdict:
    g = (fx or fixtures())["lb2"].game
    cfg = DynamicsConfig(b=0.01)
    Q0 = ((0.9, 0.1), (0.9, 0.1))

    def once():
        tr = run(initial_state(g, Q0, seed), g, cfg, steps, stride=1000)
        data = csv_bytes(["step", "q_0_0", "q_0_1", "q_1_0", "q_1_1"],
                         [[t, *np.concatenate(Q)] for t, Q in zip(tr.steps, tr.profiles)])
        return tr, data

    tr, first = once()
    _, second = once()
    in_range = all(float(q.min()) >= 0 and float(q.max()) <= 1 for Q in tr.profiles for q in Q)
    # a batched trial replays the same stream as the single-trial path
    short = 2000
    single = run(initial_state(g, Q0, seed), g, cfg, short).final.Q
    br = BatchRunner(g, cfg, Q0, 3, seed)
    for _ in range(short):
        br.step()
    batch_same = all(np.array_equal(a, b) for a, b in zip(single, br.profile(0)))
    ok = tr.max_sum_error <= 1e-9 and in_range and first == second and batch_same
    return Verdict(9, "simplex and determinism", ok,
                   {"steps": steps, "max_sum_error": tr.max_sum_error,
                    "replay_identical": first == second, "batch_identical": batch_same})


CHECKS: dict[int, Callable[..., Verdict]] = {
    1: drift_identity, 2: drift_order, 3: stationary_points, 4: lyapunov_descent,
    5: meanfield_ordering, 6: hitting_scaling, 7: level_sets, 8: potential_structure,
    9: simplex_determinism,
}
SCALED = {1, 5, 6, 7}


def run_check(number: int, scale: float = 1.0, fx=None) -> Verdict:
    fn = CHECKS[number]
    kwargs = {}
    if number in SCALED:
        kwargs["scale"] = scale
    if number != 1:
        kwargs["fx"] = fx
    start = time.perf_counter()
    v = fn(**kwargs)
    v.seconds = time.perf_counter() - start
    return v


def builtin_suite(scale: float = 1.0, only=None, fx=None, echo: Callable[[str], None] | None = None
                  ) -> list[Verdict]:
    fx = fx or fixtures()
    out = []
    for number in sorted(CHECKS):
        if only and number not in only:
            continue
        v = run_check(number, scale, fx)
        out.append(v)
        if echo is not None:
            echo(v.line())
    return out
