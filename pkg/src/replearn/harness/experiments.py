"""Run configured experiments, write their CSVs and a manifest, replay manifests."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..dynamics import DynamicsConfig, initial_state, run
from ..games import as_profile, enumerate_pure_nash, uniform_profile, verify_ordinal_potential
from ..lyapunov import (LyapunovFn, check_continuous_potential, check_lyapunov_inequality)
from ..meanfield import classify_point, integrate, replicator_field
from ..oracle import (drift_constant, escape_fractions, exact_one_step_drift,
                      hitting_time_trials, loglog_slope, ode_deviation)
from .config import ExperimentConfig
from .gamefile import LoadedGame, load_game, resolve_potential
from .io import sha256_file, write_atomic, write_csv

MANIFEST = "manifest.json"

SEED_SCHEMES = {
    "simulate": "trial stream = SeedSequence(seed).spawn(1)[0]",
    "verify-potential": "profiles drawn from default_rng(seed)",
    "hit-time": "trial k = SeedSequence(seed + 1000*cell).spawn(2)[0].spawn(trials)[k]; "
                "bootstrap = spawn(2)[1]",
    "escape-prob": "trial k = SeedSequence(seed).spawn(1)[0].spawn(trials)[k]",
    "ode-dev": "trial k for the j-th b = SeedSequence(seed).spawn(len(b))[j].spawn(trials)[k]",
}


@dataclass
class RunManifest:
    config: dict
    version: str
    seeds: dict
    wall_time: float
    files: dict[str, str]
    passed: bool
    summary: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True, default=_jsonable)

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def parse_profile(spec):
    """A mixed profile from a nested list or an inline ``"0.9,0.1;0.5,0.5"`` string."""
    if spec is None:
        return None
    if isinstance(spec, str):
        return [[float(x) for x in block.split(",")] for block in spec.split(";")]
    return [[float(x) for x in block] for block in spec]


def q_columns(counts) -> list[str]:
    return [f"q_{i}_{l}" for i, m in enumerate(counts) for l in range(m)]


def _dyn(cfg: ExperimentConfig, **defaults) -> dict:
    d = {"b": 0.01, "alpha": 1.0, "p": None, **defaults}
    d.update({k: v for k, v in cfg.dynamics.items() if v is not None})
    return d


def _config(d: dict) -> DynamicsConfig:
    return DynamicsConfig(b=float(d["b"]), alpha=float(d["alpha"]),
                          p=tuple(d["p"]) if d.get("p") is not None else None)


def _Q(loaded: LoadedGame, cfg: ExperimentConfig, key: str = "Q0"):
    spec = parse_profile(cfg.params.get(key))
    return uniform_profile(loaded.game) if spec is None else as_profile(loaded.game, spec)


def _F(loaded: LoadedGame):
    return LyapunovFn.from_potential(loaded.potential) if loaded.potential is not None else None


# -- individual experiments -------------------------------------------------
# Each returns (files: {name: digest}, summary: dict, passed: bool).

def _simulate(cfg, loaded, out):
    game, F = loaded.game, _F(loaded)
    d = _dyn(cfg)
    steps = int(cfg.params.get("steps", 1000))
    stride = int(cfg.params.get("stride", 1))
    Q0 = _Q(loaded, cfg)
    files, worst, finals = {}, 0.0, {}
    for seed in cfg.seeds:
        traj = run(initial_state(game, Q0, seed), game, _config(d), steps, stride, lyapunov=F)
        rows = [[t, t * float(d["b"]), *np.concatenate(Q), v]
                for t, Q, v in zip(traj.steps, traj.profiles, traj.values)]
        name = f"simulate_seed{seed}.csv"
        files[name] = write_csv(out / name, ["step", "t_rescaled", *q_columns(game.strategy_counts), "F"],
                                rows)
        worst = max(worst, traj.max_sum_error)
        finals[str(seed)] = [q.tolist() for q in traj.final.Q]
    return files, {"max_sum_error": worst, "final": finals}, worst <= 1e-9


def _ode(cfg, loaded, out):
    game, F = loaded.game, _F(loaded)
    d = _dyn(cfg)
    field_ = replicator_field(game, d["p"], bool(cfg.params.get("scaled", True)), float(d["alpha"]))
    sol = integrate(field_, _Q(loaded, cfg), float(cfg.params.get("T", 10.0)),
                    float(cfg.params.get("h", 0.01)), int(cfg.params.get("record_every", 1)))
    rows = [[t, *np.concatenate(Q), F(Q) if F else None] for t, Q in zip(sol.times, sol.samples)]
    files = {"ode.csv": write_csv(out / "ode.csv", ["t", *q_columns(game.strategy_counts), "F"], rows)}
    return files, {"residual": sol.residual, "final": [q.tolist() for q in sol.final]}, True


def _classify(cfg, loaded, out):
    game = loaded.game
    d = _dyn(cfg)
    field_ = replicator_field(game, d["p"], True, float(d["alpha"]))
    eps = cfg.params.get("eps")
    pc = classify_point(field_, game, _Q(loaded, cfg, "Q"), float(cfg.params.get("tol", 1e-9)),
                        None if eps is None else float(eps))
    summary = {"stationary": pc.stationary, "nash": pc.nash, "epsilon_nash": pc.epsilon_nash,
               "stationary_non_nash": pc.stationary_non_nash, "field_norm": pc.field_norm}
    files = {"classify.csv": write_csv(out / "classify.csv", list(summary), [list(summary.values())])}
    return files, summary, True


def _nash(cfg, loaded, out):
    game = loaded.game
    eq = enumerate_pure_nash(game)
    files = {"nash.csv": write_csv(out / "nash.csv", [f"s_{i}" for i in range(game.n)], eq)}
    return files, {"count": len(eq), "equilibria": [list(s) for s in eq]}, True


def _verify(cfg, loaded, out):
    game, phi = loaded.game, loaded.potential
    if cfg.params.get("potential") is not None:
        phi = resolve_potential(game, cfg.params["potential"], "potential override")
    if phi is None:
        raise ValueError("verify-potential needs a potential in the game file")
    samples = int(cfg.params.get("samples", 1000))
    seed = cfg.seeds[0]
    ordinal = verify_ordinal_potential(game, phi)
    lyap = check_lyapunov_inequality(game, phi, _dyn(cfg)["p"], samples, seed)
    cont = check_continuous_potential(game, phi, min(samples, 100), seed)
    rows = [["ordinal", ordinal.is_ordinal, None],
            ["exact", ordinal.is_exact, None],
            ["lyapunov_inequality", lyap.passed, len(lyap.violations)],
            ["gradient_identity", cont.gradient_ok, cont.gradient_error],
            ["externality_symmetry", cont.symmetry_ok, cont.symmetry_error]]
    files = {"verify.csv": write_csv(out / "verify.csv", ["check", "passed", "value"], rows)}
    passed = ordinal.is_ordinal and lyap.passed and (cont.passed or not ordinal.is_exact)
    summary = {r[0]: r[1] for r in rows}
    summary["witness"] = None if ordinal.witness is None else ordinal.witness.__dict__
    summary["exact_witness"] = None if ordinal.exact_witness is None else ordinal.exact_witness.__dict__
    if lyap.violations:
        v = lyap.violations[0]
        summary["lyapunov_witness"] = {"profile": [q.tolist() for q in v.profile], "value": v.value}
    return files, summary, passed


def _drift(cfg, loaded, out):
    game = loaded.game
    if loaded.potential is None:
        raise ValueError("drift-check needs a potential in the game file")
    F = _F(loaded)
    d = _dyn(cfg)
    bs = cfg.sweep.get("b", [d["b"]])
    Q = _Q(loaded, cfg, "Q")
    rows, reports = [], []
    for b in bs:
        r = exact_one_step_drift(game, F, Q, _config({**d, "b": b}))
        reports.append(r)
        rows.append([b, r.exact, r.gradient_form, r.formula, r.residual, r.b2_coefficient,
                     r.branches["replicator"], r.branches["uniform"], r.prob_total,
                     r.identity_holds])
    files = {"drift.csv": write_csv(out / "drift.csv",
                                    ["b", "exact_dF", "gradient_form", "formula_dF", "residual",
                                     "b2_coefficient", "replicator", "uniform", "prob_total",
                                     "identity_holds"], rows)}
    resid = [abs(r.residual) for r in reports]
    summary = {"identity_holds": all(r.identity_holds for r in reports),
               "max_identity_gap": max(r.identity_gap for r in reports),
               "prob_total_error": max(abs(r.prob_total - 1) for r in reports)}
    if len(bs) >= 3 and min(resid) > 0:
        summary["residual_exponent"] = loglog_slope(bs, resid)
    passed = summary["identity_holds"] and summary["prob_total_error"] <= 1e-12
    return files, summary, passed


def _hit(cfg, loaded, out):
    game, F = loaded.game, _F(loaded)
    if F is None:
        raise ValueError("hit-time needs a potential in the game file")
    P = cfg.params
    d = _dyn(cfg, alpha=0.9)
    eps_list = [float(e) for e in cfg.sweep.get("eps", [P.get("eps", 0.1)])]
    c = float(P.get("c", 0.25))
    trials = int(P.get("trials", 1000))
    max_steps = int(P.get("max_steps", 10**6))
    Q0 = _Q(loaded, cfg)
    files, summary, passed = {}, {"cells": {}}, True
    for seed in cfg.seeds:
        rows, means = [], []
        for k, eps in enumerate(eps_list):
            h = hitting_time_trials(game, F, Q0, eps, c=c, alpha=float(d["alpha"]), p=d["p"],
                                    trials=trials, max_steps=max_steps, seed=seed + 1000 * k)
            kc = drift_constant(game, F, DynamicsConfig(b=h.b, alpha=float(d["alpha"]),
                                                        p=tuple(d["p"]) if d["p"] else None),
                                eps, int(P.get("kappa_samples", 2000)), seed)
            bound = h.z0 / kc.kappa if kc.kappa > 0 else float("inf")
            ok = kc.kappa > 0 and h.mean <= bound
            passed &= ok
            means.append(h.mean)
            rows.append([eps, h.b, h.mean, h.ci[0], h.ci[1], h.censored, trials, h.z0, kc.kappa,
                         bound, ok])
        ratios = []
        for k in range(1, len(eps_list)):
            if abs(eps_list[k] - eps_list[k - 1] / 2) < 1e-12 and means[k - 1] > 0:
                r = means[k] / means[k - 1]
                ratios.append(r)
                passed &= 1.3 <= r <= 3.0
        name = f"hit_time_seed{seed}.csv"
        files[name] = write_csv(out / name, ["eps", "b", "mean_tau", "ci_low", "ci_high", "censored",
                                             "trials", "z0", "kappa", "bound", "bound_ok"], rows)
        summary["cells"][str(seed)] = {"means": means, "ratios": ratios,
                                       "censored": [r[5] for r in rows]}
    return files, summary, bool(passed)


def _escape(cfg, loaded, out):
    game, F = loaded.game, _F(loaded)
    if F is None:
        raise ValueError("escape-prob needs a potential in the game file")
    P = cfg.params
    d = _dyn(cfg)
    lams = [float(x) for x in cfg.sweep.get("lam", [P.get("lam", 2.0)])]
    files, summary, passed = {}, {}, True
    for seed in cfg.seeds:
        res = escape_fractions(game, F, _Q(loaded, cfg), lams, float(d["b"]),
                               int(P.get("trials", 2000)), int(P.get("horizon", 10**5)), seed,
                               float(d["alpha"]), d["p"])
        rows = [[r.lam, r.fraction, r.bound, r.margin, r.threshold, r.trials, r.passed] for r in res]
        passed &= all(r.passed for r in res)
        name = f"escape_seed{seed}.csv"
        files[name] = write_csv(out / name, ["lam", "fraction", "bound", "margin", "threshold",
                                             "trials", "passed"], rows)
        summary[str(seed)] = {str(r.lam): r.fraction for r in res}
    return files, summary, bool(passed)


def _ode_dev(cfg, loaded, out):
    game = loaded.game
    P = cfg.params
    d = _dyn(cfg)
    bs = [float(b) for b in cfg.sweep.get("b", [0.04, 0.02, 0.01])]
    files, summary, passed = {}, {}, True
    for seed in cfg.seeds:
        rows = ode_deviation(game, _Q(loaded, cfg), bs, float(P.get("T", 5.0)),
                             int(P.get("trials", 200)), seed, float(d["alpha"]), d["p"],
                             P.get("h"), P.get("statistic", "mean-sup"))
        by_b = sorted(rows, key=lambda r: -r.b)
        ok = all(b.mean < a.mean for a, b in zip(by_b, by_b[1:]))
        passed &= ok
        name = f"ode_dev_seed{seed}.csv"
        files[name] = write_csv(out / name, ["b", "mean_deviation", "stderr", "steps"],
                                [[r.b, r.mean, r.stderr, r.steps] for r in rows])
        summary[str(seed)] = {"deviation": [r.mean for r in rows], "decreasing": ok}
    return files, summary, bool(passed)


RUNNERS = {"simulate": _simulate, "ode": _ode, "classify": _classify, "nash": _nash,
           "verify-potential": _verify, "drift-check": _drift, "hit-time": _hit,
           "escape-prob": _escape, "ode-dev": _ode_dev}


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> RunManifest:
    """Run one configured experiment and write its outputs plus ``manifest.json``."""
    cfg.validate()
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    loaded = load_game(cfg.game)
    start = time.perf_counter()
    files, summary, passed = RUNNERS[cfg.experiment](cfg, loaded, out)
    wall = time.perf_counter() - start
    seeds = {"roots": list(cfg.seeds),
             "scheme": SEED_SCHEMES.get(cfg.experiment, "deterministic; no randomness")}
    manifest = RunManifest(cfg.to_dict(), __version__, seeds, wall, files, bool(passed), summary)
    write_atomic(out / MANIFEST, manifest.to_json().encode())
    return manifest


@dataclass
class ReplayReport:
    identical: bool
    mismatched: list[str]
    manifest: RunManifest


def replay(manifest_path: str | Path, out: str | Path | None = None) -> ReplayReport:
    """Re-run a manifest's config and compare every output digest."""
    manifest_path = Path(manifest_path)
    old = RunManifest.load(manifest_path)
    cfg = ExperimentConfig.from_dict(old.config)
    out = Path(out) if out is not None else manifest_path.parent / "replay"
    new = run_experiment(cfg, out)
    bad = sorted(name for name in set(old.files) | set(new.files)
                 if old.files.get(name) != new.files.get(name)
                 or sha256_file(out / name) != new.files.get(name))
    return ReplayReport(not bad, bad, new)
