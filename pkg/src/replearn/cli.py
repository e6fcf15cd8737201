"""Command-line entry point: one subcommand per experiment kind, plus run/replay/suite.

Every subcommand prints a JSON summary on stdout and exits 0 when its
checks pass, 1 when they fail, 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .harness.config import ConfigError, ExperimentConfig, load_config
from .harness.experiments import MANIFEST, _jsonable, parse_profile, replay, run_experiment
from .harness.io import csv_bytes, write_atomic
from .harness.suite import builtin_suite

# flag name -> (section, key)
FLAG_MAP = {
    "game": (None, "game"),
    "b": ("dynamics", "b"), "alpha": ("dynamics", "alpha"), "p": ("dynamics", "p"),
    "steps": ("params", "steps"), "stride": ("params", "stride"), "Q0": ("params", "Q0"),
    "Q": ("params", "Q"), "T": ("params", "T"), "h": ("params", "h"),
    "scaled": ("params", "scaled"), "record_every": ("params", "record_every"),
    "eps": ("params", "eps"), "tol": ("params", "tol"), "samples": ("params", "samples"),
    "potential": ("params", "potential"), "c": ("params", "c"), "trials": ("params", "trials"),
    "max_steps": ("params", "max_steps"), "horizon": ("params", "horizon"),
    "statistic": ("params", "statistic"), "kappa_samples": ("params", "kappa_samples"),
    "b_sweep": ("sweep", "b"), "eps_sweep": ("sweep", "eps"), "lam_sweep": ("sweep", "lam"),
}


def _profile_arg(text: str):
    path = Path(text)
    if path.is_file():
        return parse_profile(yaml.safe_load(path.read_text()))
    return parse_profile(text)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="root seed (default 0)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="YAML configuration file")


def _game(p):
    p.add_argument("--game", help="game file or builtin:NAME")


def _dyn(p, b=True):
    if b:
        p.add_argument("--b", type=float, help="step size")
    p.add_argument("--alpha", type=float, help="replicator weight in (0, 1]")
    p.add_argument("--p", type=float, nargs="+", help="player selection probabilities")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="replearn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate trajectories to CSV")
    _common(p), _game(p), _dyn(p)
    p.add_argument("--steps", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--Q0", type=_profile_arg, help='e.g. "0.9,0.1;0.9,0.1" or a YAML file')

    p = sub.add_parser("ode", help="integrate the mean-field ODE")
    _common(p), _game(p), _dyn(p, b=False)
    p.add_argument("--Q0", type=_profile_arg)
    p.add_argument("--T", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--record-every", dest="record_every", type=int)
    p.add_argument("--no-scaling", dest="scaled", action="store_const", const=False,
                   help="drop the 1/M factor from the field")

    p = sub.add_parser("classify", help="classify a profile: stationary, Nash, eps-Nash")
    _common(p), _game(p), _dyn(p, b=False)
    p.add_argument("--Q", type=_profile_arg)
    p.add_argument("--eps", type=float)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("nash", help="enumerate pure Nash equilibria")
    _common(p), _game(p)

    p = sub.add_parser("verify-potential", help="check a potential against the game")
    _common(p), _game(p), _dyn(p, b=False)
    p.add_argument("--potential", help="rosenthal, lexicographic, or a YAML file with a table")
    p.add_argument("--samples", type=int)

    p = sub.add_parser("drift-check", help="exact one-step drift against the closed form")
    _common(p), _game(p), _dyn(p, b=False)
    p.add_argument("--Q", type=_profile_arg)
    p.add_argument("--b", dest="b_sweep", type=float, nargs="+", help="one or more step sizes")

    p = sub.add_parser("hit-time", help="eps-Nash hitting times")
    _common(p), _game(p), _dyn(p, b=False)
    p.add_argument("--Q0", type=_profile_arg)
    p.add_argument("--eps", dest="eps_sweep", type=float, nargs="+")
    p.add_argument("--c", type=float, help="b = c * eps")
    p.add_argument("--trials", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--kappa-samples", dest="kappa_samples", type=int)

    p = sub.add_parser("escape-prob", help="level-set escape fractions")
    _common(p), _game(p), _dyn(p)
    p.add_argument("--Q0", type=_profile_arg)
    p.add_argument("--lam", dest="lam_sweep", type=float, nargs="+")
    p.add_argument("--trials", type=int)
    p.add_argument("--horizon", type=int)

    p = sub.add_parser("ode-dev", help="stochastic paths against the ODE")
    _common(p), _game(p), _dyn(p, b=False)
    p.add_argument("--Q0", type=_profile_arg)
    p.add_argument("--b", dest="b_sweep", type=float, nargs="+")
    p.add_argument("--T", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--statistic", choices=("mean-sup", "sup-mean"))

    p = sub.add_parser("run", help="run the experiment described by --config")
    _common(p)

    p = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    _common(p)
    p.add_argument("manifest", help=f"path to a {MANIFEST}")

    p = sub.add_parser("suite", help="run the acceptance suite on the bundled games")
    _common(p)
    p.add_argument("--scale", type=float, help="trial-count multiplier (default 1)")
    p.add_argument("--only", type=int, nargs="+", help="criterion numbers to run")
    return ap


def config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if args.command != "run" and cfg.experiment != args.command:
            raise ConfigError(f"config describes {cfg.experiment!r}, not {args.command!r}")
    elif args.command == "run":
        raise ConfigError("run needs --config")
    else:
        cfg = ExperimentConfig(args.command, "", out=f"results/{args.command}")
    for flag, (section, key) in FLAG_MAP.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if flag == "potential" and Path(value).is_file():
            value = yaml.safe_load(Path(value).read_text())
        if section is None:
            setattr(cfg, key, value)
        else:
            getattr(cfg, section)[key] = value
    if cfg.game and not cfg.game.startswith("builtin:"):
        cfg.game = str(Path(cfg.game).resolve())
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.out:
        cfg.out = args.out
    return cfg.validate()


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))


def _suite(args) -> int:
    opts = {}
    if args.config:
        opts = yaml.safe_load(Path(args.config).read_text()) or {}
    scale = args.scale if args.scale is not None else float(opts.get("scale", 1.0))
    only = args.only or opts.get("only")
    verdicts = builtin_suite(scale, only, echo=lambda line: print(line, file=sys.stderr))
    if args.out:
        rows = [[v.number, v.name, v.passed, v.reduced, v.seconds,
                 json.dumps(v.detail, default=str, sort_keys=True)] for v in verdicts]
        write_atomic(Path(args.out) / "suite.csv",
                     csv_bytes(["criterion", "name", "passed", "reduced", "seconds", "detail"], rows))
    ok = all(v.passed for v in verdicts)
    _emit({"command": "suite", "passed": ok, "scale": scale,
           "criteria": {str(v.number): v.passed for v in verdicts}})
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "suite":
            return _suite(args)
        if args.command == "replay":
            if args.seed is not None or args.config:
                raise ConfigError("replay takes its seeds and config from the manifest")
            rep = replay(args.manifest, args.out)
            _emit({"command": "replay", "passed": rep.identical, "mismatched": rep.mismatched,
                   "files": rep.manifest.files})
            return 0 if rep.identical else 1
        cfg = config_from_args(args)
        man = run_experiment(cfg)
        _emit({"command": cfg.experiment, "passed": man.passed, "out": cfg.out,
               "files": man.files, "summary": man.summary})
        return 0 if man.passed else 1
    except (ConfigError, ValueError, ArithmeticError, OSError) as exc:
        print(json.dumps({"error": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
