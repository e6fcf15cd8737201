"""Game definition files.

A game file is a YAML mapping with a ``kind`` key and the fields of that
kind. ``cost_bound`` is always required; ``noise`` (default 0) adds
clamped uniform noise of that amplitude to realised costs. An optional
``potential`` is ``rosenthal``, ``lexicographic`` or ``{table: [...]}``.

    kind: normalform     costs: nested list of shape (n, m_1, ..., m_n)
    kind: congestion     resources, resource_costs (one list per resource,
                         indexed by load), strategies (per player, a list
                         of resource subsets), weights (optional)
    kind: loadbalancing  players, machine_costs, weights, allowed (optional)
    kind: taskalloc      machines, weights, policy (SPT|LPT),
                         machine_factors (optional)

``builtin:NAME`` refers to a bundled fixture, e.g. ``builtin:lb2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..games import (CongestionGame, Game, GameError, NormalFormGame, PotentialSpec,
                     TaskAllocationGame, lexicographic_spec, load_balancing_game, rosenthal_spec)

BUILTIN_PREFIX = "builtin:"


class GameFileError(GameError):
    pass


@dataclass(frozen=True, eq=False)
class LoadedGame:
    game: Game
    potential: PotentialSpec | None
    source: str


def builtin_names() -> list[str]:
    root = resources.files("replearn") / "fixtures"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def _read(ref: str) -> tuple[dict, str]:
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX):]
        path = resources.files("replearn") / "fixtures" / f"{name}.yaml"
        if not path.is_file():
            raise GameFileError(f"no bundled game {name!r}; have {builtin_names()}")
        text = path.read_text()
    else:
        p = Path(ref)
        if not p.is_file():
            raise GameFileError(f"game file {ref} not found")
        text = p.read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise GameFileError(f"{ref}: expected a mapping at top level")
    return data, ref


def _need(data: dict, key: str, where: str) -> Any:
    if key not in data:
        raise GameFileError(f"{where}: missing required key {key!r}")
    return data[key]


def build_game(data: dict, where: str = "<game>") -> LoadedGame:
    kind = _need(data, "kind", where)
    M = float(_need(data, "cost_bound", where))
    noise = float(data.get("noise", 0.0))
    try:
        if kind == "normalform":
            game = NormalFormGame(np.array(_need(data, "costs", where), dtype=float), M, noise)
        elif kind == "congestion":
            game = CongestionGame(int(_need(data, "resources", where)),
                                  tuple(tuple(frozenset(st) for st in sset)
                                        for sset in _need(data, "strategies", where)),
                                  tuple(tuple(row) for row in _need(data, "resource_costs", where)),
                                  M, data.get("weights"), noise)
        elif kind == "loadbalancing":
            game = load_balancing_game(int(_need(data, "players", where)),
                                       _need(data, "machine_costs", where), M,
                                       data.get("weights"), data.get("allowed"), noise)
        elif kind == "taskalloc":
            factors = data.get("machine_factors")
            game = TaskAllocationGame(int(_need(data, "machines", where)),
                                      tuple(_need(data, "weights", where)),
                                      str(_need(data, "policy", where)), M,
                                      tuple(factors) if factors is not None else None, noise)
        else:
            raise GameFileError(f"{where}: unknown kind {kind!r}")
    except GameFileError:
        raise
    except (GameError, TypeError, ValueError) as exc:
        raise GameFileError(f"{where}: {exc}") from exc
    return LoadedGame(game, resolve_potential(game, data.get("potential"), where), where)


def resolve_potential(game: Game, spec, where: str) -> PotentialSpec | None:
    if spec is None:
        return None
    if spec == "rosenthal":
        if not isinstance(game, CongestionGame):
            raise GameFileError(f"{where}: rosenthal potential needs a congestion game")
        return rosenthal_spec(game)
    if spec == "lexicographic":
        if not isinstance(game, TaskAllocationGame):
            raise GameFileError(f"{where}: lexicographic potential needs a task allocation game")
        return lexicographic_spec(game)
    if isinstance(spec, dict) and "table" in spec:
        table = np.array(spec["table"], dtype=float)
        if table.shape != tuple(game.strategy_counts):
            raise GameFileError(f"{where}: potential table has shape {table.shape}, "
                                f"expected {tuple(game.strategy_counts)}")
        return PotentialSpec(table, "table")
    raise GameFileError(f"{where}: unrecognised potential {spec!r}")


def load_game(ref: str) -> LoadedGame:
    data, where = _read(ref)
    return build_game(data, where)
