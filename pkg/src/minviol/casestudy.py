"""The 3x3 office-floor grid with a door-closing adversary.

Only the layout and two numbers are given for this scenario: a compromised
move reaches its intended cell with probability 0.6, and the adversary can
hold the robot in place at the ECE lab. Everything else here is a
reconstruction:

* an uncompromised move (adversary plays the same direction) succeeds surely;
* a compromised move spreads the remaining 0.4 evenly over the other in-grid
  neighbours;
* the classroom and the obstacle cell are absorbing (the robot stops there);
* ``B`` at the ECE lab turns every controller action into a self-loop.
"""
from __future__ import annotations

import json
from importlib import resources

# row-major, (0, 0) is the upper-left start cell
LAYOUT = [
    ["start", "CPS_lab", "ECE_lounge"],
    ["hall_w", "hall_c", "ECE_lab"],
    ["classroom", "obstacle", "hall_e"],
]
LABELS = {"CPS_lab", "ECE_lounge", "ECE_lab", "classroom", "obstacle"}
ABSORBING = {"classroom", "obstacle"}
MOVES = {"N": (-1, 0), "S": (1, 0), "W": (0, -1), "E": (0, 1)}
BLOCK = "B"
BLOCK_AT = "ECE_lab"
SUCCESS = 0.6

GRID_TASKS = [
    ("phi1", "G !obstacle & F(CPS_lab & (F ECE_lab & F classroom))", 50.0),
    ("phi2", "G !obstacle & F(CPS_lab & F classroom)", 20.0),
    ("phi3", "G !obstacle & F(ECE_lab & F classroom)", 20.0),
    ("phi4", "CPS_lab -> F ECE_lounge", 10.0),
]


def _neighbours(layout, r, c):
    out = {}
    for a, (dr, dc) in MOVES.items():
        rr, cc = r + dr, c + dc
        if 0 <= rr < len(layout) and 0 <= cc < len(layout[0]):
            out[a] = layout[rr][cc]
    return out


def grid_model(layout=LAYOUT, success: float = SUCCESS, start: str = "start") -> dict:
    """Model-file dictionary for the grid."""
    states, transitions = [], []
    for r, row in enumerate(layout):
        for c, name in enumerate(row):
            states.append({"name": name, "labels": [name] if name in LABELS else [],
                           "initial": 1.0 if name == start else 0.0})
            nb = _neighbours(layout, r, c)
            advs = list(nb) + ([BLOCK] if name == BLOCK_AT else [])
            for uc, target in nb.items():
                for ua in advs:
                    if name in ABSORBING or ua == BLOCK:
                        dist = {name: 1.0}
                    elif ua == uc:
                        dist = {target: 1.0}
                    else:
                        others = [t for a, t in nb.items() if a != uc]
                        dist = {target: success}
                        for t in others:
                            dist[t] = dist.get(t, 0.0) + (1.0 - success) / len(others)
                    for to, p in dist.items():
                        transitions.append({"from": name, "uc": uc, "ua": ua, "to": to, "p": p})
    return {
        "description": "3x3 grid; compromised moves reach the intended cell with "
                       f"probability {success}; the door of {BLOCK_AT} can be closed",
        "states": states,
        "controller_actions": list(MOVES),
        "adversary_actions": list(MOVES) + [BLOCK],
        "nominal_adversary": "match",
        "transitions": transitions,
    }


def grid_specs() -> list[dict]:
    return [{"name": n, "formula": f, "reward": r} for n, f, r in GRID_TASKS]


def fixture_path(name: str):
    return resources.files("minviol") / "fixtures" / name


def load_fixture(name: str):
    return json.loads(fixture_path(name).read_text())


def write_fixtures(directory) -> None:
    from pathlib import Path
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "grid_model.json").write_text(json.dumps(grid_model(), indent=1) + "\n")
    (d / "grid_specs.json").write_text(json.dumps(grid_specs(), indent=1) + "\n")


def grid_game():
    """The shipped grid as ``(StochasticGame, specs, ProductGame)``."""
    from .game import game_from_dict, product_game, specs_from_list
    g = game_from_dict(load_fixture("grid_model.json"))
    specs = specs_from_list(load_fixture("grid_specs.json"))
    return g, specs, product_game(g, specs)
