import numpy as np
import pytest

from minviol.casestudy import grid_game
from minviol.game import StochasticGame, make_specs, product_game


def toy_game(rows, labels, initial=None, uc=("go",), ua=("idle",)):
    """Game from ``{(s, uc, ua): {s2: p}}`` with string state names."""
    names = sorted({k[0] for k in rows} | {t for r in rows.values() for t in r})
    names = [n for n in labels] + [n for n in names if n not in labels]
    ix = {n: i for i, n in enumerate(names)}
    cx = {a: i for i, a in enumerate(uc)}
    ax = {a: i for i, a in enumerate(ua)}
    trans = {(ix[s], cx[c], ax[a]): {ix[t]: p for t, p in row.items()}
             for (s, c, a), row in rows.items()}
    init = np.zeros(len(names))
    init[ix[initial or names[0]]] = 1.0
    return StochasticGame(states=names, labels=[labels.get(n, ()) for n in names],
                          controller_actions=list(uc), adversary_actions=list(ua),
                          transitions=trans, initial=init)


def toy_product(rows, labels, specs, **kw):
    g = toy_game(rows, labels, **kw)
    return product_game(g, make_specs(specs))


@pytest.fixture(scope="session")
def grid():
    return grid_game()


@pytest.fixture
def branch_pg():
    """start -> goal (0.6) / trap (0.4); F goal worth 10."""
    rows = {("start", "go", "idle"): {"goal": 0.6, "trap": 0.4},
            ("goal", "go", "idle"): {"goal": 1.0},
            ("trap", "go", "idle"): {"trap": 1.0}}
    return toy_product(rows, {"start": (), "goal": ("goal",), "trap": ("trap",)},
                       [("reach", "!trap U goal", 10.0)])


@pytest.fixture(scope="session")
def grid_baseline(grid):
    from minviol.synth import baseline_policy
    return baseline_policy(grid[2])


@pytest.fixture(scope="session")
def grid_report(grid):
    from minviol.synth import synthesize
    return synthesize(grid[2])


# one line per acceptance criterion, printed at the end of the run
CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
