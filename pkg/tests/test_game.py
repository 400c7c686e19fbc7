import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import toy_game, toy_product
from minviol.casestudy import grid_game, grid_model
from minviol.game import (GameError, build_product_game, collapse_adversary, compile_specs,
                          game_from_dict, game_to_dict, load_game, load_specs, make_specs,
                          product_game, validate_game)
from minviol.randgen import random_game, random_specs


def two_state(p=1.0, initial=(1.0, 0.0)):
    g = toy_game({("s0", "go", "idle"): {"s1": p}, ("s1", "go", "idle"): {"s1": 1.0}},
                 {"s0": (), "s1": ("a",)})
    g.initial = np.asarray(initial, dtype=float)
    return g


def test_valid_game():
    assert validate_game(two_state()).ok


def test_row_sum_violation():
    rep = validate_game(two_state(p=0.9))
    assert not rep.ok
    assert "row sum 0.9 at (s0, go, idle)" in str(rep)


def test_initial_distribution_violation():
    rep = validate_game(two_state(initial=(0.5, 0.6)))
    assert any("initial distribution" in v for v in rep.violations)


def test_collects_all_violations():
    g = two_state(p=0.9, initial=(0.5, 0.6))
    g.transitions[(0, 0, 0)][7] = 0.05
    rep = validate_game(g)
    assert len(rep.violations) >= 3
    assert any("dangling successor 7" in v for v in rep.violations)


def test_missing_row_reported():
    g = toy_game({("s0", "go", "x"): {"s0": 1.0}, ("s0", "stop", "y"): {"s0": 1.0}},
                 {"s0": ()}, uc=("go", "stop"), ua=("x", "y"))
    rep = validate_game(g)
    assert "missing transition row at (s0, go, y)" in rep.violations


def test_initial_label_is_consumed():
    g = toy_game({("s", "go", "idle"): {"s": 1.0}}, {"s": ("a",)})
    pg = product_game(g, make_specs([("p", "F a", 5.0)]))
    assert pg.n == 1
    assert pg.accepting[0] and pg.dest[0]
    assert pg.init_reward[0] == 5.0
    assert pg.R.sum() == 0.0
    assert pg.objective(np.zeros(1)) == 5.0


def test_simultaneous_acceptance_weight():
    rows = {("s0", "go", "idle"): {"s1": 1.0}, ("s1", "go", "idle"): {"s1": 1.0}}
    pg = toy_product(rows, {"s0": (), "s1": ("b", "c")},
                     [("p2", "F b", 20.0), ("p3", "F c", 20.0)])
    i0 = int(np.nonzero(pg.gamma)[0][0])
    succ, prob, w = pg.successors(i0, 0, 0)
    assert w.tolist() == [40.0]
    assert pg.weight(i0, 0, 0, int(succ[0])) == 40.0


def test_weight_zero_once_accepting():
    rows = {("s0", "go", "idle"): {"s1": 1.0}, ("s1", "go", "idle"): {"s0": 1.0}}
    pg = toy_product(rows, {"s0": (), "s1": ("a",)}, [("p", "F a", 3.0)])
    for i in np.nonzero(pg.comp_accepting[:, 0])[0]:
        for j in range(pg.n):
            assert pg.weight(int(i), 0, 0, j) == 0.0


def test_grid_product_weights(grid):
    _, specs, pg = grid
    n_q = compile_specs(specs).n_states
    assert pg.n <= 9 * n_q
    seen = set()
    for (succ, prob, w) in pg._succ.values():
        seen.update(w.tolist())
    # every weight is the reward sum of the specs accepting on that step
    sums = {float(sum(c)) for k in range(5) for c in itertools.combinations(pg.rewards, k)}
    assert seen <= sums
    assert 20.0 in seen


def test_phi4_alone_pays_ten(grid):
    # the start label lacks CPS_lab, so the implication holds at once
    _, _, pg = grid
    i0 = int(np.nonzero(pg.gamma)[0][0])
    assert pg.comp_accepting[i0].tolist() == [False, False, False, True]
    assert pg.init_reward[i0] == 10.0
    rows = {("s0", "go", "idle"): {"s1": 1.0}, ("s1", "go", "idle"): {"s1": 1.0}}
    toy = toy_product(rows, {"s0": ("CPS_lab",), "s1": ("ECE_lounge",)},
                      [("phi4", "CPS_lab -> F ECE_lounge", 10.0)])
    j0 = int(np.nonzero(toy.gamma)[0][0])
    assert toy.init_reward[j0] == 0.0
    assert toy.successors(j0, 0, 0)[2].tolist() == [10.0]


def test_dest_is_absorbing_in_every_component(grid):
    _, _, pg = grid
    for i in np.nonzero(pg.dest)[0]:
        for r in range(pg.row(i, 0, 0), pg.row(i + 1, 0, 0)):
            if r in pg._succ:
                assert np.all(pg._succ[r][2] == 0.0)


def test_empty_specs_error():
    with pytest.raises(GameError, match="no specifications"):
        make_specs([])


def test_duplicate_and_negative_specs():
    with pytest.raises(GameError, match="duplicate"):
        make_specs([("a", "F a", 1), ("a", "F b", 1)])
    with pytest.raises(GameError, match="non-negative"):
        make_specs([("a", "F a", -1)])


def test_product_size_cap():
    g, specs, _ = grid_game()
    with pytest.raises(GameError, match="exceeds"):
        product_game(g, specs, max_states=5)


def test_unknown_atoms_are_projected_out():
    g = toy_game({("s", "go", "idle"): {"s": 1.0}}, {"s": ("a", "zzz")})
    pg = product_game(g, make_specs([("p", "F a", 1.0)]))
    assert pg.accepting.all()


def test_json_roundtrip_and_unknown_fields(tmp_path):
    g = game_from_dict(grid_model())
    d = game_to_dict(g, nominal="match")
    g2 = game_from_dict(json.loads(json.dumps(d)))
    assert g2.states == g.states and g2.transitions == g.transitions
    assert g2.nominal == g.nominal
    d["colour"] = 1
    with pytest.raises(GameError, match="unknown field"):
        game_from_dict(d)
    del d["colour"]
    d["transitions"][0]["weight"] = 2
    with pytest.raises(GameError, match=r"transitions\[0\]"):
        game_from_dict(d)
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(GameError):
        load_game(p)
    p.write_text(json.dumps([{"name": "x", "formula": "F a", "reward": 1, "extra": 0}]))
    with pytest.raises(GameError, match="unknown"):
        load_specs(p)


def test_collapse_adversary():
    g = game_from_dict(grid_model())
    g0 = collapse_adversary(g)
    assert g0.adversary_actions == ["none"]
    assert validate_game(g0).ok
    for (s, c, a), row in g0.transitions.items():
        assert row == g.transitions[(s, c, g.nominal[(s, c)])]


def test_collapse_needs_nominal():
    with pytest.raises(GameError, match="nominal"):
        collapse_adversary(two_state())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_product_kernel_properties(seed):
    rng = np.random.default_rng(seed)
    g = random_game(rng, n_states=4, n_uc=2, n_ua=2)
    specs = random_specs(rng, n_specs=2)
    pg = product_game(g, specs)
    # rows stochastic exactly where admissible
    sums = np.asarray(pg.T.sum(axis=1)).ravel()
    assert np.allclose(sums[pg.row_mask.ravel()], 1.0)
    assert np.all(sums[~pg.row_mask.ravel()] == 0.0)
    assert pg.gamma.sum() == pytest.approx(1.0)
    # each spec pays at most once along any path: weights never exceed total reward
    assert pg.R.max(initial=0.0) <= pg.total_reward + 1e-12
    for r, (succ, prob, w) in pg._succ.items():
        s = r // (pg.n_uc * pg.n_ua)
        for s2, x in zip(succ, w):
            assert x == pytest.approx(pg.weight(s, 0, 0, int(s2)))
            # accepting components stay accepting
            assert np.all(pg.comp_accepting[s2] >= pg.comp_accepting[s])


def test_extra_states_are_roots():
    g = two_state()
    pa = compile_specs(make_specs([("p", "F a", 1.0)]))
    pg = build_product_game(g, pa, make_specs([("p", "F a", 1.0)]))
    pg2 = build_product_game(g, pa, make_specs([("p", "F a", 1.0)]),
                             extra_states=[(1, pa.initial)])
    assert pg2.n >= pg.n
    assert (1, pa.initial) in pg2.states
    assert pg2.gamma[pg2.states.index((1, pa.initial))] == 0.0
