"""Random games, specifications and formulas for property checks."""
from __future__ import annotations

import numpy as np

from .game import GameError, StochasticGame, make_specs, product_game
from .scltl import Formula, always, atom, conj, disj, eventually, neg, nxt, until

TEMPLATES = ["F {0}", "F({0} & F {1})", "G !{1} & F {0}", "!{0} U {1}", "X {0}",
             "{0} -> F {1}", "F {0} | F {1}", "G !{0} & F({1} & X {0})"]


def random_game(rng: np.random.Generator, n_states: int = 3, n_uc: int = 2, n_ua: int = 2,
                atoms=("a", "b"), p_label: float = 0.4, max_succ: int = 3,
                p_admissible: float = 0.8) -> StochasticGame:
    """Game with random labels, admissible sets and sparse kernels."""
    labels = [frozenset(a for a in atoms if rng.random() < p_label) for _ in range(n_states)]
    trans = {}
    for s in range(n_states):
        ucs = [c for c in range(n_uc) if rng.random() < p_admissible] or [int(rng.integers(n_uc))]
        uas = [a for a in range(n_ua) if rng.random() < p_admissible] or [int(rng.integers(n_ua))]
        for c in ucs:
            for a in uas:
                k = int(rng.integers(1, min(max_succ, n_states) + 1))
                succ = rng.choice(n_states, size=k, replace=False)
                p = rng.dirichlet(np.ones(k))
                trans[(s, c, a)] = {int(t): float(q) for t, q in zip(succ, p)}
    init = np.zeros(n_states)
    init[0] = 1.0
    if n_states > 1 and rng.random() < 0.3:
        init = rng.dirichlet(np.ones(n_states))
    return StochasticGame(states=[f"s{i}" for i in range(n_states)], labels=labels,
                          controller_actions=[f"c{i}" for i in range(n_uc)],
                          adversary_actions=[f"a{i}" for i in range(n_ua)],
                          transitions=trans, initial=init)


def random_specs(rng: np.random.Generator, atoms=("a", "b"), n_specs: int = 2):
    items = []
    for i in range(n_specs):
        x, y = rng.choice(len(atoms), size=2, replace=len(atoms) < 2)
        text = TEMPLATES[int(rng.integers(len(TEMPLATES)))].format(atoms[x], atoms[y])
        items.append((f"phi{i + 1}", text, float(rng.integers(1, 11))))
    return make_specs(items)


def random_product_game(rng: np.random.Generator, max_product: int = 6, tries: int = 200, **kw):
    """A product game with at most ``max_product`` states."""
    n_specs = kw.pop("n_specs", 1 + int(rng.integers(2)))
    for _ in range(tries):
        g = random_game(rng, **kw)
        specs = random_specs(rng, kw.get("atoms", ("a", "b")), n_specs)
        try:
            pg = product_game(g, specs, max_states=max_product)
        except GameError:
            continue
        return pg
    raise RuntimeError(f"no product game with at most {max_product} states in {tries} tries")


def random_formula(rng: np.random.Generator, atoms=("a", "b", "c"), depth: int = 4,
                   min_depth: int = 0) -> Formula:
    """Random positive-normal-form formula of nesting depth at most ``depth``.

    The top ``min_depth`` levels are always operators.
    """
    if depth <= 0 or (min_depth <= 0 and rng.random() < 0.25):
        a = atom(atoms[int(rng.integers(len(atoms)))])
        return neg(a) if rng.random() < 0.3 else a
    op = int(rng.integers(6))
    sub = lambda: random_formula(rng, atoms, depth - 1, min_depth - 1)
    if op == 0:
        return conj(sub(), sub())
    if op == 1:
        return disj(sub(), sub())
    if op == 2:
        return nxt(sub())
    if op == 3:
        return until(sub(), sub())
    if op == 4:
        return eventually(sub())
    return always(sub())
