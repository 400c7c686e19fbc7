"""Stochastic games, specification sets and the weighted product game."""
from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .scltl import (Formula, ProductAutomaton, formula_to_dfa, letter_mask,
                    parse_formula, product_automaton, MAX_ALPHABET, MAX_STATES)

log = logging.getLogger(__name__)

SUM_TOL = 1e-9
PROB_FLOOR = 1e-12


class GameError(ValueError):
    """Malformed model or specification input."""


@dataclass
class StochasticGame:
    states: list[str]
    labels: list[frozenset[str]]
    controller_actions: list[str]
    adversary_actions: list[str]
    # (s, u_C, u_A) -> {s': probability}; admissibility is implied by presence
    transitions: dict[tuple[int, int, int], dict[int, float]]
    initial: np.ndarray
    # (s, u_C) -> adversary action that leaves u_C unperturbed, if declared
    nominal: dict[tuple[int, int], int] | None = None

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        self.labels = [frozenset(l) for l in self.labels]

    @property
    def n_states(self) -> int:
        return len(self.states)

    def controller_options(self, s: int) -> list[int]:
        return sorted({uc for (s_, uc, _) in self.transitions if s_ == s})

    def adversary_options(self, s: int) -> list[int]:
        return sorted({ua for (s_, _, ua) in self.transitions if s_ == s})

    def _options(self):
        uc = [set() for _ in self.states]
        ua = [set() for _ in self.states]
        for (s, c, a) in self.transitions:
            if 0 <= s < len(self.states):
                uc[s].add(c)
                ua[s].add(a)
        return [sorted(x) for x in uc], [sorted(x) for x in ua]


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "ok" if self.ok else "\n".join(self.violations)


def validate_game(g: StochasticGame) -> ValidationReport:
    """Collect every structural problem instead of stopping at the first."""
    rep = ValidationReport()
    n, nc, na = len(g.states), len(g.controller_actions), len(g.adversary_actions)
    if len(g.labels) != n:
        rep.violations.append(f"{len(g.labels)} labels for {n} states")
    names = lambda s, c, a: (f"({_name(g.states, s)}, {_name(g.controller_actions, c)}, "
                             f"{_name(g.adversary_actions, a)})")
    for (s, c, a), row in sorted(g.transitions.items()):
        if not (0 <= s < n and 0 <= c < nc and 0 <= a < na):
            rep.violations.append(f"dangling index in row {(s, c, a)}")
            continue
        for s2, p in sorted(row.items()):
            if not 0 <= s2 < n:
                rep.violations.append(f"dangling successor {s2} at {names(s, c, a)}")
            if not np.isfinite(p) or p < 0:
                rep.violations.append(f"negative or non-finite probability {p} at {names(s, c, a)}")
        total = sum(row.values())
        if abs(total - 1.0) > SUM_TOL:
            rep.violations.append(f"row sum {total:.12g} at {names(s, c, a)}")
    ucs, uas = g._options()
    for s in range(n):
        if not ucs[s]:
            rep.violations.append(f"no controller action at {g.states[s]}")
        if not uas[s]:
            rep.violations.append(f"no adversary action at {g.states[s]}")
        for c in ucs[s]:
            for a in uas[s]:
                if (s, c, a) not in g.transitions:
                    rep.violations.append(f"missing transition row at {names(s, c, a)}")
    gamma = g.initial
    if gamma.shape != (n,):
        rep.violations.append(f"initial distribution has shape {gamma.shape}, expected ({n},)")
    elif np.any(gamma < 0) or abs(gamma.sum() - 1.0) > SUM_TOL:
        rep.violations.append(f"initial distribution invalid: entries "
                              f"{[float(x) for x in gamma]} sum to {gamma.sum():.12g}")
    return rep


def _name(seq, i):
    return seq[i] if 0 <= i < len(seq) else f"#{i}"


# --- specifications ------------------------------------------------------------

@dataclass(frozen=True)
class Spec:
    name: str
    formula: Formula
    reward: float
    text: str = ""


def make_specs(items: Iterable[tuple[str, str | Formula, float]]) -> list[Spec]:
    specs = []
    for name, f, r in items:
        text = f if isinstance(f, str) else str(f)
        formula = parse_formula(f) if isinstance(f, str) else f
        specs.append(Spec(name, formula, float(r), text))
    check_specs(specs)
    return specs


def check_specs(specs: Sequence[Spec]) -> None:
    if not specs:
        raise GameError("no specifications")
    seen = set()
    for s in specs:
        if s.name in seen:
            raise GameError(f"duplicate specification name {s.name!r}")
        seen.add(s.name)
        if not np.isfinite(s.reward) or s.reward < 0:
            raise GameError(f"reward of {s.name!r} must be finite and non-negative, got {s.reward}")


def compile_specs(specs: Sequence[Spec], *, max_alphabet: int = MAX_ALPHABET,
                  max_states: int = MAX_STATES) -> ProductAutomaton:
    check_specs(specs)
    dfas = [formula_to_dfa(s.formula, max_alphabet=max_alphabet, max_states=max_states)
            for s in specs]
    return product_automaton(dfas, max_states=max_states, max_alphabet=max_alphabet)


# --- product game ----------------------------------------------------------------

class ProductGame:
    """Reachable product of a game with the specifications' product automaton.

    Rows of the kernel are indexed by ``(sp * n_uc + uc) * n_ua + ua`` over the
    global action sets; rows of inadmissible action pairs are empty.
    """

    def __init__(self, game, automaton, specs, states, kernel, gamma, init_reward):
        self.game = game
        self.automaton = automaton
        self.specs = list(specs)
        self.states: list[tuple[int, int]] = states  # (game state, automaton state)
        self.n = len(states)
        self.n_uc = len(game.controller_actions)
        self.n_ua = len(game.adversary_actions)
        self.rewards = np.array([s.reward for s in self.specs])
        self.gamma = gamma
        self.init_reward = init_reward

        self.uc_mask = np.zeros((self.n, self.n_uc), dtype=bool)
        self.ua_mask = np.zeros((self.n, self.n_ua), dtype=bool)
        self._succ: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        rows, cols, vals = [], [], []
        R = np.zeros(self.n * self.n_uc * self.n_ua)
        for (i, c, a), (succ, prob, w) in kernel.items():
            self.uc_mask[i, c] = True
            self.ua_mask[i, a] = True
            r = self.row(i, c, a)
            self._succ[r] = (succ, prob, w)
            rows.extend([r] * len(succ))
            cols.extend(succ.tolist())
            vals.extend(prob.tolist())
            R[r] = float(prob @ w)
        self.T = sp.csr_matrix((vals, (rows, cols)), shape=(len(R), self.n))
        self.R = R
        self.row_mask = np.zeros((self.n, self.n_uc, self.n_ua), dtype=bool)
        for r in self._succ:
            self.row_mask.flat[r] = True

        acc = [automaton.component_accepting(q) for _, q in states]
        absorbing = [automaton.component_absorbing(q) for _, q in states]
        self.comp_accepting = np.array(acc, dtype=bool).reshape(self.n, len(self.specs))
        self.accepting = self.comp_accepting.all(axis=1)
        self.dest = np.array(absorbing, dtype=bool).reshape(self.n, len(self.specs)).all(axis=1)
        self.names = [f"{game.states[s]}@{'.'.join(map(str, automaton.states[q]))}"
                      for s, q in states]
        self.index = {name: i for i, name in enumerate(self.names)}

    # -- structure ------------------------------------------------------------
    @property
    def n_rows(self) -> int:
        return self.n * self.n_uc * self.n_ua

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())

    def row(self, sp_: int, uc: int, ua: int) -> int:
        return (sp_ * self.n_uc + uc) * self.n_ua + ua

    def controller_options(self, sp_: int) -> np.ndarray:
        return np.nonzero(self.uc_mask[sp_])[0]

    def adversary_options(self, sp_: int) -> np.ndarray:
        return np.nonzero(self.ua_mask[sp_])[0]

    def successors(self, sp_: int, uc: int, ua: int):
        """``(successors, probabilities, weights)`` of one admissible row."""
        return self._succ[self.row(sp_, uc, ua)]

    def weight(self, sp_: int, uc: int, ua: int, sp2: int) -> float:
        """Reward for specifications whose component first turns accepting."""
        entering = ~self.comp_accepting[sp_] & self.comp_accepting[sp2]
        return float(self.rewards[entering].sum())

    def objective(self, V: np.ndarray) -> float:
        """gamma-weighted value including rewards earned on the initial label."""
        return float(self.gamma @ (self.init_reward + V))

    def describe(self, sp_: int) -> tuple[str, tuple[int, ...]]:
        s, q = self.states[sp_]
        return self.game.states[s], self.automaton.states[q]

    def initial_states(self) -> np.ndarray:
        return np.nonzero(self.gamma > 0)[0]


def build_product_game(g: StochasticGame, pa: ProductAutomaton, specs: Sequence[Spec], *,
                       extra_states: Iterable[tuple[int, int]] = (),
                       max_states: int = MAX_STATES,
                       prob_floor: float = PROB_FLOOR) -> ProductGame:
    """Reachable weighted product game.

    The automaton reads the label of the initial game state before play, so a
    specification already met there is credited through ``init_reward``.
    Labels are projected onto the automaton's atom set. ``extra_states`` adds
    further ``(game state, automaton state)`` roots with zero initial weight.
    """
    check_specs(specs)
    if len(pa.components) != len(specs):
        raise GameError(f"automaton has {len(pa.components)} components for {len(specs)} specs")
    rep = validate_game(g)
    if not rep.ok:
        raise GameError("invalid game:\n" + str(rep))
    masks = [letter_mask(l, pa.atoms) for l in g.labels]
    rewards = np.array([s.reward for s in specs])
    comp_acc = [np.array(pa.component_accepting(q), dtype=bool) for q in range(pa.n_states)]

    index: dict[tuple[int, int], int] = {}
    states: list[tuple[int, int]] = []
    queue: deque = deque()

    def visit(key):
        if key not in index:
            if len(states) >= max_states:
                raise GameError(f"product game exceeds {max_states} states")
            index[key] = len(states)
            states.append(key)
            queue.append(key)
        return index[key]

    init_weight: dict[int, float] = {}
    init_rew: dict[int, float] = {}
    acc0 = comp_acc[pa.initial]
    for s in np.nonzero(g.initial > 0)[0]:
        q = pa.delta[pa.initial][masks[s]]
        i = visit((int(s), q))
        init_weight[i] = init_weight.get(i, 0.0) + float(g.initial[s])
        init_rew[i] = float(rewards[~acc0 & comp_acc[q]].sum())
    for key in extra_states:
        visit(tuple(key))
    if not states:
        raise GameError("empty product game: no initial state")

    rows = sorted(g.transitions)
    by_state: dict[int, list] = {}
    for key in rows:
        by_state.setdefault(key[0], []).append(key)
    dropped = 0
    kernel = {}
    while queue:
        s, q = queue.popleft()
        i = index[(s, q)]
        for (_, c, a) in by_state.get(s, ()):
            dist = g.transitions[(s, c, a)]
            items = sorted((s2, p) for s2, p in dist.items() if p >= prob_floor)
            if len(items) < sum(1 for p in dist.values() if p > 0):
                dropped += 1
            total = sum(p for _, p in items)
            succ, prob, w = [], [], []
            for s2, p in items:
                q2 = pa.delta[q][masks[s2]]
                succ.append(visit((s2, q2)))
                prob.append(p / total)
                w.append(float(rewards[~comp_acc[q] & comp_acc[q2]].sum()))
            kernel[(i, c, a)] = (np.array(succ, dtype=int), np.array(prob), np.array(w))
    if dropped:
        log.warning("dropped transitions below %g in %d rows and renormalized", prob_floor, dropped)
    gamma = np.zeros(len(states))
    init_reward = np.zeros(len(states))
    for i, wgt in init_weight.items():
        gamma[i] = wgt
        init_reward[i] = init_rew[i]
    return ProductGame(g, pa, specs, states, kernel, gamma, init_reward)


def product_game(g: StochasticGame, specs: Sequence[Spec], **kw) -> ProductGame:
    """Compile the specifications and build the product game in one call."""
    pa = compile_specs(specs, **{k: v for k, v in kw.items() if k in ("max_alphabet",)})
    return build_product_game(g, pa, specs, **{k: v for k, v in kw.items()
                                               if k not in ("max_alphabet",)})


def collapse_adversary(g: StochasticGame, nominal: dict[tuple[int, int], int] | None = None,
                       name: str = "none") -> StochasticGame:
    """Game in which the adversary only ever plays its non-interfering action."""
    nominal = nominal if nominal is not None else g.nominal
    if nominal is None:
        raise GameError("game declares no nominal adversary action")
    trans = {}
    for (s, c, a), row in g.transitions.items():
        if nominal.get((s, c)) == a:
            trans[(s, c, 0)] = dict(row)
    return StochasticGame(states=list(g.states), labels=list(g.labels),
                          controller_actions=list(g.controller_actions),
                          adversary_actions=[name], transitions=trans,
                          initial=g.initial.copy(),
                          nominal={k: 0 for k in nominal})


# --- JSON ingestion ------------------------------------------------------------

_MODEL_KEYS = {"states", "controller_actions", "adversary_actions", "transitions",
               "nominal_adversary", "description"}
_STATE_KEYS = {"name", "labels", "initial"}
_TRANS_KEYS = {"from", "uc", "ua", "to", "p"}
_SPEC_KEYS = {"name", "formula", "reward"}


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise GameError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise GameError(f"{where}: unknown field(s) {sorted(extra)}")


def game_from_dict(d: dict) -> StochasticGame:
    """Build a game from the model-file schema.

    ``nominal_adversary`` is either an adversary action name or ``"match"``
    (the adversary action named like the controller action).
    """
    _reject_unknown(d, _MODEL_KEYS, "model")
    for key in ("states", "controller_actions", "adversary_actions", "transitions"):
        if key not in d:
            raise GameError(f"model: missing field {key!r}")
    names, labels, weights = [], [], []
    for k, st in enumerate(d["states"]):
        _reject_unknown(st, _STATE_KEYS, f"states[{k}]")
        if "name" not in st:
            raise GameError(f"states[{k}]: missing name")
        names.append(str(st["name"]))
        labels.append(frozenset(st.get("labels", [])))
        weights.append(float(st.get("initial", 0.0)))
    if len(set(names)) != len(names):
        raise GameError("model: duplicate state names")
    uc_names = [str(a) for a in d["controller_actions"]]
    ua_names = [str(a) for a in d["adversary_actions"]]
    s_ix = {n: i for i, n in enumerate(names)}
    c_ix = {n: i for i, n in enumerate(uc_names)}
    a_ix = {n: i for i, n in enumerate(ua_names)}
    trans: dict[tuple[int, int, int], dict[int, float]] = {}
    for k, t in enumerate(d["transitions"]):
        _reject_unknown(t, _TRANS_KEYS, f"transitions[{k}]")
        try:
            key = (s_ix[t["from"]], c_ix[t["uc"]], a_ix[t["ua"]])
            s2 = s_ix[t["to"]]
            p = float(t["p"])
        except KeyError as exc:
            raise GameError(f"transitions[{k}]: unknown or missing {exc.args[0]!r}") from None
        row = trans.setdefault(key, {})
        row[s2] = row.get(s2, 0.0) + p
    nominal = None
    nom = d.get("nominal_adversary")
    if nom is not None:
        nominal = {}
        for (s, c, a) in trans:
            want = uc_names[c] if nom == "match" else nom
            if want not in a_ix:
                raise GameError(f"nominal adversary action {want!r} unknown")
            if a == a_ix[want]:
                nominal[(s, c)] = a
    return StochasticGame(names, labels, uc_names, ua_names, trans, np.array(weights), nominal)


def game_to_dict(g: StochasticGame, nominal: str | None = None) -> dict:
    out = {
        "states": [{"name": n, "labels": sorted(l), "initial": float(w)}
                   for n, l, w in zip(g.states, g.labels, g.initial)],
        "controller_actions": list(g.controller_actions),
        "adversary_actions": list(g.adversary_actions),
        "transitions": [{"from": g.states[s], "uc": g.controller_actions[c],
                         "ua": g.adversary_actions[a], "to": g.states[s2], "p": p}
                        for (s, c, a), row in sorted(g.transitions.items())
                        for s2, p in sorted(row.items())],
    }
    if nominal is not None:
        out["nominal_adversary"] = nominal
    return out


def load_game(path: str | Path) -> StochasticGame:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameError(f"{path}: {exc}") from None
    return game_from_dict(d)


def specs_from_list(items: list) -> list[Spec]:
    if not isinstance(items, list):
        raise GameError("spec file: expected a list")
    out = []
    for k, it in enumerate(items):
        _reject_unknown(it, _SPEC_KEYS, f"specs[{k}]")
        if not {"name", "formula", "reward"} <= set(it):
            raise GameError(f"specs[{k}]: needs name, formula and reward")
        out.append((str(it["name"]), str(it["formula"]), float(it["reward"])))
    return make_specs(out)


def load_specs(path: str | Path) -> list[Spec]:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameError(f"{path}: {exc}") from None
    return specs_from_list(d)
