import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minviol.casestudy import GRID_TASKS
from minviol.randgen import random_formula
from minviol.scltl import (AutomatonError, ParseError, all_words, always, atom, complete_dfa,
                           conj, disj, eventually, false, formula_to_dfa, good_prefix_accepts,
                           implies, mask_letter, neg, nxt, parse_formula, product_automaton,
                           true, until)

A, B = frozenset({"a"}), frozenset({"b"})
E = frozenset()


# --- parsing ------------------------------------------------------------------

def test_eventually_is_true_until():
    assert parse_formula("F target") == until(true(), atom("target"))


def test_literals():
    assert parse_formula("true") == true()
    assert parse_formula("false") == false()


def test_grid_task_row1_structure():
    f = parse_formula(GRID_TASKS[0][1])
    expected = conj(always(neg(atom("obstacle"))),
                    eventually(conj(atom("CPS_lab"),
                                    conj(eventually(atom("ECE_lab")),
                                         eventually(atom("classroom"))))))
    assert f == expected
    assert f.atoms == {"obstacle", "CPS_lab", "ECE_lab", "classroom"}


def test_implication_expands():
    assert parse_formula("a -> F b") == disj(neg(atom("a")), eventually(atom("b")))
    assert implies(atom("a"), atom("b")) == parse_formula("!a | b")


def test_precedence():
    assert parse_formula("a & b | c") == disj(conj(atom("a"), atom("b")), atom("c"))
    assert parse_formula("a U b U c") == until(atom("a"), until(atom("b"), atom("c")))
    assert parse_formula("a & b U c") == conj(atom("a"), until(atom("b"), atom("c")))
    assert parse_formula("a -> b -> c") == parse_formula("a -> (b -> c)")
    assert parse_formula("X a & b") == conj(nxt(atom("a")), atom("b"))


def test_canonical_junctions():
    assert parse_formula("b & a & b") == parse_formula("a & b")
    assert parse_formula("a & (b & c)") == parse_formula("(c & a) & b")
    assert parse_formula("a & !a") == false()
    assert parse_formula("a | (a & b)") == atom("a")
    assert parse_formula("a & true") == atom("a")
    assert parse_formula("a | true") == true()


def test_negation_normal_form():
    assert parse_formula("!(a & b)") == parse_formula("!a | !b")
    assert parse_formula("!!a") == atom("a")
    with pytest.raises(ParseError, match="temporal"):
        parse_formula("!F a")
    with pytest.raises(AutomatonError):
        neg(eventually(atom("a")))


@pytest.mark.parametrize("text, col", [("a &", 4), ("(a | b", 7), ("a $ b", 3), ("", 1)])
def test_syntax_errors_locate(text, col):
    with pytest.raises(ParseError) as exc:
        parse_formula(text)
    assert exc.value.line == 1
    assert exc.value.col == col


def test_error_line_numbers():
    with pytest.raises(ParseError) as exc:
        parse_formula("a &\n  (b |")
    assert exc.value.line == 2


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_print_parse_roundtrip(seed):
    f = random_formula(np.random.default_rng(seed), depth=4)
    assert parse_formula(str(f)) == f


# --- automata -----------------------------------------------------------------

def test_atom_dfa():
    d = formula_to_dfa(atom("a"))
    assert d.n_states == 3
    q0 = d.initial
    acc = d.step(q0, A)
    assert acc in d.accepting
    assert d.step(q0, E) == d.sink
    assert d.is_absorbing(acc) and d.is_absorbing(d.sink)


def test_eventually_dfa():
    d = formula_to_dfa(parse_formula("F a"))
    assert d.n_states == 2 and d.sink is None
    assert d.step(d.initial, E) == d.initial
    assert d.step(d.initial, A) in d.accepting
    for w in all_words(("a",), 6):
        assert d.accepts(w) == any("a" in x for x in w)


def row2_oracle(word):
    """CPS_lab at some i, classroom at some j >= i, no obstacle up to j."""
    for j, letter in enumerate(word):
        if "obstacle" in letter:
            return False
        if "classroom" in letter and any("CPS_lab" in w for w in word[:j + 1]):
            return True
    return False


def test_grid_task_row2_language():
    d = formula_to_dfa(parse_formula(GRID_TASKS[1][1]))
    atoms = d.atoms
    for w in all_words(atoms, 5):
        assert d.accepts(w) == row2_oracle(w), w
    rng = np.random.default_rng(0)
    for _ in range(5000):
        w = [mask_letter(int(m), atoms) for m in rng.integers(0, 8, size=8)]
        assert d.accepts(w) == row2_oracle(w)


def test_grid_task_dfa_sizes():
    sizes = [formula_to_dfa(parse_formula(f)).n_states for _, f, _ in GRID_TASKS]
    assert sizes == [6, 4, 4, 3]


def test_alphabet_cap():
    with pytest.raises(AutomatonError, match="alphabet"):
        formula_to_dfa(parse_formula("F(a & b & c)"), max_alphabet=4)


def test_state_cap():
    with pytest.raises(AutomatonError, match="residual"):
        formula_to_dfa(parse_formula("F(a & X X X b)"), max_states=3)


def test_dump_is_deterministic():
    d = formula_to_dfa(parse_formula("F a"))
    text = d.dump()
    assert text == formula_to_dfa(parse_formula("F a")).dump()
    assert "q0 --{a}--> q1" in text


@pytest.mark.parametrize("seed", range(10))
def test_dfa_invariants(seed):
    f = random_formula(np.random.default_rng(seed), atoms=("a", "b"), depth=3)
    d = formula_to_dfa(f)
    for q, row in enumerate(d.delta):
        assert len(row) == d.n_letters
        assert all(0 <= q2 < d.n_states for q2 in row)
    for q in d.accepting:
        assert all(q2 in d.accepting for q2 in d.delta[q])
    if d.sink is not None:
        assert d.is_absorbing(d.sink) and d.sink not in d.accepting


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_language_two_atoms_exhaustive(seed):
    f = random_formula(np.random.default_rng(seed), atoms=("a", "b"), depth=3)
    d = formula_to_dfa(f)
    for w in all_words(("a", "b"), 5):
        assert d.accepts(w) == good_prefix_accepts(f, w), (str(f), w)


# --- completion ---------------------------------------------------------------

def test_complete_is_identity_on_complete():
    d = formula_to_dfa(parse_formula("F a"))
    c = complete_dfa(d.atoms, d.n_states, d.initial, d.triples(), d.accepting)
    assert c.delta == d.delta and c.sink is None


def test_complete_empty_automaton():
    c = complete_dfa(("a",), 1, 0, [], [])
    assert c.n_states == 2
    assert c.delta[0] == (1, 1) and c.is_absorbing(1)
    assert not c.accepting


def test_completion_changes_language():
    d = formula_to_dfa(parse_formula("F a"))
    pending, acc = d.initial, next(iter(d.accepting))
    kept = [t for t in d.triples() if not (t[0] == pending and t[1] == 0)]
    c = complete_dfa(d.atoms, d.n_states, d.initial, kept, d.accepting)
    assert c.step(pending, E) == c.sink
    for w in all_words(("a",), 4):
        # the restored structure accepts only words starting with a
        assert c.accepts(w) == (len(w) > 0 and "a" in w[0])


def test_complete_detects_nondeterminism():
    with pytest.raises(AutomatonError, match="nondeterministic"):
        complete_dfa(("a",), 2, 0, [(0, 0, 0), (0, 0, 1)], [1])


# --- products -----------------------------------------------------------------

def test_product_of_one_is_isomorphic():
    d = formula_to_dfa(parse_formula("F(a & X b)"))
    p = product_automaton([d])
    assert p.n_states == d.n_states
    for w in all_words(("a", "b"), 4):
        assert p.accepts(w) == d.accepts(w)


def test_product_two_eventualities():
    p = product_automaton([formula_to_dfa(parse_formula("F a")),
                           formula_to_dfa(parse_formula("F b"))])
    assert p.n_states == 4
    for i in range(p.n_states):
        assert (i in p.accepting) == all(p.component_accepting(i))
    assert len(p.accepting) == 1


def test_product_grid_tasks_accepting():
    dfas = [formula_to_dfa(parse_formula(f)) for _, f, _ in GRID_TASKS]
    p = product_automaton(dfas)
    assert p.n_states == 26
    for i in range(p.n_states):
        assert (i in p.accepting) == all(p.component_accepting(i))


def test_product_of_nothing():
    with pytest.raises(AutomatonError):
        product_automaton([])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_product_is_conjunction(seed):
    rng = np.random.default_rng(seed)
    fs = [random_formula(rng, atoms=("a", "b", "c")[: 2 + k % 2], depth=3) for k in range(2)]
    dfas = [formula_to_dfa(f) for f in fs]
    p = product_automaton(dfas)
    for w in all_words(p.atoms, 4):
        assert p.accepts(w) == all(d.accepts(w) for d in dfas)
