"""Co-safe LTL formulas, their finite-word DFAs, and product automata.

Formulas are kept in a canonical positive normal form: negation only on
atoms, ``F p`` stored as ``true U p``, implications expanded, and the
children of ``&``/``|`` flattened, sorted and deduplicated. Two formulas
that print the same are equal.

DFAs are built by formula derivatives. Each DFA state is a residual
formula; reading a letter (a set of atoms) rewrites the residual one step.
A residual accepts when the obligations left in it can be met by the empty
continuation: ``true``, ``G``-parts, and Boolean combinations thereof.
Accepting residuals are collapsed into one absorbing ``true`` state, and
residuals from which no accepting state is reachable into the sink.
"""
from __future__ import annotations

import itertools
import re
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

TRUE, FALSE, ATOM, NOT, AND, OR, NEXT, UNTIL, ALWAYS = (
    "true", "false", "atom", "not", "and", "or", "X", "U", "G")

MAX_ALPHABET = 2 ** 16
MAX_STATES = 100_000


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.col = col


class AutomatonError(ValueError):
    pass


@dataclass(frozen=True, eq=True)
class Formula:
    kind: str
    children: tuple["Formula", ...] = ()
    name: str | None = None

    @cached_property
    def text(self) -> str:
        k = self.kind
        if k in (TRUE, FALSE):
            return k
        if k == ATOM:
            return self.name
        if k == NOT:
            return "!" + self.children[0].text
        if k in (AND, OR):
            op = " & " if k == AND else " | "
            return "(" + op.join(c.text for c in self.children) + ")"
        if k == NEXT:
            return "X " + _wrap(self.children[0])
        if k == ALWAYS:
            return "G " + _wrap(self.children[0])
        if k == UNTIL:
            lhs, rhs = self.children
            if lhs.kind == TRUE:
                return "F " + _wrap(rhs)
            return f"({_wrap(lhs)} U {_wrap(rhs)})"
        raise AssertionError(k)

    def __str__(self) -> str:
        return self.text

    def __repr__(self) -> str:
        return f"Formula({self.text!r})"

    @cached_property
    def atoms(self) -> frozenset[str]:
        if self.kind == ATOM:
            return frozenset([self.name])
        return frozenset().union(*(c.atoms for c in self.children))

    @cached_property
    def _hash(self) -> int:
        return hash(self.text)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Formula):
            return NotImplemented
        return self._hash == other._hash and self.text == other.text

    def __lt__(self, other: "Formula") -> bool:
        return self.text < other.text


def _wrap(f: Formula) -> str:
    if f.kind in (TRUE, FALSE, ATOM, NOT, AND, OR) or (f.kind == UNTIL and f.children[0].kind != TRUE):
        return f.text
    return "(" + f.text + ")"


T_ = Formula(TRUE)
F_ = Formula(FALSE)


def true() -> Formula:
    return T_


def false() -> Formula:
    return F_


def atom(name: str) -> Formula:
    return Formula(ATOM, name=name)


def _is_literal(f: Formula) -> bool:
    return f.kind == ATOM or f.kind == NOT


def neg(f: Formula) -> Formula:
    """Negation pushed to the atoms. Temporal operators are rejected."""
    k = f.kind
    if k == TRUE:
        return F_
    if k == FALSE:
        return T_
    if k == ATOM:
        return Formula(NOT, (f,))
    if k == NOT:
        return f.children[0]
    if k == AND:
        return disj(*(neg(c) for c in f.children))
    if k == OR:
        return conj(*(neg(c) for c in f.children))
    raise AutomatonError(f"negation of temporal formula {f} is outside the supported fragment")


def _flatten(kind, fs):
    for f in fs:
        if f.kind == kind:
            yield from f.children
        else:
            yield f


def conj(*fs: Formula) -> Formula:
    return _junction(AND, fs)


def disj(*fs: Formula) -> Formula:
    return _junction(OR, fs)


def _junction(kind: str, fs: Iterable[Formula]) -> Formula:
    unit, zero = (T_, F_) if kind == AND else (F_, T_)
    other = OR if kind == AND else AND
    items = set()
    for f in _flatten(kind, fs):
        if f == zero:
            return zero
        if f != unit:
            items.add(f)
    # p & !p is false at every position; p | !p is not (both fail at the end)
    if kind == AND:
        for f in items:
            if f.kind == NOT and f.children[0] in items:
                return F_
    # absorption: a & (a | b) -> a, a | (a & b) -> a
    if len(items) > 1:
        drop = set()
        for f in items:
            if f.kind == other and any(c in items for c in f.children):
                drop.add(f)
        items -= drop
    if not items:
        return unit
    if len(items) == 1:
        return next(iter(items))
    return Formula(kind, tuple(sorted(items)))


def nxt(f: Formula) -> Formula:
    return F_ if f == F_ else Formula(NEXT, (f,))


def until(a: Formula, b: Formula) -> Formula:
    return F_ if b == F_ else Formula(UNTIL, (a, b))


def eventually(f: Formula) -> Formula:
    return until(T_, f)


def always(f: Formula) -> Formula:
    return T_ if f == T_ else Formula(ALWAYS, (f,))


def implies(a: Formula, b: Formula) -> Formula:
    return disj(neg(a), b)


# --- parsing -----------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(->)|([!&|()])|([A-Za-z_][A-Za-z0-9_]*))")
_KEYWORDS = {"X", "U", "F", "G", "true", "false"}


def _tokenize(text: str):
    pos = 0
    line, line_start = 1, 0
    out = []
    while True:
        while pos < len(text) and text[pos].isspace():
            if text[pos] == "\n":
                line += 1
                line_start = pos + 1
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if not m or m.end() == pos:
            raise ParseError(f"unknown token {text[pos]!r}", line, col)
        tok = m.group(1) or m.group(2) or m.group(3)
        kind = "op" if (m.group(1) or m.group(2)) else ("kw" if tok in _KEYWORDS else "id")
        out.append((kind, tok, line, col))
        pos = m.end()
    out.append(("eof", "", line, pos - line_start + 1))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, tok=None):
        t = self.toks[self.i]
        if tok is not None and t[1] != tok:
            raise ParseError(f"expected {tok!r}, found {t[1] or 'end of input'!r}", t[2], t[3])
        self.i += 1
        return t

    def parse(self) -> Formula:
        f = self.implication()
        t = self.peek()
        if t[0] != "eof":
            raise ParseError(f"unexpected {t[1]!r}", t[2], t[3])
        return f

    def implication(self):
        lhs = self.disjunction()
        if self.peek()[1] == "->":
            self.take()
            return implies(lhs, self.implication())
        return lhs

    def disjunction(self):
        parts = [self.conjunction()]
        while self.peek()[1] == "|":
            self.take()
            parts.append(self.conjunction())
        return disj(*parts)

    def conjunction(self):
        parts = [self.until_()]
        while self.peek()[1] == "&":
            self.take()
            parts.append(self.until_())
        return conj(*parts)

    def until_(self):
        lhs = self.unary()
        if self.peek()[1] == "U":
            self.take()
            return until(lhs, self.until_())
        return lhs

    def unary(self):
        kind, tok, line, col = self.peek()
        if tok == "!":
            self.take()
            operand = self.unary()
            try:
                return neg(operand)
            except AutomatonError as exc:
                raise ParseError(str(exc), line, col) from None
        if tok in ("X", "F", "G"):
            self.take()
            operand = self.unary()
            return {"X": nxt, "F": eventually, "G": always}[tok](operand)
        return self.primary()

    def primary(self):
        kind, tok, line, col = self.take()
        if tok == "(":
            f = self.implication()
            self.take(")")
            return f
        if tok == "true":
            return T_
        if tok == "false":
            return F_
        if kind == "id":
            return atom(tok)
        raise ParseError(f"unexpected {tok or 'end of input'!r}", line, col)


def parse_formula(text: str) -> Formula:
    """Parse the concrete syntax into a canonical :class:`Formula`.

    Precedence, tightest first: ``! X F G``, ``U`` (right-assoc), ``&``,
    ``|``, ``->`` (right-assoc).
    """
    return _Parser(text).parse()


# --- finite-word semantics -----------------------------------------------------

def derivative(f: Formula, letter: frozenset[str]) -> Formula:
    """Residual obligation after reading one letter."""
    k = f.kind
    if k in (TRUE, FALSE):
        return f
    if k == ATOM:
        return T_ if f.name in letter else F_
    if k == NOT:
        return F_ if f.children[0].name in letter else T_
    if k == AND:
        return conj(*(derivative(c, letter) for c in f.children))
    if k == OR:
        return disj(*(derivative(c, letter) for c in f.children))
    if k == NEXT:
        return f.children[0]
    if k == UNTIL:
        a, b = f.children
        return disj(derivative(b, letter), conj(derivative(a, letter), f))
    if k == ALWAYS:
        return conj(derivative(f.children[0], letter), f)
    raise AssertionError(k)


def accepts_empty(f: Formula) -> bool:
    """Whether the residual holds on the empty continuation."""
    k = f.kind
    if k in (TRUE, ALWAYS):
        return True
    if k in (FALSE, ATOM, NOT, NEXT, UNTIL):
        return False
    if k == AND:
        return all(accepts_empty(c) for c in f.children)
    return any(accepts_empty(c) for c in f.children)


def holds(f: Formula, word: Sequence[frozenset[str]], i: int = 0) -> bool:
    """Direct recursive evaluation on a finite word from position ``i``.

    Atoms, ``X`` and ``U`` are strong (false once the word is exhausted);
    ``G`` is weak (vacuously true there).
    """
    n = len(word)
    k = f.kind
    if k == TRUE:
        return True
    if k == FALSE:
        return False
    if k == ATOM:
        return i < n and f.name in word[i]
    if k == NOT:
        return i < n and f.children[0].name not in word[i]
    if k == AND:
        return all(holds(c, word, i) for c in f.children)
    if k == OR:
        return any(holds(c, word, i) for c in f.children)
    if k == NEXT:
        return i < n and holds(f.children[0], word, i + 1)
    if k == UNTIL:
        a, b = f.children
        for j in range(i, n):
            if holds(b, word, j):
                return True
            if not holds(a, word, j):
                return False
        return False
    if k == ALWAYS:
        return all(holds(f.children[0], word, j) for j in range(i, n))
    raise AssertionError(k)


def good_prefix_accepts(f: Formula, word: Sequence[frozenset[str]]) -> bool:
    """True iff some prefix of ``word`` satisfies ``f``."""
    return any(holds(f, word[:k]) for k in range(len(word) + 1))


def _clauses(f: Formula) -> frozenset[frozenset[Formula]]:
    k = f.kind
    if k == TRUE:
        return frozenset([frozenset()])
    if k == FALSE:
        return frozenset()
    if k == OR:
        return _minimal(frozenset().union(*(_clauses(c) for c in f.children)))
    if k == AND:
        out = frozenset([frozenset()])
        for c in f.children:
            out = _minimal(frozenset(a | b for a in out for b in _clauses(c)))
        return out
    return frozenset([frozenset([f])])


def _minimal(cs):
    """Drop contradictory clauses and clauses subsumed by a smaller one."""
    ok = []
    for c in cs:
        names = {x.name for x in c if x.kind == ATOM}
        if any(x.kind == NOT and x.children[0].name in names for x in c):
            continue
        ok.append(c)
    ok.sort(key=len)
    keep: list[frozenset] = []
    for c in ok:
        if not any(k <= c for k in keep):
            keep.append(c)
    return frozenset(keep)


def dnf(f: Formula) -> Formula:
    """Equivalent disjunction of conjunctions of literals and temporal nodes.

    Clauses are minimized by subsumption, so a residual built from the
    subformulas of one formula has only finitely many normal forms.
    """
    return disj(*(conj(*sorted(c)) for c in _clauses(f)))


# --- automata ------------------------------------------------------------------

def letter_mask(letter: Iterable[str], atoms: Sequence[str]) -> int:
    """Bitmask of ``letter`` over ``atoms``; atoms outside the list are dropped."""
    s = set(letter)
    return sum(1 << i for i, a in enumerate(atoms) if a in s)


def mask_letter(mask: int, atoms: Sequence[str]) -> frozenset[str]:
    return frozenset(a for i, a in enumerate(atoms) if mask >> i & 1)


@dataclass(frozen=True)
class Dfa:
    """Complete DFA over the letters ``2^atoms`` (letter = bitmask)."""

    atoms: tuple[str, ...]
    delta: tuple[tuple[int, ...], ...]
    initial: int
    accepting: frozenset[int]
    sink: int | None = None
    names: tuple[str, ...] | None = None

    @property
    def n_states(self) -> int:
        return len(self.delta)

    @property
    def n_letters(self) -> int:
        return 1 << len(self.atoms)

    def step(self, q: int, letter: Iterable[str] | int) -> int:
        m = letter if isinstance(letter, int) else letter_mask(letter, self.atoms)
        return self.delta[q][m]

    def run(self, word: Iterable) -> int:
        q = self.initial
        for letter in word:
            q = self.step(q, letter)
        return q

    def accepts(self, word: Iterable) -> bool:
        return self.run(word) in self.accepting

    def triples(self):
        for q, row in enumerate(self.delta):
            for m, q2 in enumerate(row):
                yield q, m, q2

    def is_absorbing(self, q: int) -> bool:
        return all(q2 == q for q2 in self.delta[q])

    def dump(self) -> str:
        lines = [f"atoms: {{{', '.join(self.atoms)}}}",
                 f"states: {self.n_states}",
                 f"initial: {self.initial}",
                 f"accepting: {sorted(self.accepting)}",
                 f"sink: {self.sink}"]
        if self.names:
            for q, name in enumerate(self.names):
                lines.append(f"  q{q} = {name}")
        for q, m, q2 in self.triples():
            letter = "{" + ", ".join(sorted(mask_letter(m, self.atoms))) + "}"
            lines.append(f"  q{q} --{letter}--> q{q2}")
        return "\n".join(lines)


def formula_to_dfa(f: Formula, atoms: Iterable[str] | None = None, *,
                   max_alphabet: int = MAX_ALPHABET,
                   max_states: int = MAX_STATES) -> Dfa:
    """Compile ``f`` into a complete DFA accepting its good prefixes."""
    atoms = tuple(sorted(set(atoms) | f.atoms if atoms is not None else f.atoms))
    n_letters = 1 << len(atoms)
    if n_letters > max_alphabet:
        raise AutomatonError(f"alphabet 2^{len(atoms)} exceeds cap {max_alphabet}")
    letters = [mask_letter(m, atoms) for m in range(n_letters)]

    def norm(g: Formula) -> Formula:
        return T_ if accepts_empty(g) else dnf(g)

    start = norm(f)
    index = {start: 0}
    residuals = [start]
    delta: list[list[int]] = []
    queue = deque([start])
    while queue:
        g = queue.popleft()
        row = []
        for letter in letters:
            h = norm(derivative(g, letter))
            if h not in index:
                if len(residuals) >= max_states:
                    raise AutomatonError(f"more than {max_states} residual states for {f}")
                index[h] = len(residuals)
                residuals.append(h)
                queue.append(h)
            row.append(index[h])
        delta.append(row)

    accepting = {i for i, g in enumerate(residuals) if g == T_}
    # collapse states that can never accept into a single sink
    live = set(accepting)
    preds: dict[int, set[int]] = {}
    for q, row in enumerate(delta):
        for q2 in row:
            preds.setdefault(q2, set()).add(q)
    stack = list(live)
    while stack:
        q = stack.pop()
        for p in preds.get(q, ()):
            if p not in live:
                live.add(p)
                stack.append(p)
    order = [q for q in range(len(residuals)) if q in live]
    dead = [q for q in range(len(residuals)) if q not in live]
    remap = {q: i for i, q in enumerate(order)}
    sink = None
    if dead:
        sink = len(order)
        for q in dead:
            remap[q] = sink
    new_delta = [tuple(remap[q2] for q2 in delta[q]) for q in order]
    names = [str(residuals[q]) for q in order]
    if sink is not None:
        new_delta.append(tuple([sink] * n_letters))
        names.append("false")
    return Dfa(atoms=atoms, delta=tuple(new_delta), initial=remap[0],
               accepting=frozenset(remap[q] for q in accepting), sink=sink,
               names=tuple(names))


def complete_dfa(atoms: Sequence[str], n_states: int, initial: int,
                 transitions: Iterable[tuple[int, int, int]],
                 accepting: Iterable[int]) -> Dfa:
    """Total DFA from a partial deterministic transition list.

    ``transitions`` holds ``(q, letter_mask, q')`` triples. Undefined moves go
    to a fresh absorbing, non-accepting sink; none is added when the input is
    already complete.
    """
    atoms = tuple(atoms)
    n_letters = 1 << len(atoms)
    table: list[list[int | None]] = [[None] * n_letters for _ in range(n_states)]
    for q, m, q2 in transitions:
        if not (0 <= q < n_states and 0 <= q2 < n_states and 0 <= m < n_letters):
            raise AutomatonError(f"transition ({q}, {m}, {q2}) out of range")
        if table[q][m] is not None and table[q][m] != q2:
            raise AutomatonError(f"nondeterministic: state {q} on letter "
                                 f"{sorted(mask_letter(m, atoms))} -> {table[q][m]} and {q2}")
        table[q][m] = q2
    missing = any(x is None for row in table for x in row)
    sink = n_states if missing else None
    delta = [tuple(sink if x is None else x for x in row) for row in table]
    if missing:
        delta.append(tuple([sink] * n_letters))
    return Dfa(atoms=atoms, delta=tuple(delta), initial=initial,
               accepting=frozenset(accepting), sink=sink)


@dataclass(frozen=True)
class ProductAutomaton:
    components: tuple[Dfa, ...]
    atoms: tuple[str, ...]
    states: tuple[tuple[int, ...], ...]
    delta: tuple[tuple[int, ...], ...]
    initial: int
    accepting: frozenset[int]

    @property
    def n_states(self) -> int:
        return len(self.states)

    def component_accepting(self, p: int) -> tuple[bool, ...]:
        return tuple(q in d.accepting for q, d in zip(self.states[p], self.components))

    def component_absorbing(self, p: int) -> tuple[bool, ...]:
        return tuple(q in d.accepting or q == d.sink
                     for q, d in zip(self.states[p], self.components))

    def step(self, p: int, letter: Iterable[str] | int) -> int:
        m = letter if isinstance(letter, int) else letter_mask(letter, self.atoms)
        return self.delta[p][m]

    def accepts(self, word: Iterable) -> bool:
        p = self.initial
        for letter in word:
            p = self.step(p, letter)
        return p in self.accepting


def product_automaton(dfas: Sequence[Dfa], *, max_states: int = MAX_STATES,
                      max_alphabet: int = MAX_ALPHABET) -> ProductAutomaton:
    """Reachable synchronous product over the union of the atom sets."""
    if not dfas:
        raise AutomatonError("product of an empty automaton list")
    atoms = tuple(sorted(set().union(*(d.atoms for d in dfas))))
    n_letters = 1 << len(atoms)
    if n_letters > max_alphabet:
        raise AutomatonError(f"alphabet 2^{len(atoms)} exceeds cap {max_alphabet}")
    proj = []
    for d in dfas:
        pos = [atoms.index(a) for a in d.atoms]
        proj.append([sum(1 << k for k, i in enumerate(pos) if m >> i & 1)
                     for m in range(n_letters)])
    start = tuple(d.initial for d in dfas)
    index = {start: 0}
    states = [start]
    delta = []
    queue = deque([start])
    while queue:
        qs = queue.popleft()
        row = []
        for m in range(n_letters):
            nxt_ = tuple(d.delta[q][pr[m]] for d, q, pr in zip(dfas, qs, proj))
            if nxt_ not in index:
                if len(states) >= max_states:
                    raise AutomatonError(f"product exceeds {max_states} states")
                index[nxt_] = len(states)
                states.append(nxt_)
                queue.append(nxt_)
            row.append(index[nxt_])
        delta.append(tuple(row))
    accepting = frozenset(i for i, qs in enumerate(states)
                          if all(q in d.accepting for q, d in zip(qs, dfas)))
    return ProductAutomaton(components=tuple(dfas), atoms=atoms, states=tuple(states),
                            delta=tuple(delta), initial=0, accepting=accepting)


def all_words(atoms: Sequence[str], max_len: int):
    """Every word of length <= max_len over 2^atoms, shortest first."""
    letters = [mask_letter(m, atoms) for m in range(1 << len(atoms))]
    for n in range(max_len + 1):
        yield from itertools.product(letters, repeat=n)
