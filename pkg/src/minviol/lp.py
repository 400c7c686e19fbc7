"""Dense two-phase simplex for the small LPs solved per product state.

Problems are stated as::

    maximize    c @ x
    subject to  A[i] @ x  (<=, ==, >=)  b[i]
                lo <= x <= hi

and converted to standard form (nonnegative variables, equality rows with
slack/surplus/artificial columns). Pivoting uses Bland's rule throughout, so
results are deterministic for a fixed input ordering.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-11
COST_TOL = 1e-9
_ZERO = 1e-12

LE, EQ, GE = "<=", "==", ">="
_SENSES = {LE: LE, "<": LE, EQ: EQ, "=": EQ, GE: GE, ">": GE}


class LpNumericalError(ArithmeticError):
    """A pivot element fell below the stability threshold."""


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    senses: list[str]
    b: np.ndarray
    bounds: list[tuple[float, float]] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        m = self.A.shape[0]
        if self.b.size != m or len(self.senses) != m:
            raise ValueError(f"inconsistent dimensions: A is {self.A.shape}, "
                             f"b has {self.b.size}, senses has {len(self.senses)}")
        try:
            self.senses = [_SENSES[s] for s in self.senses]
        except KeyError as exc:
            raise ValueError(f"unknown constraint relation {exc.args[0]!r}") from None
        if self.bounds is None:
            self.bounds = [(0.0, np.inf)] * n
        if len(self.bounds) != n:
            raise ValueError("one (lo, hi) pair per variable required")
        for lo, hi in self.bounds:
            if lo > hi or lo == np.inf or hi == -np.inf:
                raise ValueError(f"empty variable range [{lo}, {hi}]")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A))
                and np.all(np.isfinite(self.b))):
            raise ValueError("coefficients must be finite")

    @property
    def n_vars(self) -> int:
        return self.c.size


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    objective: float | None = None
    # dual multipliers of the original rows (sign convention: objective
    # bound = b @ duals + offset) and the certified bound itself
    duals: np.ndarray | None = None
    dual_bound: float | None = None
    iterations: int = 0
    tableaus: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve_lp(p: LinearProgram, *, debug: bool = False) -> LpSolution:
    """Solve ``p`` with the two-phase simplex method.

    With ``debug=True`` every intermediate tableau is kept on the solution.
    """
    n = p.n_vars
    # x = D @ y + d0 with y >= 0
    cols: list[np.ndarray] = []
    d0 = np.zeros(n)
    extra_rows: list[tuple[np.ndarray, float]] = []  # y-space upper bounds
    for j, (lo, hi) in enumerate(p.bounds):
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(lo):
            d0[j] = lo
            cols.append(e)
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            d0[j] = hi
            cols.append(-e)
        else:
            cols.append(e)
            cols.append(-e)
    D = np.array(cols).T.reshape(n, len(cols))
    ny = D.shape[1]

    A = p.A @ D
    b = p.b - p.A @ d0
    senses = list(p.senses)
    for k, ub in extra_rows:
        row = np.zeros(ny)
        row[k] = 1.0
        A = np.vstack([A, row])
        b = np.append(b, ub)
        senses.append(LE)
    c = p.c @ D
    offset = float(p.c @ d0)

    m = A.shape[0]
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1
    senses = [({LE: GE, GE: LE, EQ: EQ}[s] if f else s) for s, f in zip(senses, flip)]

    n_slack = sum(s != EQ for s in senses)
    n_art = sum(s != LE for s in senses)
    width = ny + n_slack + n_art
    S = np.zeros((m, width))
    S[:, :ny] = A
    basis = np.empty(m, dtype=int)
    js, ja = ny, ny + n_slack
    for i, s in enumerate(senses):
        if s == LE:
            S[i, js] = 1.0
            basis[i] = js
            js += 1
        elif s == GE:
            S[i, js] = -1.0
            js += 1
            S[i, ja] = 1.0
            basis[i] = ja
            ja += 1
        else:
            S[i, ja] = 1.0
            basis[i] = ja
            ja += 1
    art_start = ny + n_slack

    T = np.hstack([S, b[:, None]])
    history: list[np.ndarray] | None = [] if debug else None
    iters = 0

    rows = np.arange(m)
    if n_art:
        cost1 = np.zeros(width)
        cost1[art_start:] = -1.0
        status, k = _iterate(T, basis, cost1, width, history)
        iters += k
        if -cost1[basis] @ T[:, -1] > FEAS_TOL:
            return LpSolution("infeasible", iterations=iters, tableaus=history or [])
        # drive artificial variables out of the basis
        keep = []
        for i in range(m):
            if basis[i] >= art_start:
                cand = np.nonzero(np.abs(T[i, :art_start]) > PIVOT_TOL)[0]
                if cand.size == 0:
                    continue  # redundant row
                _pivot(T, basis, i, int(cand[0]))
            keep.append(i)
        rows = np.array(keep, dtype=int)
        T = T[rows]
        basis = basis[rows]

    T = np.hstack([T[:, :art_start], T[:, -1:]])
    cost2 = np.zeros(art_start)
    cost2[:ny] = c
    status, k = _iterate(T, basis, cost2, art_start, history)
    iters += k
    if status == "unbounded":
        return LpSolution("unbounded", iterations=iters, tableaus=history or [])

    y = np.zeros(art_start)
    y[basis] = T[:, -1]
    x = D @ y[:ny] + d0
    objective = float(p.c @ x)

    # duals from the final basis: B^T w = c_B over the kept standard rows
    B = S[rows][:, basis]
    cB = cost2[basis]
    try:
        w = np.linalg.solve(B.T, cB)
    except np.linalg.LinAlgError:
        w = np.linalg.lstsq(B.T, cB, rcond=None)[0]
    w_full = np.zeros(m)
    w_full[rows] = w
    dual_bound = float(b @ w_full) + offset
    w_full[flip] *= -1
    duals = w_full[: p.A.shape[0]]
    return LpSolution("optimal", x=x, objective=objective, duals=duals,
                      dual_bound=dual_bound, iterations=iters,
                      tableaus=history or [])


def _iterate(T, basis, cost, n_cols, history):
    """Bland-rule primal simplex on tableau ``T`` (last column = rhs)."""
    k = 0
    while True:
        if history is not None:
            history.append(T.copy())
        reduced = cost[:n_cols] - cost[basis] @ T[:, :n_cols]
        entering = np.nonzero(reduced > COST_TOL)[0]
        if entering.size == 0:
            return "optimal", k
        j = int(entering[0])
        col = T[:, j]
        ok = col > _ZERO
        if not ok.any():
            return "unbounded", k
        ratios = np.full(col.shape, np.inf)
        ratios[ok] = T[ok, -1] / col[ok]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))[0]
        i = int(ties[np.argmin(basis[ties])])
        _pivot(T, basis, i, j)
        k += 1


def _pivot(T, basis, i, j):
    piv = T[i, j]
    if abs(piv) < PIVOT_TOL:
        raise LpNumericalError(
            f"pivot {piv:.3e} at row {i}, column {j} below {PIVOT_TOL:g}; "
            f"column norm {np.linalg.norm(T[:, j]):.3e}, "
            f"rhs range [{T[:, -1].min():.3e}, {T[:, -1].max():.3e}]")
    T[i] /= piv
    for r in range(T.shape[0]):
        if r != i and T[r, j] != 0.0:
            T[r] -= T[r, j] * T[i]
    T[np.abs(T) < 1e-15] = 0.0
    basis[i] = j


def maximize(c: Sequence[float], A_ub=None, b_ub=None, A_eq=None, b_eq=None,
             bounds=None) -> LpSolution:
    """Convenience wrapper with separate inequality/equality blocks."""
    c = np.asarray(c, dtype=float)
    blocks, rhs, senses = [], [], []
    if A_ub is not None and len(A_ub):
        blocks.append(np.asarray(A_ub, dtype=float).reshape(-1, c.size))
        rhs.append(np.asarray(b_ub, dtype=float).ravel())
        senses += [LE] * blocks[-1].shape[0]
    if A_eq is not None and len(A_eq):
        blocks.append(np.asarray(A_eq, dtype=float).reshape(-1, c.size))
        rhs.append(np.asarray(b_eq, dtype=float).ravel())
        senses += [EQ] * blocks[-1].shape[0]
    A = np.vstack(blocks) if blocks else np.zeros((0, c.size))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    return solve_lp(LinearProgram(c, A, senses, b, bounds))
