"""One iteration of the leader-commitment problem on the product game.

Given value estimates ``V_C``, ``V_A`` the per-iteration mixed-integer
program decouples by state: each state's constraints only touch that state's
``mu``, ``lambda`` and values. Every state is solved with the multiple-LPs
method, one LP per adversary action that the controller tries to induce as
the adversary's best reply.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import ProductGame
from .lp import LinearProgram, LpSolution, solve_lp
from .values import q_tables

BR_SLACK = 1e-9
TIE = 1e-12


class InfeasibleError(RuntimeError):
    pass


@dataclass
class BackupTables:
    b_C: np.ndarray  # (n, n_uc, n_ua)
    b_A: np.ndarray

    def controller(self, sp_: int, mu_row: np.ndarray, ua: int) -> float:
        return float(mu_row @ self.b_C[sp_, :, ua])

    def adversary(self, sp_: int, perceived_row: np.ndarray, ua: int) -> float:
        return float(perceived_row @ self.b_A[sp_, :, ua])


def build_backups(pg: ProductGame, V_C: np.ndarray, V_A: np.ndarray) -> BackupTables:
    b_C = q_tables(pg, np.asarray(V_C, dtype=float))
    b_A = q_tables(pg, np.asarray(V_A, dtype=float), -1.0)
    return BackupTables(np.where(pg.row_mask, b_C, 0.0), np.where(pg.row_mask, b_A, 0.0))


@dataclass
class StateSolution:
    mu: np.ndarray  # over the global controller actions
    action: int
    v_C: float
    v_A: float
    objectives: dict[int, float | None] = field(default_factory=dict)


def _perceived_terms(bA: np.ndarray, a: int, alpha: float):
    """Best-response rows ``coef @ mu >= rhs`` keeping ``a`` optimal."""
    k, m = bA.shape
    diff = bA[:, [a]] - bA  # (k, m): gain of a over each a'
    coef = (1.0 - alpha) * diff.T
    rhs = -alpha / k * diff.sum(axis=0) - BR_SLACK
    others = [j for j in range(m) if j != a]
    return coef[others], rhs[others]


def _candidate_lp(bC, bA, a, alpha) -> LpSolution:
    k = bC.shape[0]
    coef, rhs = _perceived_terms(bA, a, alpha)
    A = np.vstack([np.ones((1, k)), coef])
    b = np.concatenate([[1.0], rhs])
    senses = ["=="] + [">="] * len(rhs)
    return solve_lp(LinearProgram(bC[:, a], A, senses, b))


def solve_state_stackelberg(pg: ProductGame, sp_: int, tables: BackupTables, alpha: float,
                            incumbent: np.ndarray | None = None) -> StateSolution:
    """Controller mix maximizing its backup subject to the adversary best-replying.

    For each admissible adversary action ``a`` the LP maximizes the controller
    backup against ``a`` over the simplex, constrained so that ``a`` is a best
    reply to the anchored mix. The best candidate wins; ties go to the
    smallest action index. An optional ``incumbent`` row is kept when it does
    as well as the optimum.
    """
    ucs = pg.controller_options(sp_)
    uas = pg.adversary_options(sp_)
    bC = tables.b_C[sp_][np.ix_(ucs, uas)]
    bA = tables.b_A[sp_][np.ix_(ucs, uas)]
    k = len(ucs)
    best = None
    objectives: dict[int, float | None] = {}
    for j, a in enumerate(uas):
        ub = bC[:, j].max()
        if best is not None and ub <= best[0] + TIE:
            objectives[int(a)] = None
            continue
        # the unconstrained optimum is a vertex; keep it if it already induces a
        x = _vertex_if_feasible(bC[:, j], bA, j, alpha)
        if x is None:
            sol = _candidate_lp(bC, bA, j, alpha)
            if not sol.optimal:
                objectives[int(a)] = None
                continue
            x = np.clip(sol.x, 0.0, None)
            x /= x.sum()
        val = float(x @ bC[:, j])
        objectives[int(a)] = val
        if best is None or val > best[0] + TIE:
            best = (val, j, x)
    if best is None:
        raise InfeasibleError(f"no inducible best response at {pg.names[sp_]}")
    val, j, x = best
    if incumbent is not None:
        inc = np.asarray(incumbent)[ucs]
        kept = _incumbent_value(inc, bC, bA, alpha)
        if kept is not None and kept[0] >= val - TIE:
            val, j, x = kept[0], kept[1], inc
    mu = np.zeros(pg.n_uc)
    mu[ucs] = x
    perceived = alpha / k + (1.0 - alpha) * x
    return StateSolution(mu=mu, action=int(uas[j]), v_C=float(x @ bC[:, j]),
                         v_A=float(perceived @ bA[:, j]), objectives=objectives)


def _vertex_if_feasible(c, bA, j, alpha):
    i = int(np.argmax(c))
    x = np.zeros(c.size)
    x[i] = 1.0
    coef, rhs = _perceived_terms(bA, j, alpha)
    if np.all(coef @ x >= rhs):
        return x
    return None


def _incumbent_value(x, bC, bA, alpha):
    """Best (value, action) among the adversary replies ``x`` induces."""
    k = x.size
    perceived = alpha / k + (1.0 - alpha) * x
    uA = perceived @ bA
    replies = np.nonzero(uA >= uA.max() - BR_SLACK)[0]
    vals = x @ bC[:, replies]
    i = int(np.argmax(vals))
    return float(vals[i]), int(replies[i])


@dataclass
class StackelbergStepResult:
    mu: np.ndarray
    lam: np.ndarray
    V_C: np.ndarray
    V_A: np.ndarray
    objective: float
    audit: list[dict] = field(default_factory=list)

    def audit_json(self, pg: ProductGame) -> list[dict]:
        return [{"state": pg.names[i], **rec} for i, rec in enumerate(self.audit)]


def stackelberg_step(pg: ProductGame, V_C: np.ndarray, V_A: np.ndarray, alpha: float,
                     incumbent: np.ndarray | None = None) -> StackelbergStepResult:
    """Solve the per-iteration program exactly by per-state decomposition."""
    tables = build_backups(pg, V_C, V_A)
    mu = np.zeros((pg.n, pg.n_uc))
    lam = np.zeros(pg.n, dtype=int)
    vc = np.zeros(pg.n)
    va = np.zeros(pg.n)
    audit = []
    for s in range(pg.n):
        sol = solve_state_stackelberg(pg, s, tables, alpha,
                                      None if incumbent is None else incumbent[s])
        mu[s], lam[s], vc[s], va[s] = sol.mu, sol.action, sol.v_C, sol.v_A
        audit.append({"action": pg.game.adversary_actions[sol.action],
                      "candidates": {pg.game.adversary_actions[a]: v
                                     for a, v in sol.objectives.items()}})
    return StackelbergStepResult(mu, lam, vc, va, pg.objective(vc), audit)


# --- big-M reference ---------------------------------------------------------------

def big_m(pg: ProductGame) -> float:
    return 2.0 * pg.total_reward + 1.0


def milp_state_lp(pg: ProductGame, sp_: int, tables: BackupTables, alpha: float, action: int,
                  Z: float) -> LpSolution:
    """The big-M program of one state with the binary reply fixed to ``action``.

    Variables are the controller mix over admissible actions, then the
    state's controller and adversary values (free).
    """
    ucs = pg.controller_options(sp_)
    uas = list(pg.adversary_options(sp_))
    k = len(ucs)
    bC = tables.b_C[sp_][np.ix_(ucs, uas)]
    bA = tables.b_A[sp_][np.ix_(ucs, uas)]
    nv = k + 2
    iC, iA = k, k + 1
    rows, senses, rhs = [], [], []
    row = np.zeros(nv)
    row[:k] = 1.0
    rows.append(row), senses.append("=="), rhs.append(1.0)
    for j, a in enumerate(uas):
        off = 0.0 if a == action else Z
        # perceived adversary backup, affine in mu
        coefA = (1.0 - alpha) * bA[:, j]
        constA = alpha / k * bA[:, j].sum()
        # V_A >= B_A(a)
        row = np.zeros(nv)
        row[:k] = -coefA
        row[iA] = 1.0
        rows.append(row), senses.append(">="), rhs.append(constA)
        # V_A <= B_A(a) + (1 - lambda_a) Z
        row = np.zeros(nv)
        row[:k] = -coefA
        row[iA] = 1.0
        rows.append(row), senses.append("<="), rhs.append(constA + off)
        # V_C <= B_C(a) + (1 - lambda_a) Z
        row = np.zeros(nv)
        row[:k] = -bC[:, j]
        row[iC] = 1.0
        rows.append(row), senses.append("<="), rhs.append(off)
    c = np.zeros(nv)
    c[iC] = 1.0
    bounds = [(0.0, np.inf)] * k + [(-np.inf, np.inf)] * 2
    return solve_lp(LinearProgram(c, np.array(rows), senses, np.array(rhs), bounds))


def milp_oracle(pg: ProductGame, V_C: np.ndarray, V_A: np.ndarray, alpha: float,
                Z: float | None = None, *, max_states: int = 8,
                max_adversary: int = 3) -> StackelbergStepResult:
    """Reference solution of the per-iteration big-M program.

    Enumerates the binary reply at every state and solves the remaining LP
    in (mu, V_C, V_A). Restricted to small instances. Raises
    ``InfeasibleError`` when some state admits no feasible reply, which is
    what happens when ``Z`` is too small.
    """
    if pg.n > max_states or pg.ua_mask.sum(axis=1).max() > max_adversary:
        raise ValueError(f"instance too large for the oracle ({pg.n} states)")
    Z = big_m(pg) if Z is None else Z
    tables = build_backups(pg, V_C, V_A)
    mu = np.zeros((pg.n, pg.n_uc))
    lam = np.zeros(pg.n, dtype=int)
    vc = np.zeros(pg.n)
    va = np.zeros(pg.n)
    audit = []
    for s in range(pg.n):
        ucs = pg.controller_options(s)
        best = None
        objs = {}
        for a in pg.adversary_options(s):
            sol = milp_state_lp(pg, s, tables, alpha, int(a), Z)
            objs[pg.game.adversary_actions[a]] = sol.objective if sol.optimal else None
            if sol.optimal and (best is None or sol.objective > best[0] + TIE):
                best = (sol.objective, int(a), sol.x)
        if best is None:
            raise InfeasibleError(f"big-M program infeasible at {pg.names[s]} (Z={Z})")
        obj, a, x = best
        k = len(ucs)
        mu[s, ucs] = x[:k]
        lam[s] = a
        vc[s] = x[k]
        va[s] = x[k + 1]
        audit.append({"action": pg.game.adversary_actions[a], "candidates": objs})
    return StackelbergStepResult(mu, lam, vc, va, pg.objective(vc), audit)
