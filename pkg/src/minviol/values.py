"""Policies and value operators on a product game.

A controller policy is an ``(n, n_uc)`` array of row-stochastic weights over
admissible actions; an adversary policy is an ``(n,)`` integer array of
global adversary action indices.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .game import ProductGame

log = logging.getLogger(__name__)

BR_TIE = 1e-9
VI_TOL = 1e-10
IMPROVE_TOL = 1e-12
MAX_SWEEPS = 10 ** 6


class ConvergenceError(RuntimeError):
    pass


def uniform_policy(pg: ProductGame) -> np.ndarray:
    mu = pg.uc_mask.astype(float)
    return mu / mu.sum(axis=1, keepdims=True)


def check_policy(pg: ProductGame, mu: np.ndarray, tol: float = 1e-9) -> None:
    mu = np.asarray(mu)
    if mu.shape != (pg.n, pg.n_uc):
        raise ValueError(f"policy shape {mu.shape}, expected {(pg.n, pg.n_uc)}")
    if np.any(mu < -tol):
        raise ValueError("negative action probability")
    if np.any(np.abs(mu[~pg.uc_mask]) > tol):
        raise ValueError("probability on an inadmissible action")
    bad = np.nonzero(np.abs(mu.sum(axis=1) - 1.0) > tol)[0]
    if bad.size:
        raise ValueError(f"policy row {pg.names[bad[0]]} sums to {mu[bad[0]].sum():.12g}")


def check_adversary(pg: ProductGame, lam: np.ndarray) -> None:
    lam = np.asarray(lam)
    if lam.shape != (pg.n,):
        raise ValueError(f"adversary policy shape {lam.shape}, expected {(pg.n,)}")
    if not np.all(pg.ua_mask[np.arange(pg.n), lam]):
        bad = np.nonzero(~pg.ua_mask[np.arange(pg.n), lam])[0][0]
        raise ValueError(f"inadmissible adversary action at {pg.names[bad]}")


def anchor(pg: ProductGame, mu: np.ndarray, alpha: float) -> np.ndarray:
    """Adversary's perceived policy: blend of ``mu`` and the uniform policy."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * uniform_policy(pg) + (1.0 - alpha) * np.asarray(mu, dtype=float)


# --- induced chains ----------------------------------------------------------------

def _row_weights(pg: ProductGame, mu: np.ndarray, lam: np.ndarray) -> sp.csr_matrix:
    """(n, n_rows) matrix selecting rows (s, u_C, lam[s]) weighted by mu."""
    s_idx = np.repeat(np.arange(pg.n), pg.n_uc)
    uc_idx = np.tile(np.arange(pg.n_uc), pg.n)
    rows = (s_idx * pg.n_uc + uc_idx) * pg.n_ua + np.asarray(lam)[s_idx]
    w = np.asarray(mu, dtype=float).ravel()
    keep = w != 0
    return sp.csr_matrix((w[keep], (s_idx[keep], rows[keep])), shape=(pg.n, pg.n_rows))


def induced_chain(pg: ProductGame, mu: np.ndarray, lam: np.ndarray):
    """Transition matrix (dense) and expected one-step reward of the chain."""
    M = _row_weights(pg, mu, lam)
    P = (M @ pg.T).toarray()
    return P, M @ pg.R


def hitting_probabilities(P: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Probability of ever entering ``target`` (1 on target states)."""
    n = P.shape[0]
    h = np.zeros(n)
    target = np.asarray(target, dtype=bool)
    h[target] = 1.0
    # states with a positive-probability path into the target
    reach = target.copy()
    adj = P > 0
    frontier = target.copy()
    while frontier.any():
        new = adj[:, frontier].any(axis=1) & ~reach
        reach |= new
        frontier = new
    rest = np.nonzero(reach & ~target)[0]
    if rest.size:
        A = np.eye(rest.size) - P[np.ix_(rest, rest)]
        b = P[np.ix_(rest, np.nonzero(target)[0])].sum(axis=1)
        h[rest] = np.linalg.solve(A, b)
    return np.clip(h, 0.0, 1.0)


def satisfaction_probabilities(pg: ProductGame, mu: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """(n, n_specs) probability that each specification is eventually met."""
    P, _ = induced_chain(pg, mu, lam)
    return np.column_stack([hitting_probabilities(P, pg.comp_accepting[:, i])
                            for i in range(len(pg.specs))])


def _value(pg: ProductGame, mu: np.ndarray, lam: np.ndarray) -> np.ndarray:
    H = satisfaction_probabilities(pg, mu, lam)
    return ((~pg.comp_accepting) * H) @ pg.rewards


def evaluate(pg: ProductGame, mu: np.ndarray, lam: np.ndarray, alpha: float = 0.0):
    """Exact controller and adversary values of a policy pair.

    The controller's value is the reward-weighted sum of the probabilities
    of first satisfying each specification; the adversary's value is the
    negated analogue under the perceived policy.
    """
    V_C = _value(pg, mu, lam)
    V_A = -_value(pg, anchor(pg, mu, alpha), lam) if alpha else -V_C.copy()
    return V_C, V_A


def evaluation_residual(pg: ProductGame, mu: np.ndarray, lam: np.ndarray, V: np.ndarray,
                   sign: float = 1.0) -> np.ndarray:
    """``V - (sign * W + P V)`` on the chain induced by (mu, lam)."""
    P, Wbar = induced_chain(pg, mu, lam)
    return V - (sign * Wbar + P @ V)


def linear_system_value(pg: ProductGame, mu: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Controller value from solving ``(I - P) V = W`` directly.

    Only valid when the chain leaves every non-destination state with
    probability one; raises ``LinAlgError`` otherwise.
    """
    P, Wbar = induced_chain(pg, mu, lam)
    V = np.zeros(pg.n)
    rest = np.nonzero(~pg.dest)[0]
    A = np.eye(rest.size) - P[np.ix_(rest, rest)]
    if np.linalg.cond(A) > 1e12:
        raise np.linalg.LinAlgError("singular transient system")
    V[rest] = np.linalg.solve(A, Wbar[rest])
    return V


# --- backups -------------------------------------------------------------------

def q_tables(pg: ProductGame, V: np.ndarray, sign: float = 1.0) -> np.ndarray:
    """(n, n_uc, n_ua) one-step backups ``sum_s' P (sign*W + V(s'))``."""
    return (sign * pg.R + pg.T @ V).reshape(pg.n, pg.n_uc, pg.n_ua)


def _mix(pg: ProductGame, mu: np.ndarray, Q: np.ndarray) -> np.ndarray:
    out = np.einsum("su,sua->sa", mu, Q)
    out[~pg.ua_mask] = np.nan
    return out


def best_response(pg: ProductGame, mu: np.ndarray, alpha: float = 0.0, *,
                  tol: float = VI_TOL, max_sweeps: int = MAX_SWEEPS):
    """Adversary's optimal pure stationary reply to the perceived policy.

    Value iteration from zero on the adversary's nonpositive rewards, then a
    greedy policy whose exact value is certified against the iterate.
    Ties go to the smallest action index. Returns ``(lam, V_A)``.
    """
    mut = anchor(pg, mu, alpha)
    # perceived rows: (n * n_ua, n) kernel and reward
    Rt = np.einsum("su,sua->sa", mut, (-pg.R).reshape(pg.n, pg.n_uc, pg.n_ua))
    blocks = pg.T.tocoo()
    r = blocks.row
    s_of, rem = np.divmod(r, pg.n_uc * pg.n_ua)
    uc_of, ua_of = np.divmod(rem, pg.n_ua)
    wts = mut[s_of, uc_of] * blocks.data
    Tt = sp.csr_matrix((wts, (s_of * pg.n_ua + ua_of, blocks.col)), shape=(pg.n * pg.n_ua, pg.n))
    mask = pg.ua_mask

    def q_of(V):
        Q = (Rt.ravel() + Tt @ V).reshape(pg.n, pg.n_ua)
        Q[~mask] = -np.inf
        return Q

    V = np.zeros(pg.n)
    sweeps = 0
    while True:
        Q = q_of(V)
        V_new = Q.max(axis=1)
        sweeps += 1
        diff = np.max(np.abs(V_new - V)) if pg.n else 0.0
        V = V_new
        if diff <= tol:
            break
        if sweeps >= max_sweeps:
            raise ConvergenceError(f"best response: no convergence after {sweeps} sweeps "
                                   f"(last change {diff:.3e})")
    # exact policy improvement from the greedy policy; keeps the smallest
    # tied action wherever it is exactly optimal
    lam = _first_tied(Q, V)
    for _ in range(pg.n * pg.n_ua + 1):
        V_lam = -_value(pg, mut, lam)
        Q = q_of(V_lam)
        best = Q.max(axis=1)
        worse = Q[np.arange(pg.n), lam] < best - IMPROVE_TOL
        if not worse.any():
            return lam, V_lam
        lam = np.where(worse, np.argmax(Q >= best[:, None] - IMPROVE_TOL, axis=1), lam)
    raise ConvergenceError("best response: policy improvement did not settle")


def _first_tied(Q: np.ndarray, V: np.ndarray) -> np.ndarray:
    tied = Q >= V[:, None] - BR_TIE
    return np.argmax(tied, axis=1)


def adversary_q(pg: ProductGame, mu: np.ndarray, alpha: float, V_A: np.ndarray) -> np.ndarray:
    """(n, n_ua) adversary one-step values under the perceived policy."""
    return _mix(pg, anchor(pg, mu, alpha), q_tables(pg, V_A, -1.0))


def bellman_T_mu(pg: ProductGame, mu: np.ndarray, alpha: float, V_C: np.ndarray, *,
                 adversary_values: np.ndarray | None = None) -> np.ndarray:
    """One controller backup against the worst adversary best response.

    The best-response set is fixed by ``mu`` alone (through the adversary's
    optimal values); within it the adversary minimizes the controller's
    backup.
    """
    if adversary_values is None:
        _, adversary_values = best_response(pg, mu, alpha)
    QA = adversary_q(pg, mu, alpha, adversary_values)
    QA[~pg.ua_mask] = -np.inf
    ties = QA >= QA.max(axis=1, keepdims=True) - BR_TIE
    QC = _mix(pg, mu, q_tables(pg, V_C))
    QC[~ties] = np.inf
    return QC.min(axis=1)


def fixed_adversary_backup(pg: ProductGame, mu: np.ndarray, lam: np.ndarray,
                           V: np.ndarray) -> np.ndarray:
    P, Wbar = induced_chain(pg, mu, lam)
    return Wbar + P @ V


# --- properness ----------------------------------------------------------------

@dataclass
class ProperResult:
    proper: bool
    support_proper: bool
    trapped: np.ndarray
    witness: int | None = None
    trap: dict[int, int] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.proper


def is_proper(pg: ProductGame, mu: np.ndarray, tol: float = 0.0) -> ProperResult:
    """Greatest set the adversary can keep the play in while avoiding Dest.

    The policy is proper iff that set is empty. ``support_proper`` only asks
    it of the initial states.
    """
    support = np.asarray(mu) > tol
    B = ~pg.dest.copy()
    while True:
        keep = np.zeros(pg.n, dtype=bool)
        choice = {}
        for s in np.nonzero(B)[0]:
            for a in pg.adversary_options(s):
                ok = True
                for c in np.nonzero(support[s])[0]:
                    succ, prob, _ = pg.successors(s, c, a)
                    if not B[succ[prob > 0]].all():
                        ok = False
                        break
                if ok:
                    keep[s] = True
                    choice[int(s)] = int(a)
                    break
        if (keep == B).all():
            break
        B = keep
    trapped = np.nonzero(B)[0]
    witness = _closed_trap_state(pg, support, B, choice) if trapped.size else None
    support_ok = not B[pg.gamma > 0].any()
    return ProperResult(proper=trapped.size == 0, support_proper=support_ok, trapped=B,
                        witness=witness, trap=choice if trapped.size else {})


def _closed_trap_state(pg, support, B, choice) -> int:
    """Smallest state of a trap class the play cannot leave once inside."""
    idx = np.nonzero(B)[0]
    pos = {int(s): k for k, s in enumerate(idx)}
    rows, cols = [], []
    for s in idx:
        for c in np.nonzero(support[s])[0]:
            succ, prob, _ = pg.successors(s, c, choice[int(s)])
            for t in succ[prob > 0]:
                rows.append(pos[int(s)])
                cols.append(pos[int(t)])
    G = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(idx.size, idx.size))
    _, comp = csgraph.connected_components(G, directed=True, connection="strong")
    leaves = set(comp.tolist())
    for r, c in zip(rows, cols):
        if comp[r] != comp[c]:
            leaves.discard(comp[r])
    # prefer traps that some choice of actions could have avoided
    escapable = _can_reach(pg.T, pg.n, pg.dest)
    cands = [int(idx[k]) for k in range(idx.size) if comp[k] in leaves]
    good = [s for s in cands if escapable[s]]
    return min(good or cands)


def _can_reach(T, n, target) -> np.ndarray:
    """States with a positive-probability path into ``target`` under some actions."""
    coo = T.tocoo()
    src = coo.row // (T.shape[0] // n)
    A = sp.csr_matrix((np.ones(coo.nnz), (coo.col, src)), shape=(n, n))  # reversed edges
    seen = np.asarray(target, dtype=bool).copy()
    for t in np.nonzero(target)[0]:
        seen[csgraph.breadth_first_order(A, int(t), directed=True,
                                         return_predecessors=False)] = True
    return seen


# --- simulation ----------------------------------------------------------------

@dataclass
class SimulationStats:
    spec_names: list[str]
    frequencies: np.ndarray
    rewards: np.ndarray  # total reward per path
    trajectories: list[list[tuple]]
    horizon: int

    @property
    def mean_reward(self) -> float:
        return float(self.rewards.mean())

    @property
    def std_error(self) -> float:
        n = self.rewards.size
        return float(self.rewards.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0


def simulate(pg: ProductGame, mu: np.ndarray, lam: np.ndarray, n_paths: int, horizon: int,
             seed: int = 0, keep: int = 5) -> SimulationStats:
    """Monte Carlo rollouts of the chain induced by ``(mu, lam)``.

    Paths start from the initial distribution, are credited the rewards of
    specifications met on the initial label, and stop early once every path
    sits in a destination state. ``keep`` paths are recorded step by step.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    rng = np.random.default_rng(seed)
    lam = np.asarray(lam)
    mu_cum = np.cumsum(mu, axis=1)
    mu_cum[:, -1] = 1.0 + 1e-12
    width = max((len(v[0]) for v in pg._succ.values()), default=1)
    succ = np.zeros((pg.n_rows, width), dtype=int)
    cum = np.full((pg.n_rows, width), 2.0)
    wts = np.zeros((pg.n_rows, width))
    for r, (s2, p, w) in pg._succ.items():
        k = len(s2)
        succ[r, :k] = s2
        c = np.cumsum(p)
        c[-1] = 1.0 + 1e-12
        cum[r, :k] = c
        wts[r, :k] = w
    init = np.nonzero(pg.gamma > 0)[0]
    g = pg.gamma[init] / pg.gamma[init].sum()
    state = init[rng.choice(init.size, size=n_paths, p=g)]
    total = pg.init_reward[state].copy()
    sat = pg.comp_accepting[state].copy()
    keep = min(keep, n_paths)
    traj = [[(0, *pg.describe(state[k]), None, None, float(total[k]))] for k in range(keep)]
    for t in range(1, horizon + 1):
        if pg.dest[state].all():
            break
        u = rng.random(n_paths)
        uc = (u[:, None] >= mu_cum[state]).sum(axis=1)
        ua = lam[state]
        row = (state * pg.n_uc + uc) * pg.n_ua + ua
        v = rng.random(n_paths)
        k = (v[:, None] >= cum[row]).sum(axis=1)
        w = wts[row, k]
        state = succ[row, k]
        total += w
        sat |= pg.comp_accepting[state]
        for j in range(keep):
            traj[j].append((t, *pg.describe(state[j]), pg.game.controller_actions[uc[j]],
                            pg.game.adversary_actions[ua[j]], float(w[j])))
    return SimulationStats(spec_names=[s.name for s in pg.specs], frequencies=sat.mean(axis=0),
                           rewards=total, trajectories=traj, horizon=horizon)
