"""Multi-start value iteration over Stackelberg steps."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .game import ProductGame, build_product_game, collapse_adversary
from .stackelberg import stackelberg_step
from .values import best_response, evaluate, is_proper, satisfaction_probabilities, uniform_policy

log = logging.getLogger(__name__)


class SynthesisError(RuntimeError):
    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


@dataclass
class SynthesisConfig:
    alpha: float = 0.0
    epsilon: float = 1e-6
    n_starts: int = 16
    seed: int = 0
    max_iterations: int = 10_000
    max_states: int = 100_000
    max_alphabet: int = 2 ** 16
    # keep the previous mix at a state when it is still optimal
    sticky: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.n_starts < 1:
            raise ValueError("need at least one start")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config field(s) {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def sample_initial_policies(pg: ProductGame, count: int, seed: int = 0) -> list[np.ndarray]:
    """The uniform policy followed by ``count - 1`` flat-Dirichlet draws."""
    if count < 1:
        raise ValueError("count must be at least 1")
    out = [uniform_policy(pg)]
    for t in range(1, count):
        rng = np.random.default_rng([seed, t])
        x = rng.exponential(size=(pg.n, pg.n_uc)) * pg.uc_mask
        out.append(x / x.sum(axis=1, keepdims=True))
    return out


@dataclass
class StartValue:
    lam: np.ndarray
    V_C: np.ndarray
    V_A: np.ndarray
    feasible: bool


def initial_value(pg: ProductGame, mu0: np.ndarray, alpha: float) -> StartValue:
    """Values of ``mu0`` against its best response.

    The start is infeasible when ``mu0`` is improper and no reward is
    reachable from any initial state.
    """
    lam0, _ = best_response(pg, mu0, alpha)
    V_C, V_A = evaluate(pg, mu0, lam0, alpha)
    init = pg.initial_states()
    dead = bool(np.all(V_C[init] <= 0.0))
    feasible = not (dead and not is_proper(pg, mu0).proper)
    return StartValue(lam0, V_C, V_A, feasible)


@dataclass
class StartResult:
    start_id: int
    mu: np.ndarray
    V_C: np.ndarray
    V_A: np.ndarray
    trajectory: list[float]
    feasible: bool
    converged: bool
    lam: np.ndarray | None = None
    value: float = float("nan")  # gamma-weighted value against the exact best response

    @property
    def iterations(self) -> int:
        return len(self.trajectory) - 1


def run_start(pg: ProductGame, mu0: np.ndarray, cfg: SynthesisConfig, start_id: int = 0) -> StartResult:
    sv = initial_value(pg, mu0, cfg.alpha)
    traj = [pg.objective(sv.V_C)]
    if not sv.feasible:
        return StartResult(start_id, mu0, sv.V_C, sv.V_A, traj, False, False)
    mu, V_C, V_A = mu0, sv.V_C, sv.V_A
    for _ in range(cfg.max_iterations):
        res = stackelberg_step(pg, V_C, V_A, cfg.alpha, incumbent=mu if cfg.sticky else None)
        traj.append(res.objective)
        mu, V_C, V_A = res.mu, res.V_C, res.V_A
        if traj[-1] - traj[-2] <= cfg.epsilon:
            break
    else:
        raise SynthesisError(f"start {start_id}: no convergence in {cfg.max_iterations} iterations",
                             trajectory=traj)
    out = StartResult(start_id, mu, V_C, V_A, traj, True, True)
    certify(pg, out, cfg.alpha)
    return out


def certify(pg: ProductGame, r: StartResult, alpha: float) -> None:
    lam, _ = best_response(pg, r.mu, alpha)
    V_C, _ = evaluate(pg, r.mu, lam, alpha)
    r.lam = lam
    r.value = pg.objective(V_C)


@dataclass
class SynthesisReport:
    mu: np.ndarray
    lam: np.ndarray
    value: float  # certified, includes rewards met on the initial label
    iterate_value: float  # gamma-weighted value of the final iterate
    V_C: np.ndarray
    V_A: np.ndarray
    satisfaction: np.ndarray  # per spec, from the initial distribution
    proper: bool
    support_proper: bool
    starts: list[StartResult]
    best_start: int
    infeasible_starts: int
    resampled: bool
    alpha: float

    @property
    def trajectories(self) -> list[list[float]]:
        return [r.trajectory for r in self.starts]

    @property
    def iterations(self) -> list[int]:
        return [r.iterations for r in self.starts]

    def to_dict(self, pg: ProductGame) -> dict:
        return {
            "alpha": self.alpha,
            "value": _num(self.value),
            "iterate_value": _num(self.iterate_value),
            "max_value": _num(pg.total_reward),
            "best_start": self.best_start,
            "satisfaction": {s.name: _num(p) for s, p in zip(pg.specs, self.satisfaction)},
            "proper": self.proper,
            "proper_from_initial_states": self.support_proper,
            "infeasible_starts": self.infeasible_starts,
            "resampled": self.resampled,
            "starts": [{"start_id": r.start_id, "feasible": r.feasible, "iterations": r.iterations,
                        "final_iterate": _num(r.trajectory[-1]), "value": _num(r.value)}
                       for r in self.starts],
            "adversary": adversary_to_dict(pg, self.lam),
        }


def _num(x: float) -> float:
    return float(f"{float(x):.12g}")


def policy_to_dict(pg: ProductGame, mu: np.ndarray) -> dict:
    return {pg.names[s]: {pg.game.controller_actions[c]: _num(mu[s, c])
                          for c in pg.controller_options(s)} for s in range(pg.n)}


def adversary_to_dict(pg: ProductGame, lam: np.ndarray) -> dict:
    return {pg.names[s]: pg.game.adversary_actions[int(lam[s])] for s in range(pg.n)}


def policy_from_dict(pg: ProductGame, d: dict) -> np.ndarray:
    mu = np.zeros((pg.n, pg.n_uc))
    acts = {a: i for i, a in enumerate(pg.game.controller_actions)}
    missing = set(pg.names) - set(d)
    if missing:
        raise ValueError(f"policy has no row for {sorted(missing)[0]}")
    for name, row in d.items():
        if name not in pg.index:
            raise ValueError(f"policy names unknown state {name!r}")
        for a, p in row.items():
            if a not in acts:
                raise ValueError(f"policy names unknown action {a!r}")
            mu[pg.index[name], acts[a]] = float(p)
    return mu


def adversary_from_dict(pg: ProductGame, d: dict) -> np.ndarray:
    acts = {a: i for i, a in enumerate(pg.game.adversary_actions)}
    lam = np.zeros(pg.n, dtype=int)
    missing = set(pg.names) - set(d)
    if missing:
        raise ValueError(f"adversary policy has no entry for {sorted(missing)[0]}")
    for name, a in d.items():
        if name not in pg.index:
            raise ValueError(f"adversary policy names unknown state {name!r}")
        if a not in acts:
            raise ValueError(f"adversary policy names unknown action {a!r}")
        lam[pg.index[name]] = acts[a]
    return lam


def synthesize(pg: ProductGame, cfg: SynthesisConfig | None = None) -> SynthesisReport:
    """Run every start to convergence and keep the best certified policy.

    Starts are ranked by the value of their final policy against an exact
    adversary best response; ties go to the lower start index.
    """
    cfg = cfg or SynthesisConfig()
    resampled = False
    runs = [run_start(pg, mu0, cfg, t)
            for t, mu0 in enumerate(sample_initial_policies(pg, cfg.n_starts, cfg.seed))]
    if not any(r.feasible for r in runs):
        log.info("no feasible start, resampling with seed %d", cfg.seed + 1)
        resampled = True
        runs = [run_start(pg, mu0, cfg, t)
                for t, mu0 in enumerate(sample_initial_policies(pg, cfg.n_starts, cfg.seed + 1))]
        if not any(r.feasible for r in runs):
            raise SynthesisError("no feasible start")
    best = None
    for r in runs:
        if r.feasible and (best is None or r.value > best.value + 1e-12):
            best = r
    mu, lam = best.mu, best.lam
    V_C, V_A = evaluate(pg, mu, lam, cfg.alpha)
    H = satisfaction_probabilities(pg, mu, lam)
    pr = is_proper(pg, mu)
    return SynthesisReport(mu=mu, lam=lam, value=best.value, iterate_value=best.trajectory[-1],
                           V_C=V_C, V_A=V_A, satisfaction=pg.gamma @ H, proper=pr.proper,
                           support_proper=pr.support_proper, starts=runs,
                           best_start=best.start_id,
                           infeasible_starts=sum(not r.feasible for r in runs),
                           resampled=resampled, alpha=cfg.alpha)


def alpha_sweep(pg: ProductGame, alphas, cfg: SynthesisConfig | None = None):
    """``[(alpha, value, report)]`` with one synthesis per alpha, shared seed."""
    cfg = cfg or SynthesisConfig()
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ValueError("empty alpha list")
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise ValueError("alphas must lie in [0, 1]")
    if alphas != sorted(alphas):
        raise ValueError("alphas must be sorted ascending")
    rows = []
    for a in alphas:
        rep = synthesize(pg, replace(cfg, alpha=a))
        rows.append((a, rep.value, rep))
    return rows


# --- adversary-unaware comparison ------------------------------------------------

@dataclass
class BaselineResult:
    mu: np.ndarray  # indexed like the full product game
    nominal_value: float  # value it expects with a passive adversary
    lam: np.ndarray
    value: float  # value against the real adversary's best response
    V_C: np.ndarray
    satisfaction: np.ndarray


def baseline_policy(pg: ProductGame, cfg: SynthesisConfig | None = None) -> BaselineResult:
    """Policy synthesized as if the adversary never interfered.

    The adversary is collapsed onto its declared nominal action, the problem
    is solved there, and the resulting policy is then played against the
    real adversary's best response.
    """
    cfg = cfg or SynthesisConfig()
    g0 = collapse_adversary(pg.game)
    pg0 = build_product_game(g0, pg.automaton, pg.specs, extra_states=pg.states,
                             max_states=cfg.max_states)
    rep0 = synthesize(pg0, replace(cfg, alpha=0.0))
    pos = {key: i for i, key in enumerate(pg0.states)}
    mu = rep0.mu[[pos[key] for key in pg.states]]
    lam, _ = best_response(pg, mu, cfg.alpha)
    V_C, _ = evaluate(pg, mu, lam, cfg.alpha)
    H = satisfaction_probabilities(pg, mu, lam)
    return BaselineResult(mu=mu, nominal_value=rep0.value, lam=lam, value=pg.objective(V_C),
                          V_C=V_C, satisfaction=pg.gamma @ H)
