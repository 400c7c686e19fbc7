"""Command-line driver: compile, validate, synthesize, sweep, simulate."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .game import (GameError, build_product_game, compile_specs, load_game, load_specs,
                   validate_game)
from .lp import LpNumericalError
from .scltl import AutomatonError, ParseError, formula_to_dfa
from .stackelberg import InfeasibleError, milp_oracle, stackelberg_step
from .synth import (SynthesisConfig, SynthesisError, adversary_from_dict, adversary_to_dict,
                    alpha_sweep, baseline_policy, policy_from_dict, policy_to_dict, synthesize)
from .values import ConvergenceError, best_response, check_adversary, check_policy, simulate

log = logging.getLogger("minviol")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3


class InputError(Exception):
    pass


def fmt(x) -> str:
    return f"{float(x):.12g}"


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


class Manifest:
    def __init__(self, command: str, inputs: dict, config: dict):
        self.command = command
        self.inputs = {k: {"path": str(p), "sha256": sha256(p)} for k, p in inputs.items() if p}
        self.config = config
        blob = json.dumps({"inputs": {k: v["sha256"] for k, v in self.inputs.items()},
                           "config": config}, sort_keys=True)
        self.inputs_hash = hashlib.sha256(blob.encode()).hexdigest()
        self.timings: dict[str, float] = {}
        self.outputs: list[str] = []
        self._t = time.perf_counter()

    def lap(self, stage: str) -> None:
        now = time.perf_counter()
        self.timings[stage] = round(now - self._t, 6)
        self._t = now

    def write(self, out: Path) -> None:
        self.outputs.append(str(out / "manifest.json"))
        write_json(out / "manifest.json", {
            "tool": "minviol", "version": __version__, "command": self.command,
            "inputs": self.inputs, "inputs_hash": self.inputs_hash, "config": self.config,
            "seed": self.config.get("seed"), "timings_s": self.timings, "outputs": self.outputs,
        })


# --- loading -------------------------------------------------------------------

def _load_config(args) -> SynthesisConfig:
    d = {}
    if getattr(args, "config", None):
        try:
            d = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"config: {exc}") from None
        if not isinstance(d, dict):
            raise InputError("config: expected a JSON object")
    if getattr(args, "alpha", None) is not None:
        d["alpha"] = args.alpha
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    try:
        return SynthesisConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise InputError(f"config: {exc}") from None


def _load_problem(args, cfg: SynthesisConfig | None = None):
    cfg = cfg or SynthesisConfig()
    try:
        g = load_game(args.model)
        specs = load_specs(args.specs)
    except OSError as exc:
        raise InputError(str(exc)) from None
    rep = validate_game(g)
    if not rep.ok:
        raise InputError("model validation failed:\n" + str(rep))
    pa = _compile(specs, cfg)
    pg = build_product_game(g, pa, specs, max_states=cfg.max_states)
    return g, specs, pg


def _compile(specs, cfg: SynthesisConfig):
    for s in specs:
        try:
            formula_to_dfa(s.formula, max_alphabet=cfg.max_alphabet, max_states=cfg.max_states)
        except AutomatonError as exc:
            raise InputError(f"spec {s.name!r}: {exc}") from None
    return compile_specs(specs, max_alphabet=cfg.max_alphabet, max_states=cfg.max_states)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- commands --------------------------------------------------------------------

def cmd_compile(args) -> int:
    try:
        specs = load_specs(args.specs)
    except OSError as exc:
        raise InputError(str(exc)) from None
    cfg = SynthesisConfig()
    dfas = []
    for s in specs:
        try:
            d = formula_to_dfa(s.formula, max_alphabet=cfg.max_alphabet)
        except AutomatonError as exc:
            raise InputError(f"spec {s.name!r}: {exc}") from None
        dfas.append(d)
        print(f"{s.name}: {d.n_states} states, {len(d.accepting)} accepting, "
              f"atoms {{{', '.join(d.atoms)}}}  formula {s.formula}")
    pa = compile_specs(specs)
    print(f"product: {pa.n_states} states, {len(pa.accepting)} accepting, "
          f"{len(pa.atoms)} atoms")
    if args.dump_automata:
        for s, d in zip(specs, dfas):
            print(f"# {s.name}")
            print(d.dump())
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        g = load_game(args.model)
    except OSError as exc:
        raise InputError(str(exc)) from None
    rep = validate_game(g)
    print(f"{len(g.states)} states, {len(g.controller_actions)} controller actions, "
          f"{len(g.adversary_actions)} adversary actions, {len(g.transitions)} rows")
    print(rep)
    if not rep.ok:
        return EXIT_INPUT
    if args.specs:
        specs = load_specs(args.specs)
        pg = build_product_game(g, _compile(specs, SynthesisConfig()), specs)
        print(f"product game: {pg.n} states, {int(pg.dest.sum())} destination states")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    cfg = _load_config(args)
    man = Manifest("synthesize", {"model": args.model, "specs": args.specs, "config": args.config},
                   cfg.to_dict())
    g, specs, pg = _load_problem(args, cfg)
    man.lap("build")
    rep = synthesize(pg, cfg)
    man.lap("synthesize")
    out = _out_dir(args)
    report = {"inputs_hash": man.inputs_hash, "product_states": pg.n, **rep.to_dict(pg)}
    if args.baseline:
        b = baseline_policy(pg, cfg)
        man.lap("baseline")
        report["baseline"] = {
            "nominal_value": float(fmt(b.nominal_value)), "value": float(fmt(b.value)),
            "satisfaction": {s.name: float(fmt(p)) for s, p in zip(specs, b.satisfaction)}}
        write_json(out / "baseline_policy.json", policy_to_dict(pg, b.mu))
        man.outputs.append(str(out / "baseline_policy.json"))
    if args.oracle_check:
        report["oracle_check"] = _oracle_check(pg, rep, cfg.alpha)
        man.lap("oracle_check")
    write_json(out / "policy.json", policy_to_dict(pg, rep.mu))
    write_json(out / "adversary.json", adversary_to_dict(pg, rep.lam))
    write_json(out / "report.json", report)
    write_csv(out / "values.csv", ["start_id", "iteration", "gamma_V_C"],
              [(r.start_id, k, fmt(v)) for r in rep.starts for k, v in enumerate(r.trajectory)])
    man.outputs += [str(out / n) for n in ("policy.json", "adversary.json", "report.json",
                                           "values.csv")]
    man.write(out)
    print(f"value {fmt(rep.value)} (max {fmt(pg.total_reward)}), best start {rep.best_start}")
    for s, p in zip(specs, rep.satisfaction):
        print(f"  {s.name}: satisfied with probability {fmt(p)}")
    return EXIT_OK


def _oracle_check(pg, rep, alpha) -> dict:
    best = rep.starts[rep.best_start]
    try:
        ora = milp_oracle(pg, best.V_C, best.V_A, alpha)
    except ValueError as exc:
        return {"status": "skipped", "reason": str(exc)}
    mine = stackelberg_step(pg, best.V_C, best.V_A, alpha)
    diff = abs(ora.objective - mine.objective)
    return {"status": "ok" if diff <= 1e-6 else "mismatch", "difference": float(fmt(diff))}


def _parse_alphas(text: str) -> list[float]:
    try:
        alphas = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"cannot parse alphas {text!r}") from None
    if not alphas:
        raise InputError("no alpha values given")
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise InputError("alpha values must lie in [0, 1]")
    return sorted(alphas)


def cmd_sweep(args) -> int:
    alphas = _parse_alphas(args.alphas)
    cfg = _load_config(args)
    man = Manifest("sweep", {"model": args.model, "specs": args.specs, "config": args.config},
                   {**cfg.to_dict(), "alphas": alphas})
    g, specs, pg = _load_problem(args, cfg)
    man.lap("build")
    rows = alpha_sweep(pg, alphas, cfg)
    man.lap("sweep")
    out = _out_dir(args)
    write_csv(out / "sweep.csv", ["alpha", "gamma_V_C"], [(fmt(a), fmt(v)) for a, v, _ in rows])
    write_csv(out / "sweep_values.csv", ["alpha", "start_id", "iteration", "gamma_V_C"],
              [(fmt(a), r.start_id, k, fmt(v)) for a, _, rep in rows for r in rep.starts
               for k, v in enumerate(r.trajectory)])
    man.outputs += [str(out / "sweep.csv"), str(out / "sweep_values.csv")]
    man.write(out)
    for a, v, _ in rows:
        print(f"alpha {fmt(a)}: {fmt(v)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.horizon < 1:
        raise InputError("horizon must be at least 1")
    if args.paths < 1:
        raise InputError("need at least one path")
    cfg = _load_config(args)
    man = Manifest("simulate", {"model": args.model, "specs": args.specs,
                                "policy": args.policy, "adversary": args.adversary},
                   {**cfg.to_dict(), "paths": args.paths, "horizon": args.horizon})
    g, specs, pg = _load_problem(args, cfg)
    try:
        mu = policy_from_dict(pg, json.loads(Path(args.policy).read_text()))
        check_policy(pg, mu, tol=1e-9)
        if args.adversary:
            lam = adversary_from_dict(pg, json.loads(Path(args.adversary).read_text()))
            check_adversary(pg, lam)
        else:
            lam = None
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise InputError(f"policy: {exc}") from None
    if lam is None:
        lam, _ = best_response(pg, mu, cfg.alpha)
    man.lap("load")
    stats = simulate(pg, mu, lam, args.paths, args.horizon, seed=cfg.seed, keep=args.keep)
    man.lap("simulate")
    out = _out_dir(args)
    rows = []
    for k, tr in enumerate(stats.trajectories):
        for (t, s, q, uc, ua, w) in tr:
            rows.append((k, t, s, ".".join(map(str, q)), uc or "", ua or "", fmt(w)))
    write_csv(out / "trajectories.csv", ["path", "time", "game_state", "automaton_state",
                                         "controller_action", "adversary_action", "reward"], rows)
    write_csv(out / "satisfaction.csv", ["spec", "satisfaction_frequency", "mean_reward"],
              [(n, fmt(f), fmt(stats.mean_reward)) for n, f in zip(stats.spec_names,
                                                                    stats.frequencies)])
    man.outputs += [str(out / "trajectories.csv"), str(out / "satisfaction.csv")]
    man.write(out)
    print(f"mean reward {fmt(stats.mean_reward)} +- {fmt(stats.std_error)} over {args.paths} paths")
    for n, f in zip(stats.spec_names, stats.frequencies):
        print(f"  {n}: {fmt(f)}")
    return EXIT_OK


# --- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="minviol", description=__doc__)
    p.add_argument("--version", action="version", version=f"minviol {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile specifications to automata")
    c.add_argument("--specs", required=True)
    c.add_argument("--dump-automata", action="store_true")
    c.set_defaults(func=cmd_compile)

    v = sub.add_parser("validate", help="check a model file")
    v.add_argument("--model", required=True)
    v.add_argument("--specs")
    v.set_defaults(func=cmd_validate)

    def problem(sp, out=True):
        sp.add_argument("--model", required=True)
        sp.add_argument("--specs", required=True)
        sp.add_argument("--config")
        sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out", required=True)

    s = sub.add_parser("synthesize", help="synthesize a control policy")
    problem(s)
    s.add_argument("--alpha", type=float)
    s.add_argument("--baseline", action="store_true",
                   help="also synthesize and evaluate the adversary-unaware policy")
    s.add_argument("--oracle-check", action="store_true",
                   help="cross-check the final step against the big-M program")
    s.set_defaults(func=cmd_synthesize)

    w = sub.add_parser("sweep", help="synthesize over a grid of alpha values")
    problem(w)
    w.add_argument("--alphas", default="0,0.25,0.5,0.75,1")
    w.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", help="Monte Carlo rollouts of a policy")
    problem(m)
    m.add_argument("--alpha", type=float)
    m.add_argument("--policy", required=True)
    m.add_argument("--adversary", help="adversary policy file (default: best response)")
    m.add_argument("--paths", type=int, default=10_000)
    m.add_argument("--horizon", type=int, default=200)
    m.add_argument("--keep", type=int, default=5, help="trajectories written out")
    m.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    level = os.environ.get("MINVIOL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, GameError, ParseError, AutomatonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SynthesisError, ConvergenceError, LpNumericalError, InfeasibleError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
