"""Controller value on the grid fixture across anchoring weights."""
import argparse
import csv
from pathlib import Path

from minviol.casestudy import grid_game
from minviol.synth import SynthesisConfig, alpha_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alphas", default="0,0.25,0.5,0.75,1")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--starts", type=int, default=16)
    ap.add_argument("--out", default="results/alpha_sweep.csv")
    args = ap.parse_args()

    alphas = [float(a) for a in args.alphas.split(",")]
    _, specs, pg = grid_game()
    rows = alpha_sweep(pg, alphas, SynthesisConfig(seed=args.seed, n_starts=args.starts))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "gamma_V_C"] + [f"sat_{s.name}" for s in specs])
        for a, v, rep in rows:
            w.writerow([a, f"{v:.12g}"] + [f"{p:.6g}" for p in rep.satisfaction])
            print(f"alpha {a:g}: value {v:.6f}  "
                  + "  ".join(f"{s.name} {p:.3f}" for s, p in zip(specs, rep.satisfaction)))


if __name__ == "__main__":
    main()
