"""Predicted density of a bundled scenario against pooled sample eigenvalues.

    python3 scripts/density_vs_samples.py marchenko-pastur --N 1000 --trials 2
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from ncspec.ensembles import RngSpec
from ncspec.experiments import histogram_vs_density, pooled_eigs
from ncspec.scenario import load_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario")
    ap.add_argument("--N", type=int, default=1000)
    ap.add_argument("--trials", type=int, default=2)
    ap.add_argument("--bins", type=int, default=80)
    ap.add_argument("--out", default="out/density_vs_samples")
    args = ap.parse_args()

    sc = load_scenario(args.scenario)
    rep = sc.problem.predict(sc.grid, sc.solver)
    eigs = pooled_eigs(sc.problem, args.N, args.trials, RngSpec(sc.seed, (args.N,)))
    ks = histogram_vs_density(eigs, rep)
    print(f"{sc.name}: support {rep.support}, mass {rep.mass():.5f}, KS {ks:.4f} "
          f"({eigs.size} eigenvalues)")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hist, edges = np.histogram(eigs, bins=args.bins, range=(rep.grid[0], rep.grid[-1]), density=True)
    mid = 0.5 * (edges[1:] + edges[:-1])
    with open(out / f"{sc.name}_histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "histogram", "predicted"])
        for t, h, p in zip(mid, hist, np.interp(mid, rep.grid, rep.density)):
            w.writerow([t, h, p])
    print(f"wrote {out / f'{sc.name}_histogram.csv'}")


if __name__ == "__main__":
    main()
