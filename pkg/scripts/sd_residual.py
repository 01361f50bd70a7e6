"""Monte-Carlo mean of the Schwinger-Dyson residual at (Lambda, Gamma).

    python3 scripts/sd_residual.py --polynomial "x1^2" --N 200 --trials 500
"""
import argparse

from ncspec.ensembles import RngSpec
from ncspec.experiments import SpectralProblem, sd_mean_residual
from ncspec.pencil import parse_polynomial
from ncspec.stieltjes import DeterministicModel


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--polynomial", default="x1")
    ap.add_argument("--N", type=int, default=200)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--lam", type=float, default=2.0)
    ap.add_argument("--gam", type=float, default=3.0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    prob = SpectralProblem.from_polynomial(parse_polynomial(args.polynomial), DeterministicModel.empty())
    r = sd_mean_residual(prob, args.N, args.trials, 1j * args.lam, 1j * args.gam, RngSpec(args.seed))
    print(f"k={prob.pencil.k}  |residual| {r.mean[0]:.3e}  stderr {r.stderr[0]:.3e}  "
          f"ratio {r.details['ratio']:.2f}  passed={r.passed}")


if __name__ == "__main__":
    main()
