"""Command-line front end.

Exit codes: 0 success (all experiments passed), 1 an experiment failed,
2 configuration error, 3 solver non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ensembles import WishartSpec, embedding_identity_check
from .experiments import (ExperimentResult, density_reference, g_difference_decay, histogram_vs_density,
                          pooled_eigs, quantile_convergence, sd_mean_residual, spectrum_inclusion,
                          support_edges, theta_decay, trace_moment)
from .pencil import NCPolynomial
from .scenario import Scenario, ScenarioError, load_scenario, spectral_arg, validate
from .stieltjes import QuantileTable, complex_from_json
from .subordination import SolverNonConvergence

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_json(path: Path, obj, schema: str) -> Path:
    validate(obj, schema)
    path.write_text(_dump(obj))
    return path


class _Run:
    """Shared state of one invocation: the scenario and its lazily computed prediction."""

    def __init__(self, sc: Scenario, threads: int):
        self.sc = sc
        self.threads = threads
        self._report = None

    @property
    def report(self):
        if self._report is None:
            self._report = self.sc.problem.predict(self.sc.grid, self.sc.solver, self.threads)
        return self._report


# ---------------------------------------------------------------- subcommands

def cmd_density(run: _Run, out: Path) -> int:
    rep = run.report
    out.mkdir(parents=True, exist_ok=True)
    js = rep.to_json()
    js["scenario"] = run.sc.name
    validate(js, "report")
    rep.write(out, "density")
    (out / "density.json").write_text(_dump(js))
    print(f"density: {rep.grid.size} points, support {rep.support}, mass {rep.mass():.6f}")
    return EXIT_OK


def cmd_support(run: _Run, out: Path) -> int:
    rep = run.report
    js = rep.to_json()
    obj = {"scenario": run.sc.name, "support": js["support"], "norm_estimate": js["norm_estimate"],
           "eta": rep.eta_used, "threshold": rep.threshold}
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "support.json", obj, "support")
    print(f"support: {obj['support']}  norm estimate: {obj['norm_estimate']}")
    return EXIT_OK


def cmd_sample(run: _Run, out: Path) -> int:
    sc = run.sc
    if not sc.sample:
        raise ScenarioError("scenario has no 'sample' section")
    N, trials = sc.sample["N"], sc.sample["trials"]
    out.mkdir(parents=True, exist_ok=True)
    rng = sc.rng
    for i in range(trials):
        e = sc.problem.sample_eigs(N, rng.sub(N, i))
        with open(out / f"eigenvalues_{i:03d}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eigenvalue"])
            for x in e:
                w.writerow([repr(float(x))])
    print(f"sample: {trials} trials at N={N} written to {out}")
    return EXIT_OK


def _lam(v) -> complex:
    return complex_from_json(v)


def run_experiment(run: _Run, e: dict, index: int = 0) -> ExperimentResult:
    """Run one experiment entry; ``index`` selects its random stream."""
    sc, th = run.sc, run.threads
    kind = e["kind"]
    rng = sc.rng.sub(index)
    prob = sc.problem
    k = prob.pencil.k
    if kind == "spectrum_inclusion":
        return spectrum_inclusion(prob, e["N"], e["trials"], e["epsilon"], rng, run.report.support, th)
    if kind == "histogram_vs_density":
        eigs = pooled_eigs(prob, e["N"], e["trials"], rng, th)
        ks = histogram_vs_density(eigs, run.report)
        return ExperimentResult("histogram_vs_density", ks <= e["max_ks"], [e["N"]], [ks], [None], e["trials"],
                                tolerance=e["max_ks"], details={"eigenvalues": int(eigs.size)})
    if kind == "theta_decay":
        env = spectral_arg(e["envelope_Lam"], k) if "envelope_Lam" in e else None
        return theta_decay(prob, e["N_list"], e["trials"], spectral_arg(e["Lam"], k), rng, env,
                           e.get("envelope_N"), e.get("slope_tol", -1.6), threads=th)
    if kind == "sd_mean_residual":
        return sd_mean_residual(prob, e["N"], e["trials"], spectral_arg(e["Lam"], k), spectral_arg(e["Gam"], k),
                                rng, th, e.get("n_sigma", 3.0))
    if kind == "g_difference_decay":
        return g_difference_decay(prob, e["N_list"], e["trials"], _lam(e["lam"]), rng, sc.solver,
                                  e.get("slope_tol", -1.6), th)
    if kind == "quantile_convergence":
        N = e["N"]
        tol = e.get("tolerance_factor", 5.0) / np.sqrt(N)
        err = quantile_convergence(QuantileTable.from_json(e["table"]), N)
        return ExperimentResult("quantile_convergence", err <= tol, [N], [err], [None], tolerance=tol,
                                details={"table": e["table"]})
    if kind == "embedding_identity":
        P = NCPolynomial.parse(e["polynomial"], len(e["s"]), e.get("q", 0))
        dev = embedding_identity_check(P, WishartSpec(e["r"], tuple(e["s"]), e["N"]), rng)
        tol = e.get("tolerance", 1e-10)
        return ExperimentResult("embedding_identity", dev <= tol, [e["N"]], [dev], [None], tolerance=tol,
                                details={"polynomial": e["polynomial"]})
    if kind == "support_edges":
        return support_edges(run.report, e["expected"], e["tolerance"])
    if kind == "density_reference":
        return density_reference(run.report, e["tolerance"], e.get("radius", 2.0), e.get("t_min"), e.get("t_max"))
    if kind == "trace_moment":
        return trace_moment(prob, e["N"], e["trials"], e["expected_value"], rng, e.get("n_sigma", 3.0), th)
    raise ScenarioError(f"unknown experiment kind {kind!r}")


def cmd_check(run: _Run, out: Path, trials_csv: bool = False) -> int:
    sc = run.sc
    if not sc.experiments:
        raise ScenarioError("scenario lists no experiments")
    results = []
    for i, e in enumerate(sc.experiments):
        r = run_experiment(run, e, i)
        results.append(r)
        flag = "PASS" if r.passed else "FAIL"
        extra = f" slope={r.slope:.3f}" if r.slope is not None else ""
        print(f"{flag} {r.name}: mean={r.mean}{extra}")
    out.mkdir(parents=True, exist_ok=True)
    obj = {"scenario": sc.name, "seed": sc.seed, "passed": all(r.passed for r in results),
           "results": [r.to_json() for r in results]}
    _write_json(out / "check.json", obj, "check")
    if trials_csv:
        for i, r in enumerate(results):
            if r.per_trial:
                r.write_trials_csv(out / f"trials_{i:02d}_{r.name}.csv")
    return EXIT_OK if obj["passed"] else EXIT_FAIL


def cmd_linearize(run: _Run, out: Path | None) -> int:
    prob = run.sc.problem
    L = prob.pencil
    obj = {"scenario": run.sc.name, "k": L.k, "p": L.p, "q": L.q,
           "corner_dim": prob.cert.corner_dim if prob.cert else None,
           "epsilon_pad": prob.cert.epsilon_pad if prob.cert else None,
           "polynomial": str(prob.polynomial) if prob.polynomial is not None else None,
           **{key: v for key, v in L.to_json().items() if key != "k"}}
    validate(obj, "pencil")
    text = _dump(obj)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "pencil.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_embed_check(run: _Run, out: Path) -> int:
    sc = run.sc
    em = sc.embed
    if not em:
        raise ScenarioError("scenario has no 'embed' section")
    s = tuple(em["s"])
    P = NCPolynomial.parse(em["polynomial"], len(s), em.get("q", 0))
    if P.p != len(s):
        raise ScenarioError(f"embed polynomial uses {P.p} Wishart letters but s has {len(s)} entries")
    dev = embedding_identity_check(P, WishartSpec(em["r"], s, em["N"]), sc.rng)
    tol = em.get("tolerance", 1e-10)
    obj = {"scenario": sc.name, "polynomial": em["polynomial"], "r": em["r"], "s": list(s), "N": em["N"],
           "deviation": dev, "tolerance": tol, "passed": dev <= tol}
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "embed_check.json", obj, "embed_check")
    print(f"embedding identity deviation {dev:.3e} (tolerance {tol:g})")
    return EXIT_OK if obj["passed"] else EXIT_FAIL


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ncspec", description="Spectra of polynomials in GUE and deterministic matrices.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, hlp in (("density", "predicted density on the scenario grid (CSV + JSON)"),
                      ("support", "predicted support intervals and norm estimate (JSON)"),
                      ("sample", "eigenvalues of sampled matrices (one CSV per trial)"),
                      ("check", "run the scenario's experiments (JSON pass/fail summary)"),
                      ("linearize", "print the linearization pencil as JSON"),
                      ("embed-check", "Wishart embedding identity deviation (JSON)")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--scenario", required=True, help="scenario JSON path or bundled scenario name")
        p.add_argument("--out", default=None if name == "linearize" else "out", help="output directory")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
        if name == "check":
            p.add_argument("--trials-csv", action="store_true", help="also write per-trial CSV files")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ScenarioError("--threads must be positive")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ScenarioError("--seed must be a 64-bit unsigned integer")
        sc = load_scenario(args.scenario, args.seed)
        run = _Run(sc, args.threads)
        out = Path(args.out) if args.out is not None else None
        if out is not None and out.exists() and not out.is_dir():
            raise ScenarioError(f"--out {out} exists and is not a directory")
        cmd = args.command
        if cmd == "density":
            return cmd_density(run, out)
        if cmd == "support":
            return cmd_support(run, out)
        if cmd == "sample":
            return cmd_sample(run, out)
        if cmd == "check":
            return cmd_check(run, out, args.trials_csv)
        if cmd == "linearize":
            return cmd_linearize(run, out)
        return cmd_embed_check(run, out)
    except ScenarioError as e:
        print(f"ncspec: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverNonConvergence as e:
        print(f"ncspec: solver did not converge: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
