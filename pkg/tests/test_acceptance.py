"""Acceptance checks, one test per criterion. Each prints a PASS/FAIL line."""
import time

import numpy as np
import pytest

import test_properties as props
from ncspec.ensembles import RngSpec, WishartSpec, embedding_identity_check, sample_gue
from ncspec.experiments import (SpectralProblem, histogram_vs_density, pooled_eigs, quantile_convergence,
                                sd_mean_residual, spectrum_inclusion, theta_decay)
from ncspec.pencil import evaluate, evaluate_pencil, linearize, parse_polynomial
from ncspec.scenario import load_scenario
from ncspec.stieltjes import DeterministicModel, QuantileTable, semicircle_density

SQRT8 = 2 * np.sqrt(2)


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail}")
        assert ok, detail
    return emit


def predicted(name):
    sc = load_scenario(name)
    t0 = time.perf_counter()
    rep = sc.problem.predict(sc.grid, sc.solver, threads=1)
    return sc, rep, time.perf_counter() - t0


def test_semicircle_density(verdict):
    sc, rep, secs = predicted("semicircle")
    t = rep.grid
    err = float(np.max(np.abs(rep.density - semicircle_density(t))))
    (lo, hi), = rep.support
    rho0 = float(np.interp(0.0, t, rep.density))
    ok = (err <= 2e-2 and abs(lo + 2) <= 0.05 and abs(hi - 2) <= 0.05 and abs(rho0 - 1 / np.pi) <= 0.01
          and secs <= 10 and t.min() <= -2.5 and t.max() >= 2.5 and rep.eta_used == 1e-3)
    verdict(1, "semicircle density", ok,
            f"sup error {err:.2e}, support [{lo:.4f}, {hi:.4f}], rho(0) {rho0:.5f}, {secs:.1f} s")


def test_free_sum_support(verdict):
    sc, rep, _ = predicted("free-sum")
    (lo, hi), = rep.support
    # sampled oracle: extreme eigenvalues of X1 + X2 at N = 2000
    ext = []
    for i in range(5):
        e = np.linalg.eigvalsh(sample_gue(2000, RngSpec(2, (i, 0))) + sample_gue(2000, RngSpec(2, (i, 1))))
        ext += [e[0], e[-1]]
    mc_edge = float(np.max(np.abs(ext)))
    ok = (abs(lo + SQRT8) <= 0.05 and abs(hi - SQRT8) <= 0.05 and 2.78 <= rep.norm_estimate <= 2.88
          and abs(mc_edge - rep.norm_estimate) <= 0.05)
    verdict(2, "free sum support", ok,
            f"support [{lo:.4f}, {hi:.4f}], norm {rep.norm_estimate:.4f}, sampled edge {mc_edge:.4f}")


def test_linearization_corner_identity(verdict):
    rng = np.random.default_rng(3)
    lams = np.linspace(-3, 3, 10) + 1j * np.linspace(0.1, 1.0, 10)
    t0 = time.perf_counter()
    worst = 0.0
    for text in ("x1^2", "x1*y1 + y1*x1", "x1*y1*x1 + y1"):
        P = parse_polynomial(text)
        cert = linearize(P)
        for N in (2, 3, 5):
            X = [props.random_hermitian(rng, N) for _ in range(P.p)]
            Y = [props.random_hermitian(rng, N) for _ in range(P.q)]
            PN, LN = evaluate(P, X, Y), evaluate_pencil(cert.pencil, X, Y)
            for lam in lams:
                big = np.linalg.inv(np.kron(cert.spectral_argument(lam), np.eye(N)) - LN)
                worst = max(worst, np.max(np.abs(big[:N, :N] - np.linalg.inv(lam * np.eye(N) - PN))))
    secs = time.perf_counter() - t0
    verdict(3, "linearization corner identity", worst <= 1e-6 and secs <= 1,
            f"max deviation {worst:.2e}, {secs:.2f} s")


def test_wishart_embedding_identity(verdict):
    suite = ["x1", "x1^2", "x1^3", "x1*y1 + y1^**x1", "x1*y1*x1", "1", "2*x1^2 - x1 + 3"]
    t0 = time.perf_counter()
    devs = {}
    for i, text in enumerate(suite):
        P = parse_polynomial(text, 1, 1 if "y1" in text else 0)
        devs[text] = embedding_identity_check(P, WishartSpec(1, (1,), 50), RngSpec(4, (i,)))
    secs = time.perf_counter() - t0
    worst = max(devs.values())
    verdict(4, "Wishart embedding identity", worst <= 1e-10 and secs <= 5,
            f"max relative deviation {worst:.2e} over {len(suite)} polynomials, {secs:.2f} s")


def test_white_wishart_density(verdict):
    sc, rep, _ = predicted("marchenko-pastur")
    eigs = pooled_eigs(sc.problem, 1000, 1, RngSpec(5))
    ks = histogram_vs_density(eigs, rep)
    edge = rep.support[-1][1]
    verdict(5, "white Wishart density", ks <= 0.05 and abs(edge - 4) <= 0.1,
            f"KS {ks:.4f}, upper edge {edge:.4f}")


@pytest.mark.slow
def test_theta_decay(verdict):
    prob = SpectralProblem.from_polynomial(parse_polynomial("x1"), DeterministicModel.empty())
    t0 = time.perf_counter()
    r = theta_decay(prob, [100, 200, 400, 800], 200, 2j, RngSpec(6), envelope_Lam=4j, envelope_N=100)
    secs = time.perf_counter() - t0
    env = r.details["envelope"]
    ok = r.slope <= -1.6 and not r.inconclusive and env["ratio"] <= 2 ** 5 * 1.5 and secs <= 600
    verdict(6, "Theta decay", ok,
            f"slope {r.slope:.3f} +- {r.slope_stderr:.3f}, inconclusive={r.inconclusive}, "
            f"Theta(2i)/Theta(4i) = {env['ratio']:.2f} (limit 48), {secs:.0f} s")


@pytest.mark.slow
def test_mean_schwinger_dyson_residual(verdict):
    probs = {
        "k=1 GUE": SpectralProblem.from_polynomial(parse_polynomial("x1"), DeterministicModel.empty()),
        "k=2 square": SpectralProblem.from_polynomial(parse_polynomial("x1^2"), DeterministicModel.empty()),
    }
    t0 = time.perf_counter()
    parts, ok = [], True
    for i, (name, prob) in enumerate(probs.items()):
        r = sd_mean_residual(prob, 200, 500, 2j, 3j, RngSpec(7, (i,)))
        ok &= r.passed
        parts.append(f"{name}: {r.mean[0]:.2e} <= 3 x {r.stderr[0]:.2e}")
    secs = time.perf_counter() - t0
    verdict(7, "mean Schwinger-Dyson residual", ok and secs <= 120, "; ".join(parts) + f", {secs:.0f} s")


@pytest.mark.slow
def test_spectrum_inclusion(verdict):
    parts, ok = [], True
    for name in ("semicircle", "free-sum", "bernoulli-anticommutator"):
        sc, rep, _ = predicted(name)
        r = spectrum_inclusion(sc.problem, 1000, 20, 0.15, RngSpec(8), rep.support)
        ok &= r.passed
        parts.append(f"{name}: {sum(r.details['outside_counts'])} outside")
    verdict(8, "spectrum inclusion", ok, "; ".join(parts))


def test_quantile_convergence(verdict):
    N = 10_000
    errs = {k: quantile_convergence(t, N) for k, t in
            (("uniform", QuantileTable("uniform", {"a": 0, "b": 1})), ("semicircle", QuantileTable("semicircle")))}
    verdict(9, "quantile convergence", max(errs.values()) <= 5 / np.sqrt(N),
            ", ".join(f"{k} {v:.2e}" for k, v in errs.items()) + f" (limit {5 / np.sqrt(N):.2e})")


def test_property_suites(verdict):
    suites = [props.test_resolvent_norm_bound, props.test_GT_maps_into_lower_half_plane,
              props.test_fixed_point_unique_across_starts, props.test_mass_normalization]
    failed = []
    for fn in suites:
        try:
            fn()
        except Exception as e:  # a hypothesis falsifying example
            failed.append(f"{fn.__name__}: {type(e).__name__}")
    verdict(10, "property suites", not failed,
            "4 suites x 1000 cases, no violations" if not failed else "; ".join(failed))
