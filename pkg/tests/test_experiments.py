import json

import numpy as np
import pytest

from ncspec.ensembles import ChannelSpec, RngSpec, sample_gue
from ncspec.experiments import (ExperimentResult, SpectralProblem, fit_slope, g_difference_decay,
                                histogram_vs_density, pooled_eigs, quantile_convergence, sd_mean_residual,
                                spectrum_inclusion, support_edges, theta_decay, theta_estimate,
                                theoretical_theta_constant, trace_moment)
from ncspec.pencil import Pencil, parse_polynomial
from ncspec.stieltjes import DeterministicModel, QuantileTable
from ncspec.subordination import FixedPointConfig

EMPTY = DeterministicModel.empty()


def gue_problem():
    return SpectralProblem.from_polynomial(parse_polynomial("x1"), EMPTY)


def deterministic_problem():
    model = DeterministicModel("quantile", tables=(QuantileTable("atoms", {"values": [-1, 1], "probs": [.5, .5]}),))
    return SpectralProblem.from_pencil(Pencil(np.zeros((1, 1)), (), (np.eye(1),)), model)


@pytest.fixture(scope="module")
def semicircle_report():
    return gue_problem().predict(np.linspace(-2.5, 2.5, 501))


# ---------------------------------------------------------------- results

def test_result_json_and_csv(tmp_path):
    r = ExperimentResult("x", True, [10], [np.float64(0.5)], [None], 3, details={"m": np.eye(2) * 1j},
                         per_trial=[(10, 0, 0.25)])
    js = r.to_json()
    assert json.dumps(js) and js["mean"] == [0.5]
    assert js["details"]["m"][0][0] == [0.0, 1.0]
    assert r.write_trials_csv(tmp_path / "t.csv").read_text().splitlines() == ["N,trial,value", "10,0,0.25"]


def test_result_needs_a_trial():
    with pytest.raises(ValueError):
        ExperimentResult("x", True, trials=0)


def test_fit_slope_power_law():
    N = np.array([100, 200, 400, 800])
    slope, icpt, se = fit_slope(N, 3.0 * N ** -2.0)
    assert slope == pytest.approx(-2.0) and np.exp(icpt) == pytest.approx(3.0) and se < 1e-10


# ---------------------------------------------------------------- spectra

def test_spectrum_inclusion_gue(semicircle_report):
    r = spectrum_inclusion(gue_problem(), 400, 5, 0.15, RngSpec(1), semicircle_report.support)
    assert r.passed and r.mean == [1.0]
    assert r.details["max_eig"] < 2.15


def test_spectrum_inclusion_needs_support():
    with pytest.raises(ValueError):
        spectrum_inclusion(gue_problem(), 10, 1, 0.1, RngSpec(1), [])


def test_spectrum_inclusion_zero_matrix():
    prob = SpectralProblem.from_pencil(Pencil(np.zeros((1, 1)), (np.zeros((1, 1)),)), EMPTY)
    rep = prob.predict(np.linspace(-1, 1, 201), FixedPointConfig(eta=1e-2))
    assert spectrum_inclusion(prob, 50, 2, 0.15, RngSpec(1), rep.support).passed


def test_histogram_gue(semicircle_report):
    eigs = np.linalg.eigvalsh(sample_gue(2000, RngSpec(2)))
    assert histogram_vs_density(eigs, semicircle_report) <= 0.03


def test_histogram_deterministic_model_matches():
    # no GUE part: the sampled matrix is the quantile diagonal itself
    model = DeterministicModel("quantile", tables=(QuantileTable("uniform", {"a": -1, "b": 1}),))
    prob = SpectralProblem.from_pencil(Pencil(np.zeros((1, 1)), (), (np.eye(1),)), model)
    rep = prob.predict(np.linspace(-1.5, 1.5, 3001))
    eigs = pooled_eigs(prob, 1000, 1, RngSpec(3))
    assert histogram_vs_density(eigs, rep) <= 0.01


def test_histogram_rejects_empty(semicircle_report):
    with pytest.raises(ValueError):
        histogram_vs_density([], semicircle_report)


def test_support_edges(semicircle_report):
    assert support_edges(semicircle_report, [[-2, 2]], 0.05).passed
    assert not support_edges(semicircle_report, [[-2, 0], [0, 2]], 0.05).passed


def test_trace_moment_gue():
    r = trace_moment(gue_problem(), 100, 20, 0.0, RngSpec(4))
    assert r.passed and r.stderr[0] > 0


def test_quantile_convergence_with_sorted_sample():
    table = QuantileTable("uniform", {"a": 0, "b": 1})
    vals = np.sort(np.random.default_rng(0).uniform(size=10_000))
    assert quantile_convergence(table, 10_000, values=vals) <= 5 / np.sqrt(10_000)


# ---------------------------------------------------------------- embedded laws

def test_white_wishart_prediction_edge():
    prob = SpectralProblem.white_wishart(parse_polynomial("x1"), 1, (1,))
    rep = prob.predict(np.linspace(-0.5, 4.5, 501))
    assert abs(rep.support[-1][1] - 4.0) <= 0.1
    assert rep.mass() == pytest.approx(1.0, abs=0.03)


def test_channel_prediction_first_moment():
    prob = SpectralProblem.channel(ChannelSpec(1, 1, 1, (1.0,), 1))
    rep = prob.predict(np.linspace(-0.5, 4.5, 251), FixedPointConfig(eta=1e-2))
    mean = np.trapezoid(rep.grid * rep.density, rep.grid) / rep.mass()
    assert mean == pytest.approx(1.0, abs=0.03)


# ---------------------------------------------------------------- Theta and Schwinger-Dyson

def test_theta_vanishes_without_gue():
    prob = deterministic_problem()
    r = theta_decay(prob, [10, 20], 3, 2j, RngSpec(1))
    assert r.passed and r.mean == [0.0, 0.0]
    assert all(v == 0.0 for _, _, v in r.per_trial)


def test_theta_estimate_shapes_and_agreement():
    prob = SpectralProblem.from_pencil(Pencil(np.zeros((1, 1)), (np.eye(1),)), EMPTY)
    (est,) = theta_estimate(prob, 20, 400, [2j], RngSpec(5))
    assert est["samples"].shape == (400, 1, 1)
    # both estimators target the same defect; at small N it is well above the noise
    diff = abs(est["theta_cov"][0, 0] - est["theta_plugin"][0, 0])
    assert diff <= 4 * np.hypot(est["cov_stderr"], est["plugin_stderr"])


def test_theta_decay_small_run():
    r = theta_decay(gue_problem(), [25, 50, 100], 60, 2j, RngSpec(6), envelope_Lam=4j)
    assert r.slope < -1.2
    assert r.details["envelope"]["ratio"] <= 48
    assert r.details["theorem_constant"] == pytest.approx(2.0)


def test_theoretical_constant_formula():
    L = Pencil(np.zeros((2, 2)), (np.eye(2), 2 * np.eye(2)), (np.eye(2),))
    assert theoretical_theta_constant(L) == pytest.approx(2 * 2 ** 4.5 * 5 * 16)


def test_sd_residual_zero_without_gue():
    r = sd_mean_residual(deterministic_problem(), 20, 4, 2j, 3j, RngSpec(7))
    assert r.passed and r.mean == [0.0]


def test_sd_residual_scalar():
    r = sd_mean_residual(gue_problem(), 100, 200, 2j, 3j, RngSpec(8))
    assert r.passed


def test_sd_residual_same_arguments_k2():
    prob = SpectralProblem.from_polynomial(parse_polynomial("x1^2"), EMPTY)
    lam = np.diag([2j, 1j])
    r = sd_mean_residual(prob, 40, 100, lam, lam, RngSpec(9))
    assert r.passed


def test_g_difference_vanishes_without_gue():
    r = g_difference_decay(deterministic_problem(), [10, 20], 3, 2j, RngSpec(1))
    assert r.passed and r.mean == [0.0, 0.0]
