import numpy as np
import pytest

from conftest import random_hermitian
from ncspec.ensembles import (ChannelSpec, RngSpec, WishartSpec, build_block, build_channel, build_wishart_embedding,
                              channel_block_grid, embedding_identity_check, projection_model, quantile_diag,
                              quantile_values, sample_ginibre, sample_gue, white_wishart_polynomial)
from ncspec.experiments import quantile_convergence
from ncspec.pencil import NCPolynomial, evaluate, parse_polynomial
from ncspec.stieltjes import QuantileTable

UNIFORM01 = QuantileTable("uniform", {"a": 0.0, "b": 1.0})


# ---------------------------------------------------------------- GUE and Gaussian matrices

def test_gue_single_entry_is_real():
    x = sample_gue(1, RngSpec(3))
    assert x.shape == (1, 1) and x[0, 0].imag == 0


def test_gue_is_hermitian_and_reproducible():
    a, b = sample_gue(20, RngSpec(5, (1, 2))), sample_gue(20, RngSpec(5, (1, 2)))
    assert np.array_equal(a, b) and np.array_equal(a, a.conj().T)
    assert not np.array_equal(a, sample_gue(20, RngSpec(5, (1, 3))))


def test_gue_moments():
    m2, m4 = [], []
    for i in range(20):
        x = sample_gue(500, RngSpec(11, (i,)))
        x2 = x @ x
        m2.append(np.trace(x2).real / 500)
        m4.append(np.trace(x2 @ x2).real / 500)
    assert abs(np.mean(m2) - 1) <= 0.05
    assert abs(np.mean(m4) - 2) <= 0.1


def test_gue_rejects_bad_size():
    with pytest.raises(ValueError):
        sample_gue(0, RngSpec(1))


def test_rng_spec_validation():
    with pytest.raises(ValueError):
        RngSpec(-1)
    with pytest.raises(TypeError):
        sample_gue(3, 42)


def test_ginibre_variance_and_edge():
    g = sample_ginibre(1, 1, 1.0, RngSpec(2))
    assert g.shape == (1, 1)
    M = sample_ginibre(500, 500, 1.0 / 500, RngSpec(3))
    assert np.mean(np.sum(np.abs(M) ** 2, axis=0)) == pytest.approx(1.0, rel=0.02)
    assert abs(np.linalg.norm(M, 2) - 2.0) <= 0.1


# ---------------------------------------------------------------- quantile matrices

def test_quantile_diag_examples():
    assert np.allclose(np.diag(quantile_diag(UNIFORM01, 0.0, 5)), np.arange(1, 6) / 5)
    assert np.allclose(np.diag(quantile_diag(UNIFORM01, 0.5, 4)), [0.75, 1.0, 0.25, 0.5])
    with pytest.raises(ValueError):
        quantile_diag(UNIFORM01, 1.5, 4)


def test_quantile_values_nondecreasing():
    vals = quantile_values(QuantileTable("semicircle"), 50)
    assert np.all(np.diff(vals) >= 0)


@pytest.mark.parametrize("table", [QuantileTable("uniform", {"a": -1, "b": 1}), QuantileTable("semicircle")])
@pytest.mark.parametrize("N", [100, 1000])
def test_quantile_convergence_smooth(table, N):
    assert quantile_convergence(table, N) <= 2 / np.sqrt(N)


# ---------------------------------------------------------------- Wishart embedding

def test_partition_of_identity():
    emb = build_wishart_embedding(WishartSpec(2, (1, 3), 4), RngSpec(1))
    assert np.allclose(sum(emb.e), np.eye(emb.spec.dim))


def test_white_embedding_corner_equals_wishart():
    emb = build_wishart_embedding(WishartSpec(1, (1,), 3), RngSpec(2))
    assert np.allclose(emb.W_tilde[0][:3, :3], emb.W[0], atol=1e-12)
    assert np.allclose(emb.W_tilde[0][3:, :], 0)


def test_corner_variance():
    r, N = 1, 100
    vals = [np.mean(np.abs(build_wishart_embedding(WishartSpec(r, (2,), N), RngSpec(7, (i,))).M[0]) ** 2)
            for i in range(5)]
    assert np.mean(vals) == pytest.approx(1 / (r * N), rel=0.02)


@pytest.mark.parametrize("text,q", [("x1", 0), ("x1*y1 + y1^**x1", 1), ("1", 0), ("x1*x2*x1 + x2^2", 0)])
def test_embedding_identity(text, q):
    P = parse_polynomial(text, 2 if "x2" in text else 1, q)
    spec = WishartSpec(1, (1,) * P.p, 20)
    assert embedding_identity_check(P, spec, RngSpec(9)) <= 1e-10


def test_embedding_identity_non_white():
    from ncspec.stieltjes import DeterministicModel
    Z = np.diag(np.linspace(0.5, 2.0, 40)).astype(complex)
    spec = WishartSpec(1, (2,), 20, (DeterministicModel("empirical", (Z,)),))
    assert embedding_identity_check(parse_polynomial("x1^2 + x1", 1), spec, RngSpec(4)) <= 1e-10


def test_white_polynomial_reproduces_wishart():
    r, s, N = 1, (2,), 10
    spec = WishartSpec(r, s, N)
    emb = build_wishart_embedding(spec, RngSpec(5))
    P = parse_polynomial("x1^2 + 2", 1)
    big = evaluate(white_wishart_polynomial(P, r, s), emb.X_tilde, emb.e)
    W = emb.W[0]
    assert np.allclose(big[:r * N, :r * N], W @ W + 2 * np.eye(r * N), atol=1e-10)
    assert np.allclose(big[r * N:, :], 0, atol=1e-12)


def test_white_polynomial_rejects_y_letters():
    with pytest.raises(ValueError):
        white_wishart_polynomial(parse_polynomial("x1*y1 + y1^**x1"), 1, (1,))


def test_projection_model_blocks():
    model = projection_model((1, 2, 1))
    (p0, p1, p2) = model.matrices_at(8)
    assert np.allclose(p0 + p1 + p2, np.eye(8))
    assert [int(np.trace(p).real) for p in (p0, p1, p2)] == [2, 4, 2]
    for p in (p0, p1, p2):
        assert np.allclose(p @ p, p)


# ---------------------------------------------------------------- block and channel matrices

def test_build_block_single_entry(rng):
    P = parse_polynomial("x1^2 + x1", 1)
    X = random_hermitian(rng, 4)
    assert np.allclose(build_block([[P]], [X]), evaluate(P, [X]))


def test_build_block_diagonal_grid(rng):
    x1 = NCPolynomial.letter("x1")
    zero = NCPolynomial(1, 0, {})
    X = random_hermitian(rng, 3)
    out = build_block([[x1, zero], [zero, x1 * x1]], [X])
    assert np.allclose(out, np.block([[X, np.zeros((3, 3))], [np.zeros((3, 3)), X @ X]]))


def test_build_block_trace_identity(rng):
    x1, y1 = NCPolynomial.letter("x1", 1, 1), NCPolynomial.letter("y1", 1, 1)
    grid = [[x1 * x1, x1 * y1], [y1 * x1, y1 * x1 * y1 + 1.0]]
    X, Y = random_hermitian(rng, 4), random_hermitian(rng, 4)
    out = build_block(grid, [X], [Y], hermitian_y=True)
    expected = np.trace(X @ X) + np.trace(Y @ X @ Y) + 4
    assert abs(np.trace(out) - expected) <= 1e-12 * max(1.0, abs(expected))


def test_build_block_rejects_asymmetric(rng):
    x1 = NCPolynomial.letter("x1")
    with pytest.raises(ValueError):
        build_block([[x1, x1], [x1 * 2.0, x1]], [random_hermitian(rng, 2)])


def test_channel_single_tap_single_block():
    spec = ChannelSpec(1, 2, 3, (1.0,), 4)
    H, HH = build_channel(spec, RngSpec(1))
    A = sample_ginibre(8, 12, 1.0 / 4, RngSpec(1, (0,)))
    assert np.allclose(H, A)
    assert np.allclose(HH, A @ A.conj().T)


def test_channel_zero_variance():
    H, HH = build_channel(ChannelSpec(2, 1, 1, (0.0, 0.0), 5, 2), RngSpec(1))
    assert not H.any() and not HH.any()


def test_channel_mean_trace():
    spec = ChannelSpec(2, 1, 1, (1.0, 0.5), 50, 2)
    vals = [np.trace(build_channel(spec, RngSpec(3, (i,)))[1]).real / (2 * 50) for i in range(40)]
    assert np.mean(vals) == pytest.approx(1.5, abs=0.03)


def test_channel_block_grid_reproduces_channel():
    spec = ChannelSpec(2, 1, 1, (1.0, 0.5), 6, 2)
    N, D = spec.N, (spec.r + spec.t) * spec.N
    X = [sample_gue(D, RngSpec(8, (l,))) for l in range(spec.L)]
    e0 = np.diag([1.0] * N + [0.0] * N).astype(complex)
    e1 = np.eye(D) - e0
    big = build_block(channel_block_grid(spec), X, [e0, e1], hermitian_y=True)
    # the same taps read off the GUE corners
    taps = [np.sqrt(spec.sigma2[l] * (spec.r + spec.t)) * X[l][:N, N:] for l in range(spec.L)]
    H = np.zeros((2 * N, 3 * N), dtype=complex)
    for b in range(2):
        for l, A in enumerate(taps):
            H[b * N:(b + 1) * N, (b + l) * N:(b + l + 1) * N] = A
    corner = np.concatenate([np.arange(0, N), np.arange(D, D + N)])
    assert np.allclose(big[np.ix_(corner, corner)], H @ H.conj().T, atol=1e-12)


def test_channel_grid_rejects_shaped_taps():
    from ncspec.stieltjes import DeterministicModel
    C = (DeterministicModel("empirical", (np.eye(2),)), None)
    with pytest.raises(ValueError):
        channel_block_grid(ChannelSpec(2, 1, 1, (1.0, 1.0), 2, 1, C=C))
