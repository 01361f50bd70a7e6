import numpy as np
import pytest

from conftest import random_hermitian, random_upper
from ncspec.linalg import (LinAlgFailure, hermitian, herm_eig, imag_part, in_lower_half, in_upper_half,
                           inv_imag_norm, op_norm, partial_trace, resolvent)


def test_herm_eig_diagonal():
    w, _ = herm_eig(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [1, 2, 3])


def test_herm_eig_pauli_x():
    w, _ = herm_eig(np.array([[0, 1], [1, 0]]))
    assert np.allclose(w, [-1, 1])


def test_herm_eig_random_reconstruction(rng):
    m = random_hermitian(rng, 8)
    w, U = herm_eig(m)
    assert np.allclose(U.conj().T @ U, np.eye(8), atol=1e-12)
    assert np.linalg.norm(U @ np.diag(w) @ U.conj().T - m) <= 1e-10 * np.linalg.norm(m)
    assert np.all(np.diff(w) >= 0)


def test_herm_eig_rejects_non_finite():
    with pytest.raises((LinAlgFailure, ValueError)):
        herm_eig(np.array([[np.nan, 0], [0, 1]]))


def test_hermitian_symmetrizes_tiny_asymmetry():
    m = np.array([[1.0, 2.0 + 1e-15], [2.0, 1.0]])
    h = hermitian(m)
    assert np.array_equal(h, h.conj().T)


def test_imag_part_examples():
    assert np.allclose(imag_part(1j * np.eye(2)), np.eye(2))
    assert np.allclose(imag_part(np.array([[1.0, 2.0], [2.0, 5.0]])), 0)
    m = np.array([[2j, 1], [0, 1j]])
    assert np.allclose(imag_part(m), [[2, -0.5j], [0.5j, 1]])


def test_imag_part_antisymmetry(rng):
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.allclose(imag_part(m) + imag_part(m.conj().T), 0)


def test_half_plane_membership():
    assert in_upper_half(1j * np.eye(3))
    assert not in_upper_half(np.diag([1.0, 2.0]))
    assert not in_upper_half(np.diag([1j, -1j]))
    assert in_lower_half(-1j * np.eye(2))


def test_resolvent_scalar():
    r = resolvent(np.array([[2j]]), np.zeros((1, 1)))
    assert np.allclose(r, [[-0.5j]])


def test_resolvent_functional_calculus(rng):
    z = random_hermitian(rng, 5)
    lam = 0.3 + 0.7j
    ev = np.linalg.eigvalsh(z)
    got = np.sort_complex(np.linalg.eigvals(resolvent(np.array([[lam]]), z)))
    assert np.allclose(got, np.sort_complex(1 / (lam - ev)))


def test_resolvent_norm_bound(rng):
    z = random_hermitian(rng, 12)
    r = resolvent(3j * np.eye(3), np.kron(np.eye(3), z[:4, :4]))
    assert op_norm(r) <= 1 / 3 + 1e-12


def test_resolvent_rejects_lower_half():
    with pytest.raises(ValueError):
        resolvent(np.array([[-1j]]), np.zeros((1, 1)))


def test_partial_trace_examples(rng):
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.allclose(partial_trace(np.kron(A, np.eye(4)), 3), A)
    E = np.diag([1.0, -1.0, 2.0, -2.0])
    assert np.allclose(partial_trace(np.kron(A, E), 3), 0)
    Y = random_hermitian(rng, 4)
    assert np.allclose(partial_trace(np.kron(np.eye(3), Y), 3), np.trace(Y) / 4 * np.eye(3))


def test_partial_trace_linear(rng):
    b1 = rng.normal(size=(6, 6)) + 0j
    b2 = rng.normal(size=(6, 6)) + 0j
    assert np.allclose(partial_trace(2 * b1 - 3j * b2, 2), 2 * partial_trace(b1, 2) - 3j * partial_trace(b2, 2))


def test_op_norm_examples():
    assert op_norm(np.diag([-3.0, 2.0])) == pytest.approx(3.0)
    assert op_norm(np.eye(4)) == pytest.approx(1.0)
    assert op_norm(np.array([[0.0, 2.0], [0.0, 0.0]])) == pytest.approx(2.0)


def test_op_norm_large_matches_svd(rng):
    m = rng.normal(size=(150, 150)) + 1j * rng.normal(size=(150, 150))
    assert op_norm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-8)


def test_inv_imag_norm(rng):
    lam = random_upper(rng, 3)
    assert inv_imag_norm(lam) == pytest.approx(np.linalg.norm(np.linalg.inv(imag_part(lam)), 2))
