"""Dense complex matrix kernel.

Matrices are plain ``numpy`` arrays. A block operator of shape ``(k*n, k*n)``
is indexed as ``(u, m), (v, m')`` with the k-index outermost, which is the
layout produced by ``np.kron(a, x)`` for ``a`` of size k.
"""
from __future__ import annotations

import numpy as np

HERM_ATOL = 1e-12


class LinAlgFailure(RuntimeError):
    """Numerical failure with a short condition report attached."""


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.atleast_2d(np.asarray(m, dtype=complex))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] < 1:
        raise ValueError(f"{name} must have dim >= 1")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def hermitian(m, name: str = "matrix") -> np.ndarray:
    """Symmetrize to (m + m*)/2 so downstream code sees exact selfadjointness."""
    a = as_matrix(m, name)
    return 0.5 * (a + a.conj().T)


def is_hermitian(m, atol: float = HERM_ATOL) -> bool:
    a = np.asarray(m)
    return a.shape[0] == a.shape[1] and bool(np.allclose(a, a.conj().T, rtol=0.0, atol=atol))


def _condition_report(a: np.ndarray) -> str:
    try:
        s = np.linalg.svd(a, compute_uv=False)
        cond = s[0] / s[-1] if s[-1] > 0 else np.inf
        return f"dim={a.shape[0]}, sigma_max={s[0]:.3e}, sigma_min={s[-1]:.3e}, cond={cond:.3e}"
    except np.linalg.LinAlgError:
        return f"dim={a.shape[0]}, svd failed"


def herm_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix."""
    a = hermitian(m)
    try:
        w, u = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise LinAlgFailure(f"eigh did not converge ({_condition_report(a)})") from exc
    scale = max(np.linalg.norm(a), 1.0)
    resid = np.linalg.norm(a - (u * w) @ u.conj().T)
    if resid > 1e-10 * scale:
        raise LinAlgFailure(f"eigh reconstruction residual {resid:.2e} ({_condition_report(a)})")
    return w, u


def imag_part(m) -> np.ndarray:
    """Hermitian imaginary part (m - m*)/(2i)."""
    a = as_matrix(m)
    return (a - a.conj().T) / 2j


def real_part(m) -> np.ndarray:
    a = as_matrix(m)
    return 0.5 * (a + a.conj().T)


def in_upper_half(m) -> bool:
    """True iff Im m is positive definite."""
    return bool(np.linalg.eigvalsh(imag_part(m))[0] > 0.0)


def in_lower_half(m) -> bool:
    return bool(np.linalg.eigvalsh(imag_part(m))[-1] < 0.0)


def inv_imag_norm(m) -> float:
    """||(Im m)^{-1}|| for m in the upper half-plane."""
    lo = np.linalg.eigvalsh(imag_part(m))[0]
    if lo <= 0:
        raise ValueError("imaginary part is not positive definite")
    return float(1.0 / lo)


def block_dims(dim: int, k: int) -> int:
    if k < 1 or dim % k:
        raise ValueError(f"dim {dim} is not a multiple of k={k}")
    return dim // k


def lift(lam, n: int) -> np.ndarray:
    """lam ⊗ 1_n."""
    return np.kron(np.asarray(lam, dtype=complex), np.eye(n))


def resolvent(lam, z, k: int | None = None, check: bool = True) -> np.ndarray:
    """(lam ⊗ 1_n - z)^{-1} by a dense LU solve; ``check`` enforces Im lam > 0."""
    lam = as_matrix(lam, "Lambda")
    if check and not in_upper_half(lam):
        raise ValueError("resolvent needs Lambda in the matrix upper half-plane")
    k = lam.shape[0] if k is None else k
    z = np.asarray(z, dtype=complex)
    n = block_dims(z.shape[0], k)
    a = lift(lam, n) - z
    try:
        return np.linalg.solve(a, np.eye(a.shape[0], dtype=complex))
    except np.linalg.LinAlgError as exc:
        raise LinAlgFailure(f"singular resolvent system ({_condition_report(a)})") from exc


def partial_trace(b, k: int) -> np.ndarray:
    """(id_k ⊗ tau_n)(b): entry (u, v) is the mean over m of b[(u,m),(v,m)]."""
    b = np.asarray(b)
    n = block_dims(b.shape[0], k)
    return np.einsum("umvm->uv", b.reshape(k, n, k, n)) / n


def kron_apply(m, b, k: int, left: bool = True) -> np.ndarray:
    """(m ⊗ 1_n) @ b (left) or b @ (m ⊗ 1_n) without forming the Kronecker product."""
    b = np.asarray(b)
    n = block_dims(b.shape[0], k)
    if left:
        r = np.einsum("uv,vmw->umw", m, b.reshape(k, n, -1))
    else:
        r = np.einsum("wvm,vu->wum", b.reshape(-1, k, n), m)
    return r.reshape(b.shape)


_POWER_DIRECT_DIM = 64


def op_norm(m, tol: float = 1e-10, max_iter: int = 500) -> float:
    """Largest singular value.

    Small matrices use an exact SVD. Larger ones use power iteration on m*m
    from a fixed start vector, falling back to SVD if it stalls.
    """
    a = np.atleast_2d(np.asarray(m, dtype=complex))
    if a.size == 0:
        return 0.0
    if max(a.shape) <= _POWER_DIRECT_DIM:
        return float(np.linalg.norm(a, 2))
    v = np.ones(a.shape[1], dtype=complex) / np.sqrt(a.shape[1])
    est = 0.0
    for _ in range(max_iter):
        w = a.conj().T @ (a @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = float(np.sqrt(nw))
        v = w / nw
        if abs(new - est) <= tol * max(new, 1.0):
            return new
        est = new
    return float(np.linalg.norm(a, 2))
