"""Subordination fixed point G = G_T(Lambda - a0 - R_s(G)).

Picard iteration is the contraction map itself. Near the real axis its ratio
tends to 1, so after a short Picard phase the solver switches to Newton on
F(G) = G - Phi(G), keeping every accepted iterate inside the lower
half-plane. Grids are solved by continuation: each column descends from
``start_im`` to the target imaginary part, then neighbouring points are
warm-started from each other.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .linalg import imag_part, in_upper_half, inv_imag_norm, op_norm
from .pencil import LinearizationCertificate, pencil_scalar
from .stieltjes import (EmptySupport, MatrixStieltjes, R_s, SpectralReport,
                        detect_support, invert_density, norm_estimate)


class SolverNonConvergence(RuntimeError):
    def __init__(self, msg: str, report: SpectralReport | None = None):
        super().__init__(msg)
        self.report = report


@dataclass
class FixedPointConfig:
    tol: float = 1e-12
    max_iter: int = 10_000
    damping: float = 1.0
    start_im: float | None = None      # None: 8*sum||a_j|| + ||a0|| + model bound
    step_factor: float = 0.5           # initial continuation factor (adaptive)
    newton: bool = True
    picard_window: int = 2             # Picard sweeps before Newton takes over
    segment: int | None = None         # grid points per warm-start chain; None: one per thread
    accept_fraction: float = 0.99
    eta: float = 1e-3
    threshold: float | None = None     # support threshold; None: 10*eta

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not 0 < self.step_factor < 1:
            raise ValueError("step_factor must lie in (0, 1)")
        if self.max_iter < 1 or (self.segment is not None and self.segment < 1):
            raise ValueError("max_iter and segment must be positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def support_threshold(self) -> float:
        return 10.0 * self.eta if self.threshold is None else self.threshold


@dataclass
class SubordinationSolution:
    Lam: np.ndarray
    G: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    in_contraction_domain: bool


def _vec(m):
    return m.reshape(-1)


def _interior(Lam, a0, a, G):
    return Lam - a0 - R_s(a, G)


def _lower(G) -> bool:
    return bool(np.linalg.eigvalsh(imag_part(G))[-1] < 0.0)


def contraction_ratio(Lam, a) -> float:
    """||(Im Lam)^{-1}||^2 sum ||a_j||^2, the Picard contraction constant."""
    return inv_imag_norm(Lam) ** 2 * sum(op_norm(aj) ** 2 for aj in a)


def solve_point(GT: MatrixStieltjes, a0, a, Lam, cfg: FixedPointConfig | None = None,
                warm_start=None) -> SubordinationSolution:
    cfg = cfg or FixedPointConfig()
    Lam = np.asarray(Lam, dtype=complex)
    a0 = np.asarray(a0, dtype=complex)
    a = [np.asarray(x, dtype=complex) for x in a]
    if not in_upper_half(Lam):
        raise ValueError("solve_point needs Lambda in the matrix upper half-plane")
    k = Lam.shape[0]
    in_domain = contraction_ratio(Lam, a) < 1.0 if a else True

    def phi(G):
        return GT(_interior(Lam, a0, a, G), check=False)

    if not a:
        return SubordinationSolution(Lam, GT(Lam - a0, check=False), 1, 0.0, True, True)
    G = None
    if warm_start is not None:
        W = np.asarray(warm_start, dtype=complex)
        if _lower(W) and in_upper_half(_interior(Lam, a0, a, W)):
            G = W
    if G is None:
        G = GT(Lam - a0, check=False)

    theta = cfg.damping
    it = 0
    best, best_res = G, np.inf
    prev = np.inf
    rises = 0
    slow = 0
    while it < cfg.max_iter:
        F = phi(G)
        res = float(np.linalg.norm(G - F))
        it += 1
        if res < best_res:
            best, best_res = G, res
        if res <= cfg.tol:
            return SubordinationSolution(Lam, G, it, res, True, in_domain)
        rises = rises + 1 if res > prev else 0
        if rises >= 2:
            theta *= 0.5
            rises = 0
        slow = slow + 1 if res > 0.5 * prev else 0
        prev = res
        if cfg.newton and (it >= cfg.picard_window or slow >= 3):
            break
        G = theta * F + (1.0 - theta) * G

    if cfg.newton and it < cfg.max_iter:
        # Newton with a reused (chord) factorization, refreshed whenever a
        # stale step is rejected or reduces the residual too slowly
        I = np.eye(k * k)
        G = best
        stall = 0
        lu = None
        while it < cfg.max_iter:
            Gam = _interior(Lam, a0, a, G)
            fresh = lu is None
            if fresh:
                F, DA = GT.with_jacobian(Gam, a)
                try:
                    lu = linalg.lu_factor(I + DA, check_finite=False)
                except (ValueError, np.linalg.LinAlgError):
                    break
            else:
                F = GT(Gam, check=False)
            r = _vec(G - F)
            res = float(np.linalg.norm(r))
            it += 1
            if res < best_res:
                best, best_res = G, res
            if res <= cfg.tol:
                return SubordinationSolution(Lam, G, it, res, True, in_domain)
            delta = linalg.lu_solve(lu, -r, check_finite=False).reshape(k, k)
            if not np.all(np.isfinite(delta)):
                break
            step = 1.0
            accepted = False
            for _ in range(30 if fresh else 1):
                Gn = G + step * delta
                if _lower(Gn):
                    Gam_n = _interior(Lam, a0, a, Gn)
                    if in_upper_half(Gam_n):
                        rn = float(np.linalg.norm(Gn - GT(Gam_n, check=False)))
                        if rn < res or rn <= cfg.tol:
                            accepted = True
                            break
                step *= 0.5
            if not accepted:
                if fresh:
                    break
                lu = None
                continue
            if not fresh and rn > 0.25 * res:
                lu = None
            stall = stall + 1 if rn > 0.5 * res else 0
            G = Gn
            if stall >= 8:
                break
        G = best
        # Picard from the best iterate if Newton gave up early
        while it < cfg.max_iter:
            F = phi(G)
            res = float(np.linalg.norm(G - F))
            it += 1
            if res < best_res:
                best, best_res = G, res
            if res <= cfg.tol:
                return SubordinationSolution(Lam, G, it, res, True, in_domain)
            G = theta * F + (1.0 - theta) * G
            if not in_domain and it > cfg.max_iter // 2 and res >= best_res:
                break
    return SubordinationSolution(Lam, best, it, best_res, False, in_domain)


# ---------------------------------------------------------------- grids

def default_start_im(a0, a, model_bound: float) -> float:
    return 8.0 * sum(op_norm(x) for x in a) + op_norm(a0) + model_bound + 1.0


class _Path:
    """Spectral argument along the continuation coordinate s."""

    def __init__(self, k: int, cert: LinearizationCertificate | None):
        self.k = k
        self.cert = cert

    def arg(self, t: float, eta: float, s: float) -> np.ndarray:
        if self.cert is None:
            return (t + 1j * max(s, eta)) * np.eye(self.k)
        eps = self.cert.epsilon_pad
        d = np.full(self.k, 1j * max(s, eps), dtype=complex)
        d[:self.cert.corner_dim] = t + 1j * max(s, eta)
        return np.diag(d)


def _descend(GT, a0, a, path, t, eta, start, floor, cfg):
    """Walk the imaginary part from ``start`` down to ``floor``.

    The step factor starts at ``cfg.step_factor``; it squares after a quick
    solve and backs off (square root) when a level fails to converge, in
    which case the level is retried from the last converged iterate. Once
    the factor is within 1% of 1 a failure ends the walk with a direct
    attempt at ``floor``.
    """
    G = None
    iters = 0
    s = start
    f = cfg.step_factor
    sol = solve_point(GT, a0, a, path.arg(t, eta, s), cfg)
    iters += sol.iterations
    if sol.converged:
        G = sol.G
    while s > floor:
        s_next = max(s * f, floor)
        trial = solve_point(GT, a0, a, path.arg(t, eta, s_next), cfg, warm_start=G)
        iters += trial.iterations
        if trial.converged:
            sol, s, G = trial, s_next, trial.G
            if trial.iterations <= 12:
                f = max(f * f, 0.01)
        elif f >= 0.99:
            sol = solve_point(GT, a0, a, path.arg(t, eta, floor), cfg, warm_start=trial.G)
            iters += sol.iterations
            break
        else:
            f = math.sqrt(f)
    sol.iterations = iters
    return sol


def solve_grid(GT: MatrixStieltjes, a0, a, grid, cert: LinearizationCertificate | None = None,
               cfg: FixedPointConfig | None = None, threads: int = 1, model_bound: float = 0.0,
               refine_support: bool = True) -> SpectralReport:
    """Density, support and diagnostics on lam_i = t_i + i eta.

    ``grid`` holds the real parts t_i; eta comes from ``cfg.eta``.
    """
    cfg = cfg or FixedPointConfig()
    a0 = np.asarray(a0, dtype=complex)
    a = [np.asarray(x, dtype=complex) for x in a]
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("grid must be a nonempty 1-d array of real parts")
    eta = cfg.eta
    k = a0.shape[0]
    path = _Path(k, cert)
    start = cfg.start_im if cfg.start_im is not None else default_start_im(a0, a, model_bound)
    floor = min(eta, cert.epsilon_pad) if cert is not None else eta

    def run_segment(idx):
        sols = []
        prev = None
        for i in idx:
            sol = None
            if prev is not None:
                sol = solve_point(GT, a0, a, path.arg(t[i], eta, 0.0), cfg, warm_start=prev.G)
                if not sol.converged:
                    sol = None
            if sol is None:
                sol = _descend(GT, a0, a, path, t[i], eta, start, floor, cfg)
            sols.append(sol)
            prev = sol if sol.converged else None
        return sols

    seg = cfg.segment or max(1, math.ceil(t.size / max(threads, 1)))
    chunks = [list(range(i, min(i + seg, t.size))) for i in range(0, t.size, seg)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run_segment, chunks))
    else:
        parts = [run_segment(c) for c in chunks]
    sols = [s for part in parts for s in part]

    g = np.array([pencil_scalar(s.G, cert) for s in sols])
    density, lo = invert_density(g)
    conv = np.array([s.converged for s in sols])
    residuals = np.array([s.final_residual for s in sols])
    iterations = np.array([s.iterations for s in sols])

    def density_fn(x):
        j = int(np.argmin(np.abs(t - x)))
        s = solve_point(GT, a0, a, path.arg(x, eta, 0.0), cfg, warm_start=sols[j].G)
        if not s.converged:
            s = _descend(GT, a0, a, path, x, eta, start, floor, cfg)
        return -pencil_scalar(s.G, cert).imag / math.pi

    threshold = cfg.support_threshold
    if np.mean(conv) < cfg.accept_fraction:
        refine_support = False  # the report is only diagnostic now
    try:
        support = detect_support(t, density, threshold, density_fn if refine_support else None)
        norm = norm_estimate(support)
    except EmptySupport:
        support, norm = [], float("nan")
    report = SpectralReport(t, density, support, norm, eta, g, residuals, iterations, conv,
                            threshold, lo)
    if report.converged_fraction < cfg.accept_fraction:
        raise SolverNonConvergence(
            f"only {report.converged_fraction:.1%} of grid points converged", report)
    return report


# ---------------------------------------------------------------- defect and stability

def theta_residual(G_hat, GT: MatrixStieltjes, a0, a, Lam) -> tuple[np.ndarray, float]:
    """Theta = G_hat - G_T(Lam - a0 - R_s(G_hat)) and its operator norm."""
    G_hat = np.asarray(G_hat, dtype=complex)
    inner = np.asarray(Lam, dtype=complex) - np.asarray(a0) - R_s(a, G_hat)
    if not in_upper_half(inner):
        raise ValueError("Lam - a0 - R_s(G_hat) left the upper half-plane; "
                         "G_hat must have negative definite imaginary part")
    theta = G_hat - GT(inner)
    return theta, op_norm(theta)


class StabilityBound(NamedTuple):
    value: float | None
    kappa: float
    available: bool


def stability_bound(theta_norm: float, Lam, a, eps: float = 0.5) -> StabilityBound:
    """(1 + (1/eps) sum||a_j||^2 ||(Im Lam)^{-1}||^2) ||Theta||, valid when
    kappa = ||Theta|| ||(Im Lam)^{-1}|| sum||a_j||^2 < 1 - eps."""
    s2 = sum(op_norm(x) ** 2 for x in a)
    r = inv_imag_norm(Lam)
    kappa = theta_norm * r * s2
    if kappa >= 1.0 - eps:
        return StabilityBound(None, kappa, False)
    return StabilityBound((1.0 + s2 * r * r / eps) * theta_norm, kappa, True)
