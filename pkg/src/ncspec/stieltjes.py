"""Matrix-valued Stieltjes transforms of the deterministic part, the
semicircular map R_s, density recovery and support detection."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import hermitian, in_upper_half, is_hermitian, op_norm, partial_trace, resolvent


# ---------------------------------------------------------------- serialization

def complex_to_json(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def complex_from_json(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError(f"complex value must be [re, im], got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def matrix_to_json(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[complex_to_json(z) for z in row] for row in m]


def matrix_from_json(rows) -> np.ndarray:
    return np.array([[complex_from_json(z) for z in row] for row in rows], dtype=complex)


# ---------------------------------------------------------------- quantile tables

def semicircle_cdf(t, radius: float = 2.0):
    x = np.clip(np.asarray(t, dtype=float) / radius, -1.0, 1.0)
    return 0.5 + (x * np.sqrt(1.0 - x * x) + np.arcsin(x)) / np.pi


def semicircle_density(t, radius: float = 2.0):
    t = np.asarray(t, dtype=float)
    return 2.0 / (np.pi * radius**2) * np.sqrt(np.clip(radius**2 - t * t, 0.0, None))


def _bisect_ppf(cdf, u, lo: float, hi: float, iters: int = 64):
    u = np.asarray(u, dtype=float)
    a = np.full(u.shape, lo)
    b = np.full(u.shape, hi)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        below = cdf(mid) < u
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    return 0.5 * (a + b)


def wrap_unit(u):
    """Map reals onto (0, 1] so that F^{-1} is 1-periodic."""
    u = np.asarray(u, dtype=float)
    r = u - np.floor(u)
    return np.where(r == 0.0, 1.0, r)


@dataclass(frozen=True)
class QuantileTable:
    """Nondecreasing inverse cdf on (0, 1], extended 1-periodically.

    kinds: ``uniform`` (a, b), ``semicircle`` (radius), ``atoms`` (values,
    probs) and ``empirical`` (values; step function of the sorted sample).
    """
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = dict(self.params)
        if self.kind == "uniform":
            p = {"a": float(p.get("a", 0.0)), "b": float(p.get("b", 1.0))}
            if p["b"] < p["a"]:
                raise ValueError("uniform table needs a <= b")
        elif self.kind == "semicircle":
            p = {"radius": float(p.get("radius", 2.0))}
            if p["radius"] <= 0:
                raise ValueError("semicircle radius must be positive")
        elif self.kind == "atoms":
            vals = np.asarray(p["values"], dtype=float)
            probs = np.asarray(p["probs"], dtype=float)
            if vals.shape != probs.shape or vals.size == 0 or np.any(probs < 0):
                raise ValueError("atoms need matching nonnegative probs")
            if abs(probs.sum() - 1.0) > 1e-9:
                raise ValueError("atom probabilities must sum to 1")
            order = np.argsort(vals, kind="stable")
            p = {"values": vals[order].tolist(), "probs": probs[order].tolist()}
        elif self.kind == "empirical":
            vals = np.sort(np.asarray(p["values"], dtype=float))
            if vals.size == 0:
                raise ValueError("empirical table needs values")
            p = {"values": vals.tolist()}
        else:
            raise ValueError(f"unknown quantile table kind {self.kind!r}")
        object.__setattr__(self, "params", p)

    def ppf(self, u):
        u = wrap_unit(u)
        p = self.params
        if self.kind == "uniform":
            return p["a"] + (p["b"] - p["a"]) * u
        if self.kind == "semicircle":
            r = p["radius"]
            return _bisect_ppf(lambda t: semicircle_cdf(t, r), u, -r, r)
        if self.kind == "atoms":
            vals = np.asarray(p["values"])
            cum = np.cumsum(p["probs"])
            idx = np.searchsorted(cum, u - 1e-12, side="left")
            return vals[np.clip(idx, 0, vals.size - 1)]
        vals = np.asarray(p["values"])
        n = vals.size
        idx = np.ceil(u * n * (1.0 - 1e-12)).astype(int) - 1
        return vals[np.clip(idx, 0, n - 1)]

    def bound(self) -> float:
        p = self.params
        if self.kind == "uniform":
            return max(abs(p["a"]), abs(p["b"]))
        if self.kind == "semicircle":
            return p["radius"]
        return float(np.max(np.abs(p["values"])))

    def to_json(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_json(cls, d: dict) -> "QuantileTable":
        d = dict(d)
        return cls(d.pop("kind"), d)


# ---------------------------------------------------------------- deterministic models

@dataclass(frozen=True)
class DeterministicModel:
    """The deterministic family Y.

    ``empirical``: explicit Hermitian matrices of a common dimension.
    ``quantile``: diagonal quantile family y_j(u) = F_j^{-1}(u + v_j) sampled
    at m midpoint nodes.
    """
    mode: str = "empirical"
    matrices: tuple = ()
    tables: tuple = ()
    offsets: tuple = ()
    m: int = 4096

    def __post_init__(self):
        if self.mode == "empirical":
            mats = tuple(np.asarray(y, dtype=complex) for y in self.matrices)
            dims = {y.shape for y in mats}
            if len(dims) > 1:
                raise ValueError("empirical matrices must share a dimension")
            for y in mats:
                if y.ndim != 2 or y.shape[0] != y.shape[1] or not is_hermitian(y, 1e-10):
                    raise ValueError("empirical matrices must be square Hermitian")
            object.__setattr__(self, "matrices", tuple(hermitian(y) for y in mats))
        elif self.mode == "quantile":
            tabs = tuple(t if isinstance(t, QuantileTable) else QuantileTable.from_json(t) for t in self.tables)
            offs = tuple(float(v) for v in (self.offsets or (0.0,) * len(tabs)))
            if len(offs) != len(tabs):
                raise ValueError("one offset per quantile table")
            if any(not 0.0 <= v <= 1.0 for v in offs):
                raise ValueError("offsets must lie in [0, 1]")
            if self.m < 1:
                raise ValueError("quadrature count m must be positive")
            object.__setattr__(self, "tables", tabs)
            object.__setattr__(self, "offsets", offs)
        else:
            raise ValueError(f"unknown model mode {self.mode!r}")

    @classmethod
    def empty(cls) -> "DeterministicModel":
        return cls("empirical", ())

    @property
    def q(self) -> int:
        return len(self.matrices) if self.mode == "empirical" else len(self.tables)

    @property
    def dim(self) -> int | None:
        if self.mode == "empirical" and self.matrices:
            return self.matrices[0].shape[0]
        return None

    def is_diagonal(self) -> bool:
        if self.mode == "quantile":
            return True
        return all(np.count_nonzero(y - np.diag(np.diag(y))) == 0 for y in self.matrices)

    def atoms(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Joint values (n, q) and weights (n,) of the diagonal law, merged."""
        if self.q == 0:
            return np.zeros((1, 0)), np.ones(1)
        if self.mode == "quantile":
            u = (np.arange(1, self.m + 1) - 0.5) / self.m
            vals = np.stack([t.ppf(u + v) for t, v in zip(self.tables, self.offsets)], axis=1)
        elif self.is_diagonal():
            vals = np.stack([np.diag(y).real for y in self.matrices], axis=1)
        else:
            return None
        uniq, counts = np.unique(vals, axis=0, return_counts=True)
        return uniq, counts / counts.sum()

    def matrices_at(self, N: int) -> list[np.ndarray]:
        """Concrete Y_1..Y_q of size N."""
        if self.mode == "quantile":
            from .ensembles import quantile_diag
            return [quantile_diag(t, v, N) for t, v in zip(self.tables, self.offsets)]
        if self.q and self.dim != N:
            raise ValueError(f"empirical model has dim {self.dim}, requested N={N}")
        return list(self.matrices)

    def bound(self) -> float:
        if self.q == 0:
            return 0.0
        if self.mode == "quantile":
            return max(t.bound() for t in self.tables)
        return max(op_norm(y) for y in self.matrices)

    def to_json(self) -> dict:
        if self.mode == "quantile":
            return {"mode": "quantile", "tables": [t.to_json() for t in self.tables],
                    "offsets": list(self.offsets), "m": self.m}
        return {"mode": "empirical", "matrices": [matrix_to_json(y) for y in self.matrices]}


# ---------------------------------------------------------------- G_T

class MatrixStieltjes:
    """Gamma -> (id_k ⊗ tau)[(Gamma ⊗ 1 - T)^{-1}] with T = sum b_j ⊗ Y_j.

    Diagonal models are reduced to weighted atoms, so one evaluation costs a
    batch of k×k inversions. Non-diagonal empirical models use a dense kN
    solve.
    """

    def __init__(self, model: DeterministicModel, b=(), k: int | None = None):
        b = [hermitian(m, "b_j") for m in b]
        if len(b) != model.q:
            raise ValueError(f"model has q={model.q} matrices but {len(b)} b-coefficients given")
        if k is None:
            if not b:
                raise ValueError("k is required when q = 0")
            k = b[0].shape[0]
        self.k = k
        self.model = model
        self.b = b
        at = model.atoms()
        if at is not None:
            vals, self.weights = at
            T = np.zeros((len(self.weights), k, k), dtype=complex)
            for j, bj in enumerate(b):
                T += vals[:, j, None, None] * bj[None]
            self.atom_T = T
            self.dense_T = None
        else:
            self.atom_T = None
            self.dense_T = sum(np.kron(bj, y) for bj, y in zip(b, model.matrices))

    def __call__(self, gamma, check: bool = True) -> np.ndarray:
        gamma = np.asarray(gamma, dtype=complex)
        if check and not in_upper_half(gamma):
            raise ValueError("G_T evaluated outside the matrix upper half-plane")
        if self.atom_T is not None:
            R = np.linalg.inv(gamma[None] - self.atom_T)
            return np.einsum("i,iuv->uv", self.weights, R)
        return partial_trace(resolvent(gamma, self.dense_T, self.k, check=False), self.k)

    def with_jacobian(self, gamma, a=None) -> tuple[np.ndarray, np.ndarray]:
        """G_T(gamma) and D with vec(dG) = D vec(dGamma), row-major vec.

        With ``a`` given, D is composed with R_s: vec(dG) = D vec(dM) for
        dGamma = R_s(dM). Per atom this is a sum of Kronecker products, so
        the composition never forms a k²×k² product.
        """
        gamma = np.asarray(gamma, dtype=complex)
        k = self.k
        if self.atom_T is not None:
            R = np.linalg.inv(gamma[None] - self.atom_T)
            G = np.einsum("i,iuv->uv", self.weights, R)
            if a is None:
                D = -np.einsum("i,iua,ibv->uvab", self.weights, R, R)
            else:
                D = np.zeros((k, k, k, k), dtype=complex)
                for aj in a:
                    D -= np.einsum("i,iua,ibv->uvab", self.weights, R @ aj, aj @ R)
            return G, D.reshape(k * k, k * k)
        R = resolvent(gamma, self.dense_T, k, check=False)
        n = R.shape[0] // k
        R4 = R.reshape(k, n, k, n)
        G = np.einsum("umvm->uv", R4) / n
        D = -np.einsum("uman,bnvm->uvab", R4, R4) / n
        if a is not None:
            # D[(u,v),(a,b)] R_s[(a,b),(c,d)] with R_s = sum a_j ⊗ a_j^T
            D = sum(np.einsum("uvab,ac,db->uvcd", D, aj, aj) for aj in a)
        return G, D.reshape(k * k, k * k)


def eval_GT(model: DeterministicModel, b, gamma, k: int | None = None) -> np.ndarray:
    k = np.asarray(gamma).shape[0] if k is None else k
    return MatrixStieltjes(model, b, k)(gamma)


def R_s(a, M) -> np.ndarray:
    """sum_j a_j M a_j."""
    M = np.asarray(M, dtype=complex)
    out = np.zeros_like(M)
    for aj in a:
        out = out + aj @ M @ aj
    return out


def R_s_matrix(a, k: int) -> np.ndarray:
    """k²×k² matrix of R_s acting on row-major vec."""
    out = np.zeros((k * k, k * k), dtype=complex)
    for aj in a:
        out += np.kron(aj, aj.T)
    return out


# ---------------------------------------------------------------- density and support

def invert_density(g_values, clamp: bool = True) -> tuple[np.ndarray, float]:
    """rho = -Im g / pi, clamped at 0; also returns the pre-clamp minimum."""
    rho = -np.imag(np.asarray(g_values, dtype=complex)) / np.pi
    lo = float(rho.min()) if rho.size else 0.0
    return (np.maximum(rho, 0.0) if clamp else rho), lo


class EmptySupport(RuntimeError):
    pass


def _refine(fn, lo: float, hi: float, rising: bool, iters: int = 30) -> float:
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = fn(mid) > 0
        if above == rising:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def detect_support(t, rho, threshold: float, density_fn=None) -> list[tuple[float, float]]:
    """Maximal runs with rho > threshold, merged across gaps shorter than two
    grid steps. Endpoints are refined by bisection on rho - threshold when a
    density callable is given, by linear interpolation otherwise."""
    t = np.asarray(t, dtype=float)
    rho = np.asarray(rho, dtype=float)
    above = rho > threshold
    if not above.any():
        raise EmptySupport(f"density never exceeds threshold {threshold:g}")
    step = float(np.median(np.diff(t))) if t.size > 1 else 0.0
    idx = np.flatnonzero(above)
    runs = []
    start = prev = idx[0]
    for i in idx[1:]:
        if t[i] - t[prev] >= 2 * step + 1e-12 * max(1.0, abs(t[i])):
            runs.append((start, prev))
            start = i
        prev = i
    runs.append((start, prev))

    def f_lin(i0, i1):
        d0, d1 = rho[i0] - threshold, rho[i1] - threshold
        return t[i0] + (t[i1] - t[i0]) * d0 / (d0 - d1)

    out = []
    for i, j in runs:
        if i == 0:
            left = t[0]
        elif density_fn is not None:
            left = _refine(lambda s: density_fn(s) - threshold, t[i - 1], t[i], rising=True)
        else:
            left = f_lin(i - 1, i)
        if j == t.size - 1:
            right = t[-1]
        elif density_fn is not None:
            right = _refine(lambda s: density_fn(s) - threshold, t[j], t[j + 1], rising=False)
        else:
            right = f_lin(j, j + 1)
        out.append((float(left), float(right)))
    return out


def norm_estimate(support) -> float:
    if not support:
        raise EmptySupport("norm estimate needs a nonempty support")
    return float(max(max(abs(a), abs(b)) for a, b in support))


# ---------------------------------------------------------------- reports

@dataclass
class SpectralReport:
    grid: np.ndarray
    density: np.ndarray
    support: list
    norm_estimate: float
    eta_used: float
    g: np.ndarray
    residuals: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    threshold: float
    min_density_preclamp: float = 0.0

    @property
    def converged_fraction(self) -> float:
        return float(np.mean(self.converged)) if self.converged.size else 1.0

    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def cdf(self, normalize: bool = True) -> np.ndarray:
        """Cumulative trapezoid integral of the density on the grid."""
        c = np.concatenate([[0.0], np.cumsum(0.5 * (self.density[1:] + self.density[:-1]) * np.diff(self.grid))])
        if normalize and c[-1] > 0:
            c = c / c[-1]
        return c

    def to_json(self) -> dict:
        res = self.residuals
        return {
            "support": [[a, b] for a, b in self.support],
            "norm_estimate": None if math.isnan(self.norm_estimate) else self.norm_estimate,
            "eta": self.eta_used,
            "threshold": self.threshold,
            "mass": self.mass(),
            "grid_points": int(self.grid.size),
            "residual_stats": {
                "max": float(res.max()) if res.size else 0.0,
                "mean": float(res.mean()) if res.size else 0.0,
                "median": float(np.median(res)) if res.size else 0.0,
            },
            "iterations_total": int(self.iterations.sum()),
            "converged_fraction": self.converged_fraction,
            "unconverged_t": [float(x) for x in self.grid[~self.converged]],
            "min_density_preclamp": self.min_density_preclamp,
        }

    def write(self, out_dir, stem: str = "density") -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{stem}.csv"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "density"])
            for t, r in zip(self.grid, self.density):
                w.writerow([repr(float(t)), repr(float(r))])
        json_path = out / f"{stem}.json"
        json_path.write_text(json.dumps(self.to_json(), indent=2) + "\n")
        return csv_path, json_path
