"""Random and deterministic matrix models: GUE, rectangular Gaussians,
quantile diagonal matrices, non-white Wishart matrices and their square
embedding, block matrices and banded channel matrices."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import hermitian
from .pencil import NCPolynomial, evaluate, substitute
from .stieltjes import DeterministicModel, QuantileTable


@dataclass(frozen=True)
class RngSpec:
    """Counter-based (Philox) stream keyed by a seed and a stream path."""
    seed: int
    stream: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        s = self.stream if isinstance(self.stream, tuple) else (self.stream,)
        object.__setattr__(self, "stream", tuple(int(x) for x in s))

    def sub(self, *ids: int) -> "RngSpec":
        return RngSpec(self.seed, self.stream + tuple(ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(ss))


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngSpec):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngSpec or numpy Generator")


def sample_gue(N: int, rng) -> np.ndarray:
    """Diagonal N(0, 1/N); off-diagonal real and imaginary parts N(0, 1/(2N))."""
    if N < 1:
        raise ValueError("N must be positive")
    g = _gen(rng)
    a = g.standard_normal((N, N)) + 1j * g.standard_normal((N, N))
    x = (a + a.conj().T) / (2.0 * np.sqrt(N))
    return x


def sample_ginibre(rows: int, cols: int, variance: float, rng) -> np.ndarray:
    """iid complex entries with real and imaginary parts N(0, variance/2)."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    g = _gen(rng)
    s = np.sqrt(variance / 2.0)
    return s * (g.standard_normal((rows, cols)) + 1j * g.standard_normal((rows, cols)))


def quantile_values(F_inv, N: int) -> np.ndarray:
    """lambda_i = F^{-1}(i/N), i = 1..N (nondecreasing)."""
    u = np.arange(1, N + 1) / N
    f = F_inv.ppf if isinstance(F_inv, QuantileTable) else F_inv
    return np.asarray(f(u), dtype=float)


def quantile_diag(F_inv, v: float, N: int) -> np.ndarray:
    """diag(lambda_{1+floor(vN)}, ..., lambda_{N+floor(vN)}), indices mod N."""
    if not 0.0 <= v <= 1.0:
        raise ValueError("offset v must lie in [0, 1]")
    lam = quantile_values(F_inv, N)
    shift = int(np.floor(v * N))
    return np.diag(np.roll(lam, -shift)).astype(complex)


# ---------------------------------------------------------------- Wishart

@dataclass(frozen=True)
class WishartSpec:
    r: int
    s: tuple
    N: int
    z_models: tuple = ()  # per j: None (identity) or a one-matrix DeterministicModel

    def __post_init__(self):
        s = tuple(int(x) for x in self.s)
        if self.r < 1 or self.N < 1 or not s or min(s) < 1:
            raise ValueError("r, N and every s_j must be positive")
        z = tuple(self.z_models) or (None,) * len(s)
        if len(z) != len(s):
            raise ValueError("one Z model per Wishart matrix")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "z_models", z)

    @property
    def p(self) -> int:
        return len(self.s)

    @property
    def dim(self) -> int:
        return (self.r + sum(self.s)) * self.N

    def z_matrix(self, j: int) -> np.ndarray:
        n = self.s[j] * self.N
        m = self.z_models[j]
        if m is None:
            return np.eye(n, dtype=complex)
        Z = m.matrices_at(n)[0]
        if np.linalg.eigvalsh(Z)[0] <= 0:
            raise ValueError(f"Z_{j + 1} is not positive definite")
        return Z


@dataclass
class WishartEmbedding:
    spec: WishartSpec
    W: list            # M_j Z_j M_j*, size rN
    M: list            # rN × s_j N corners
    Z: list
    X_tilde: list      # (r+s)N GUE matrices
    e: list            # e_0, e_1, ..., e_p projections
    Z_tilde: list
    W_tilde: list = field(default_factory=list)

    def embed(self, Y) -> np.ndarray:
        """Y ⊕ 0 at the full dimension."""
        out = np.zeros((self.spec.dim, self.spec.dim), dtype=complex)
        n = self.spec.r * self.spec.N
        out[:n, :n] = Y
        return out


def _blocks(spec: WishartSpec) -> list[slice]:
    N = spec.N
    out = [slice(0, spec.r * N)]
    off = spec.r * N
    for sj in spec.s:
        out.append(slice(off, off + sj * N))
        off += sj * N
    return out


def build_wishart_embedding(spec: WishartSpec, rng) -> WishartEmbedding:
    """Sample the big GUE matrices first and read each M_j off a corner."""
    D = spec.dim
    s = sum(spec.s)
    scale = np.sqrt((spec.r + s) / spec.r)
    blocks = _blocks(spec)
    e = []
    for b in blocks:
        m = np.zeros((D, D), dtype=complex)
        m[b, b] = np.eye(b.stop - b.start)
        e.append(m)
    X_t, M, Z, Z_t, W, W_t = [], [], [], [], [], []
    for j in range(spec.p):
        x = sample_gue(D, rng.sub(j) if isinstance(rng, RngSpec) else _gen(rng))
        X_t.append(x)
        Mj = scale * x[blocks[0], blocks[j + 1]]
        Zj = spec.z_matrix(j)
        zt = np.zeros((D, D), dtype=complex)
        zt[blocks[j + 1], blocks[j + 1]] = Zj
        M.append(Mj)
        Z.append(Zj)
        Z_t.append(zt)
        W.append(hermitian(Mj @ Zj @ Mj.conj().T))
        Mt = scale * e[0] @ x @ e[j + 1]
        A = Mt @ zt + Mt.conj().T
        W_t.append(e[0] @ A @ A)
    assert all(w.shape == (spec.r * spec.N,) * 2 for w in W)
    return WishartEmbedding(spec, W, M, Z, X_t, e, Z_t, W_t)


def embedding_polynomial(P: NCPolynomial, spec: WishartSpec) -> NCPolynomial:
    """P~ over (x~_j, y~_i, z~_j, e_0..e_p) with e_0 P(P_1..P_p, y~) = P~.

    Letter layout of the result: x_j is x~_j; y_1..y_q are y~; y_{q+j} is
    z~_j; y_{q+p+1} is e_0 and y_{q+p+1+j} is e_j.
    """
    p, q = spec.p, P.q
    if P.p != p:
        raise ValueError(f"polynomial has p={P.p} Wishart letters, spec has {p}")
    qq = q + p + p + 1
    s = sum(spec.s)
    c = (spec.r + s) / spec.r

    def L(name):
        return NCPolynomial.letter(name, p, qq)

    e0 = L(f"y{q + p + 1}")
    subs = []
    for j in range(1, p + 1):
        xj, ej, zj = L(f"x{j}"), L(f"y{q + p + 1 + j}"), L(f"y{q + j}")
        inner = e0 * xj * ej * zj + ej * xj * e0
        subs.append(e0 * (inner * inner) * c)
    ys = [L(f"y{i}") for i in range(1, q + 1)]
    return (e0 * substitute(P, subs, ys)).widen(p, qq)


def projection_model(weights) -> DeterministicModel:
    """Diagonal projections onto consecutive blocks of relative sizes ``weights``.

    Block j is the indicator of [c_j, c_{j+1}) in the quantile variable, i.e.
    the atoms table {0, 1} shifted cyclically so that its top atom lands there.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w <= 0):
        raise ValueError("projection weights must be positive")
    w = w / w.sum()
    ends = np.cumsum(w)
    tables, offsets = [], []
    for wj, end in zip(w, ends):
        if wj >= 1.0 - 1e-15:
            tables.append(QuantileTable("atoms", {"values": [1.0], "probs": [1.0]}))
        else:
            tables.append(QuantileTable("atoms", {"values": [0.0, 1.0], "probs": [1.0 - wj, wj]}))
        offsets.append(float(min(max(1.0 - end, 0.0), 1.0)))
    return DeterministicModel("quantile", tables=tuple(tables), offsets=tuple(offsets))


def white_wishart_polynomial(P: NCPolynomial, r: int, s) -> NCPolynomial:
    """P~ for Z_j = I, with e_0 (e_0 X e_j + e_j X e_0)^2 reduced to e_0 X e_j X e_0.

    Letters: x_j is x~_j, y_1 is e_0 and y_{1+j} is e_j. P may not use y letters.
    """
    s = tuple(int(x) for x in s)
    p = len(s)
    if P.p != p or P.q != 0:
        raise ValueError("white Wishart embedding needs p = len(s) and no deterministic letters")
    c = (r + sum(s)) / r

    def L(name):
        return NCPolynomial.letter(name, p, p + 1)

    e0 = L("y1")
    subs = [e0 * L(f"x{j}") * L(f"y{j + 1}") * L(f"x{j}") * e0 * c for j in range(1, p + 1)]
    const = P.terms.get((), 0.0)
    rest = NCPolynomial(p, 0, {w: v for w, v in P.terms.items() if w})
    return substitute(rest, subs, []).widen(p, p + 1) + e0 * const


def channel_block_grid(spec: "ChannelSpec") -> list[list[NCPolynomial]]:
    """Block grid of H H* embedded in (r+t)N-dimensional GUE matrices.

    Tap l is sigma_l sqrt(r+t) e_0 x_l e_1 (identity C and D); block (b, b')
    is sum_l A_l A_{l+b-b'}*. Letters: x_l per tap, y_1 = e_0, y_2 = e_1.
    """
    if any(m is not None for m in spec.C + spec.D):
        raise ValueError("channel prediction supports identity C and D only")
    L, B = spec.L, spec.block_rows
    scale = spec.r + spec.t
    sig = np.sqrt(spec.sigma2)

    def letter(name):
        return NCPolynomial.letter(name, L, 2)

    e0, e1 = letter("y1"), letter("y2")
    grid = []
    for b in range(B):
        row = []
        for bb in range(B):
            P = NCPolynomial(L, 2, {})
            for l in range(L):
                m = l + b - bb
                if 0 <= m < L and sig[l] * sig[m] > 0:
                    P = P + e0 * letter(f"x{l + 1}") * e1 * letter(f"x{m + 1}") * e0 * (scale * sig[l] * sig[m])
            row.append(P)
        grid.append(row)
    return grid


def embedding_identity_check(P: NCPolynomial, spec: WishartSpec, rng, Y=None) -> float:
    """Relative Frobenius deviation between P(W, Y) ⊕ 0 and P~(X~, Y~, Z~, e)."""
    emb = build_wishart_embedding(spec, rng)
    n = spec.r * spec.N
    if Y is None:
        base = rng if isinstance(rng, RngSpec) else RngSpec(0)
        Y = [sample_ginibre(n, n, 1.0 / n, base.sub(1000 + i)) for i in range(P.q)]
    lhs = np.zeros((spec.dim, spec.dim), dtype=complex)
    lhs[:n, :n] = evaluate(P, emb.W, Y, n=n)
    Pt = embedding_polynomial(P, spec)
    rhs = evaluate(Pt, emb.X_tilde, [emb.embed(y) for y in Y] + emb.Z_tilde + emb.e, n=spec.dim)
    scale = max(np.linalg.norm(lhs), np.finfo(float).tiny)
    return float(np.linalg.norm(lhs - rhs) / scale)


# ---------------------------------------------------------------- block and channel matrices

def build_block(P_grid, X, Y=(), n: int | None = None, tol: float = 1e-12,
                hermitian_y: bool = False) -> np.ndarray:
    """Assemble the ℓN × ℓN matrix [P_uv(X, Y, Y*)].

    With ``hermitian_y`` the symmetry check identifies y_j with y_j*.
    """
    l = len(P_grid)
    if any(len(row) != l for row in P_grid):
        raise ValueError("block grid must be square")
    for u in range(l):
        for v in range(u, l):
            A, B = P_grid[u][v], P_grid[v][u].adjoint()
            if hermitian_y:
                A, B = A.hermitian_reduction(), B.hermitian_reduction()
            words = set(A.terms) | set(B.terms)
            if any(abs(A.terms.get(w, 0) - B.terms.get(w, 0)) > tol for w in words):
                raise ValueError(f"block grid is not adjoint-symmetric at ({u + 1}, {v + 1})")
    rows = [[evaluate(P_grid[u][v], X, Y, n=n) for v in range(l)] for u in range(l)]
    return hermitian(np.block(rows))


@dataclass(frozen=True)
class ChannelSpec:
    L: int
    r: int
    t: int
    sigma2: tuple
    N: int
    block_rows: int = 1
    C: tuple = ()      # per tap: None (identity) or one-matrix DeterministicModel at size rN
    D: tuple = ()      # per tap: None (identity) or one-matrix DeterministicModel at size tN

    def __post_init__(self):
        sig = tuple(float(x) for x in self.sigma2)
        if self.L < 1 or len(sig) != self.L or min(sig) < 0:
            raise ValueError("need L >= 1 and L nonnegative tap variances")
        if min(self.r, self.t, self.N, self.block_rows) < 1:
            raise ValueError("r, t, N and block_rows must be positive")
        C = tuple(self.C) or (None,) * self.L
        D = tuple(self.D) or (None,) * self.L
        if len(C) != self.L or len(D) != self.L:
            raise ValueError("one C and one D model per tap")
        object.__setattr__(self, "sigma2", sig)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)


def _model_matrix(m, n):
    return np.eye(n, dtype=complex) if m is None else m.matrices_at(n)[0]


def build_channel(spec: ChannelSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    """Block-Toeplitz banded H with taps A_l = C_l M_l D_l, and H H*."""
    base = rng if isinstance(rng, RngSpec) else None
    N, rN, tN = spec.N, spec.r * spec.N, spec.t * spec.N
    taps = []
    for l in range(spec.L):
        g = base.sub(l) if base is not None else _gen(rng)
        M = sample_ginibre(rN, tN, spec.sigma2[l] / N, g)
        taps.append(_model_matrix(spec.C[l], rN) @ M @ _model_matrix(spec.D[l], tN))
    B = spec.block_rows
    H = np.zeros((B * rN, (B + spec.L - 1) * tN), dtype=complex)
    for b in range(B):
        for l, A in enumerate(taps):
            c = b + l
            H[b * rN:(b + 1) * rN, c * tN:(c + 1) * tN] = A
    return H, hermitian(H @ H.conj().T)
