"""Noncommutative polynomials and selfadjoint linearization.

Letters are strings: ``"x1"`` (GUE, selfadjoint), ``"y1"`` and ``"y1*"``
(deterministic and its adjoint). A word is a tuple of letters, the empty
tuple being the unit.

Text grammar::

    expr   := ['+'|'-'] term (('+'|'-') term)* ['+' 'h.c.']
    term   := factor ('*' factor)*
    factor := number | letter ['^' int] | letter '^*' | '(' expr ')' ['^' int]
    letter := 'x' int | 'y' int

Numbers accept a ``j`` suffix for imaginary parts. ``h.c.`` adds the adjoint
of everything before it, so ``2.5*x1*y1*x1 + h.c.`` is selfadjoint.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_matrix, hermitian, is_hermitian

Word = tuple[str, ...]

_LETTER = re.compile(r"^([xy])(\d+)(\*?)$")


def parse_letter(letter: str) -> tuple[str, int, bool]:
    m = _LETTER.match(letter)
    if not m or int(m.group(2)) < 1:
        raise ValueError(f"bad letter {letter!r}")
    return m.group(1), int(m.group(2)), bool(m.group(3))


def star_letter(letter: str) -> str:
    kind, j, st = parse_letter(letter)
    if kind == "x":
        return letter
    return f"y{j}" if st else f"y{j}*"


def _letter_key(letter: str) -> tuple[int, int]:
    kind, j, st = parse_letter(letter)
    return ({"x": 0, "y": 1}[kind] + int(st), j)


def word_key(w: Word) -> tuple:
    """Graded lexicographic order."""
    return (len(w), tuple(_letter_key(a) for a in w))


def word_adjoint(w: Word) -> Word:
    return tuple(star_letter(a) for a in reversed(w))


def word_str(w: Word) -> str:
    return "*".join(a if not a.endswith("*") else a[:-1] + "^*" for a in w) or "1"


@dataclass(frozen=True)
class NCPolynomial:
    p: int
    q: int
    terms: dict = field(default_factory=dict)  # Word -> complex

    def __post_init__(self):
        clean = {}
        for w, c in self.terms.items():
            w = tuple(w)
            for a in w:
                kind, j, _ = parse_letter(a)
                if j > (self.p if kind == "x" else self.q):
                    raise ValueError(f"letter {a} exceeds p={self.p}, q={self.q}")
            c = complex(c)
            if c != 0:
                clean[w] = clean.get(w, 0) + c
        object.__setattr__(self, "terms", {w: clean[w] for w in sorted(clean, key=word_key)})

    @classmethod
    def constant(cls, c, p: int = 0, q: int = 0) -> "NCPolynomial":
        return cls(p, q, {(): c})

    @classmethod
    def letter(cls, name: str, p: int = 0, q: int = 0) -> "NCPolynomial":
        kind, j, _ = parse_letter(name)
        if kind == "x":
            p = max(p, j)
        else:
            q = max(q, j)
        return cls(p, q, {(name,): 1.0})

    @classmethod
    def parse(cls, text: str, p: int | None = None, q: int | None = None) -> "NCPolynomial":
        return parse_polynomial(text, p, q)

    def widen(self, p: int, q: int) -> "NCPolynomial":
        return NCPolynomial(max(p, self.p), max(q, self.q), self.terms)

    def __add__(self, other):
        if not isinstance(other, NCPolynomial):
            other = NCPolynomial.constant(other)
        t = dict(self.terms)
        for w, c in other.terms.items():
            t[w] = t.get(w, 0) + c
        return NCPolynomial(max(self.p, other.p), max(self.q, other.q), t)

    __radd__ = __add__

    def __neg__(self):
        return NCPolynomial(self.p, self.q, {w: -c for w, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, NCPolynomial):
            return NCPolynomial(self.p, self.q, {w: c * other for w, c in self.terms.items()})
        t: dict = {}
        for w1, c1 in self.terms.items():
            for w2, c2 in other.terms.items():
                t[w1 + w2] = t.get(w1 + w2, 0) + c1 * c2
        return NCPolynomial(max(self.p, other.p), max(self.q, other.q), t)

    def __rmul__(self, other):
        return self * other

    def __pow__(self, n: int):
        out = NCPolynomial.constant(1.0, self.p, self.q)
        for _ in range(n):
            out = out * self
        return out

    def adjoint(self) -> "NCPolynomial":
        return NCPolynomial(self.p, self.q, {word_adjoint(w): np.conj(c) for w, c in self.terms.items()})

    def hermitian_reduction(self) -> "NCPolynomial":
        """Identify y_j* with y_j, as when the Y arguments are Hermitian."""
        t: dict = {}
        for w, c in self.terms.items():
            w2 = tuple(a.rstrip("*") for a in w)
            t[w2] = t.get(w2, 0) + c
        return NCPolynomial(self.p, self.q, t)

    def is_selfadjoint(self, hermitian_y: bool = False, tol: float = 1e-12) -> bool:
        P, A = self, self.adjoint()
        if hermitian_y:
            P, A = P.hermitian_reduction(), A.hermitian_reduction()
        words = set(P.terms) | set(A.terms)
        return all(abs(P.terms.get(w, 0) - A.terms.get(w, 0)) <= tol for w in words)

    @property
    def degree(self) -> int:
        return max((len(w) for w in self.terms), default=0)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for w, c in self.terms.items():
            cs = f"{c.real:g}" if c.imag == 0 else f"({c.real:g}{c.imag:+g}j)"
            parts.append(cs if not w else f"{cs}*{word_str(w)}")
        return " + ".join(parts)


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<hc>h\.c\.)|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?j?)"
    r"|(?P<letter>[xy]\d+)|(?P<op>\^\*|[-+*^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse polynomial near {text[pos:pos + 10]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, tokens):
        self.t = tokens
        self.i = 0

    def peek(self):
        return self.t[self.i] if self.i < len(self.t) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise ValueError(f"expected {value!r}, got {tok[1]!r}")
        self.i += 1
        return tok

    def expr(self) -> NCPolynomial:
        sign = 1.0
        if self.peek() in (("op", "+"), ("op", "-")):
            sign = -1.0 if self.take()[1] == "-" else 1.0
        acc = self.term() * sign
        while self.peek()[0] == "op" and self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            if self.peek()[0] == "hc":
                if op != "+":
                    raise ValueError("h.c. must be added")
                self.take()
                acc = acc + acc.adjoint()
                if self.peek()[0] == "op" and self.peek()[1] in ("+", "-"):
                    raise ValueError("h.c. must end the expression")
                continue
            t = self.term()
            acc = acc + t if op == "+" else acc - t
        return acc

    def term(self) -> NCPolynomial:
        acc = self.factor()
        while self.peek() == ("op", "*"):
            self.take()
            acc = acc * self.factor()
        return acc

    def factor(self) -> NCPolynomial:
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return NCPolynomial.constant(complex(val))
        if kind == "letter":
            self.take()
            base = NCPolynomial.letter(val)
        elif (kind, val) == ("op", "("):
            self.take()
            base = self.expr()
            self.take(")")
        else:
            raise ValueError("unexpected end of polynomial" if val is None else f"unexpected token {val!r}")
        if self.peek() == ("op", "^*"):
            self.take()
            return base.adjoint()
        if self.peek() == ("op", "^"):
            self.take()
            k, n = self.take()
            if k != "num" or not n.isdigit():
                raise ValueError("exponent must be a nonnegative integer")
            return base ** int(n)
        return base


def parse_polynomial(text: str, p: int | None = None, q: int | None = None) -> NCPolynomial:
    parser = _Parser(_tokenize(text))
    if not parser.t:
        raise ValueError("empty polynomial")
    P = parser.expr()
    if parser.i != len(parser.t):
        raise ValueError(f"trailing tokens in polynomial: {parser.t[parser.i:]}")
    return P.widen(p or 0, q or 0)


# ---------------------------------------------------------------- evaluation

def _common_dim(X, Y, n):
    dims = {np.shape(m)[0] for m in list(X) + list(Y)}
    if n is not None:
        dims.add(n)
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")
    return dims.pop()


def evaluate(P: NCPolynomial, X, Y=(), n: int | None = None) -> np.ndarray:
    """Word-by-word product and sum; ``n`` is only needed when P is constant."""
    X, Y = list(X), list(Y)
    if len(X) != P.p or len(Y) != P.q:
        raise ValueError(f"expected p={P.p}, q={P.q} arguments, got {len(X)}, {len(Y)}")
    N = _common_dim(X, Y, n)
    mats = {f"x{j + 1}": np.asarray(x, dtype=complex) for j, x in enumerate(X)}
    for j, y in enumerate(Y):
        y = np.asarray(y, dtype=complex)
        mats[f"y{j + 1}"] = y
        mats[f"y{j + 1}*"] = y.conj().T
    out = np.zeros((N, N), dtype=complex)
    prefix: dict = {}

    def product(w):
        if w not in prefix:
            prefix[w] = mats[w[0]] if len(w) == 1 else product(w[:-1]) @ mats[w[-1]]
        return prefix[w]

    for w, c in P.terms.items():
        out += c * (np.eye(N) if not w else product(w))
    return out


def substitute(P: NCPolynomial, x_subs, y_subs) -> NCPolynomial:
    """Replace x_j by x_subs[j] and y_j by y_subs[j] (y_j* by its adjoint)."""
    table = {}
    for j, s in enumerate(x_subs):
        table[f"x{j + 1}"] = s
    for j, s in enumerate(y_subs):
        table[f"y{j + 1}"] = s
        table[f"y{j + 1}*"] = s.adjoint()
    p = max([s.p for s in table.values()], default=0)
    q = max([s.q for s in table.values()], default=0)
    out = NCPolynomial(p, q, {})
    for w, c in P.terms.items():
        t = NCPolynomial.constant(c, p, q)
        for a in w:
            t = t * table[a]
        out = out + t
    return out.widen(p, q)


# ---------------------------------------------------------------- pencils

@dataclass(frozen=True)
class Pencil:
    """L = a0 ⊗ 1 + sum a_j ⊗ x_j + sum b_j ⊗ y_j with Hermitian k×k coefficients."""
    a0: np.ndarray
    a: tuple = ()
    b: tuple = ()

    def __post_init__(self):
        for m in (self.a0,) + tuple(self.a) + tuple(self.b):
            if not is_hermitian(as_matrix(m), 1e-10):
                raise ValueError("pencil coefficients must be Hermitian")
        a0 = hermitian(self.a0, "a0")
        k = a0.shape[0]
        a = tuple(hermitian(m, "a_j") for m in self.a)
        b = tuple(hermitian(m, "b_j") for m in self.b)
        for m in a + b:
            if m.shape != (k, k):
                raise ValueError("pencil coefficients must share dimension k")
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def k(self) -> int:
        return self.a0.shape[0]

    @property
    def p(self) -> int:
        return len(self.a)

    @property
    def q(self) -> int:
        return len(self.b)

    def sum_sq_norms(self) -> float:
        return float(sum(np.linalg.norm(m, 2) ** 2 for m in self.a))

    def to_json(self) -> dict:
        from .stieltjes import matrix_to_json
        return {"k": self.k, "a0": matrix_to_json(self.a0),
                "a": [matrix_to_json(m) for m in self.a], "b": [matrix_to_json(m) for m in self.b]}


def evaluate_pencil(L: Pencil, X, Y=(), n: int | None = None) -> np.ndarray:
    X, Y = list(X), list(Y)
    if len(X) != L.p or len(Y) != L.q:
        raise ValueError(f"expected p={L.p}, q={L.q} arguments, got {len(X)}, {len(Y)}")
    N = _common_dim(X, Y, n)
    out = np.kron(L.a0, np.eye(N))
    for c, m in zip(L.a + L.b, X + Y):
        out = out + np.kron(c, np.asarray(m, dtype=complex))
    return hermitian(out)


@dataclass(frozen=True)
class LinearizationCertificate:
    pencil: Pencil
    epsilon_pad: float = 1e-8
    corner_dim: int = 1

    def spectral_argument(self, lam: complex, eps: float | None = None) -> np.ndarray:
        """Lambda_eps(lam) = diag(lam, i eps, ..., i eps), with lam repeated
        over the corner block."""
        eps = self.epsilon_pad if eps is None else eps
        d = np.full(self.pencil.k, 1j * eps, dtype=complex)
        d[:self.corner_dim] = lam
        return np.diag(d)


class _PencilBuilder:
    def __init__(self, p: int, q: int, corner: int = 1):
        self.p, self.q = p, q
        self.entries: list = []  # (row, col, letter or None, coefficient)
        self.k = corner

    def new(self, n: int) -> list[int]:
        idx = list(range(self.k, self.k + n))
        self.k += n
        return idx

    def put(self, i, j, letter, c):
        self.entries.append((i, j, letter, c))
        if i != j:
            self.entries.append((j, i, letter, np.conj(c)))

    def build(self) -> Pencil:
        k = self.k
        a0 = np.zeros((k, k), dtype=complex)
        a = [np.zeros((k, k), dtype=complex) for _ in range(self.p)]
        b = [np.zeros((k, k), dtype=complex) for _ in range(self.q)]
        for i, j, letter, c in self.entries:
            if letter is None:
                a0[i, j] += c
            else:
                kind, idx, _ = parse_letter(letter)
                (a if kind == "x" else b)[idx - 1][i, j] += c
        return Pencil(a0, tuple(a), tuple(b))

    def chain(self, w: Word, c: complex, u: int = 0, v: int = 0):
        """Block whose Schur complement contributes c*w at corner entry (u, v)
        and conj(c)*adjoint(w) at (v, u)."""
        m = len(w)
        A = self.new(m - 1)
        B = self.new(m - 1)
        self.put(v, A[-1], w[-1], 1.0)
        self.put(u, B[0], w[0], c)
        for i in range(m - 1):
            self.put(A[i], B[i], None, -1.0)
        for i in range(m - 2):
            self.put(A[i], B[i + 1], w[i + 1], 1.0)

    def palindrome(self, w: Word, c: float, u: int = 0):
        """c * v m v* (odd length) or c * v v* (even length) for a selfadjoint
        word, using a symmetric chain [[0, Q], [Q*, F]] of size 2|v|."""
        r = len(w) // 2
        A = self.new(r)
        B = self.new(r)
        self.put(u, A[0], w[0], 1.0)
        for i in range(r):
            self.put(A[i], B[i], None, 1.0)
        for i in range(r - 1):
            self.put(A[i + 1], B[i], w[i + 1], -1.0)
        self.put(B[-1], B[-1], w[r] if len(w) % 2 else None, c)

    def square(self, letter: str, c: float, u: int = 0):
        """c * letter^2 via a single extra index."""
        (B,) = self.new(1)
        self.put(u, B, letter, np.sqrt(abs(c)))
        self.put(B, B, None, -np.sign(c))


def _add_diagonal(bld: _PencilBuilder, R: NCPolynomial, u: int):
    done: set = set()
    for w, c in R.terms.items():
        if w in done:
            continue
        wr = tuple(reversed(w))
        done.update((w, wr))
        if len(w) == 0:
            bld.put(u, u, None, c.real)
        elif len(w) == 1:
            bld.put(u, u, w[0], c.real)
        elif wr == w:
            if len(w) == 2:
                bld.square(w[0], c.real, u)
            else:
                bld.palindrome(w, c.real, u)
        else:
            bld.chain(w, c, u, u)


def linearize(P: NCPolynomial, epsilon_pad: float = 1e-8) -> LinearizationCertificate:
    """Selfadjoint Schur-complement linearization.

    The pencil acts on Hermitian y arguments, so y_j and y_j* are identified.
    The corner of (Lambda_eps ⊗ 1 - L)^{-1} tends to (lam - P)^{-1}.
    """
    if not P.is_selfadjoint(hermitian_y=True):
        raise ValueError("linearize requires a selfadjoint polynomial")
    R = P.hermitian_reduction()
    bld = _PencilBuilder(R.p, R.q)
    _add_diagonal(bld, R, 0)
    return LinearizationCertificate(bld.build(), epsilon_pad)


def linearize_block(P_grid, epsilon_pad: float = 1e-8) -> LinearizationCertificate:
    """Linearize the block matrix [P_uv] with an l×l corner.

    The grid must satisfy P_vu = P_uv* (with y letters Hermitian). The corner
    block of the resolvent tends to (lam - [P_uv])^{-1}.
    """
    l = len(P_grid)
    if l < 1 or any(len(row) != l for row in P_grid):
        raise ValueError("block grid must be square and nonempty")
    p = max(P.p for row in P_grid for P in row)
    q = max(P.q for row in P_grid for P in row)
    grid = [[P.widen(p, q).hermitian_reduction() for P in row] for row in P_grid]
    for u in range(l):
        for v in range(u, l):
            A, B = grid[u][v], grid[v][u].adjoint().hermitian_reduction()
            words = set(A.terms) | set(B.terms)
            if any(abs(A.terms.get(w, 0) - B.terms.get(w, 0)) > 1e-12 for w in words):
                raise ValueError(f"block grid is not adjoint-symmetric at ({u + 1}, {v + 1})")
    bld = _PencilBuilder(p, q, corner=l)
    for u in range(l):
        _add_diagonal(bld, grid[u][u], u)
        for v in range(u + 1, l):
            for w, c in grid[u][v].terms.items():
                if len(w) == 0:
                    bld.put(u, v, None, c)
                elif len(w) == 1:
                    bld.put(u, v, w[0], c)
                else:
                    bld.chain(w, c, u, v)
    return LinearizationCertificate(bld.build(), epsilon_pad, corner_dim=l)


def corner_extract(G, cert: LinearizationCertificate | None = None) -> complex:
    """Scalar transform from a k×k partial-trace value.

    The partial trace is already normalized per block, so the (1,1) entry is
    the scalar Stieltjes transform of P itself. For an l×l block corner it is
    the normalized trace of the corner block.
    """
    G = np.asarray(G)
    l = 1 if cert is None else cert.corner_dim
    return complex(np.trace(G[:l, :l]) / l)


def pencil_scalar(G, cert: LinearizationCertificate | None) -> complex:
    """Corner entry under the corner convention, tau_k(G) for plain pencils."""
    G = np.asarray(G)
    if cert is not None:
        return corner_extract(G, cert)
    return complex(np.trace(G) / G.shape[0])


def check_selfadjoint_coefficients(L: Pencil) -> bool:
    return all(is_hermitian(m) for m in (L.a0,) + L.a + L.b)
