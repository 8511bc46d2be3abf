"""Problem instances and first-order oracles.

Every oracle maps a point ``x`` to an :class:`OracleSample` carrying the
function value and one subgradient.  Instances are immutable once built.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class OracleSample:
    x: np.ndarray
    f: float
    g: np.ndarray
    active_index: Optional[int] = None


class FirstOrderOracle:
    """Base class: subclasses implement ``evaluate`` and set ``dim``."""

    dim: int

    def evaluate(self, x) -> OracleSample:
        raise NotImplementedError

    def __call__(self, x) -> OracleSample:
        return self.evaluate(x)

    def _check(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dim:
            raise DimensionError(f"expected dimension {self.dim}, got {x.shape[0]}")
        return x


class BudgetExceeded(RuntimeError):
    pass


class CountingOracle(FirstOrderOracle):
    """Wraps an oracle and counts evaluations.

    Several drivers may share one instance so that a single counter covers a
    whole restarted run.  With a ``budget``, the call that would exceed it
    raises :class:`BudgetExceeded` instead of evaluating.
    """

    def __init__(self, inner: FirstOrderOracle, budget: Optional[int] = None):
        self.inner = inner
        self.dim = inner.dim
        self.calls = 0
        self.budget = budget

    def evaluate(self, x):
        if self.budget is not None and self.calls >= self.budget:
            raise BudgetExceeded(f"oracle budget of {self.budget} calls exhausted")
        self.calls += 1
        return self.inner.evaluate(x)


def counting(o: FirstOrderOracle) -> CountingOracle:
    return o if isinstance(o, CountingOracle) else CountingOracle(o)


# ---------------------------------------------------------------- MAXQUAD


@dataclass(frozen=True)
class QuadPiece:
    A: np.ndarray
    b: np.ndarray
    c: float


@dataclass(frozen=True, eq=False)
class MaxQuadProblem(FirstOrderOracle):
    """max_i 0.5 x'A_i x + b_i'x + c_i with pieces stacked for fast evaluation."""

    A: np.ndarray  # (k, d, d)
    B: np.ndarray  # (k, d)
    c: np.ndarray  # (k,)
    mu: Optional[float] = None
    L: Optional[float] = None
    seed: Optional[int] = None
    shared_eigvecs: bool = False
    _flat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.ascontiguousarray(self.A, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError("A must have shape (k, d, d)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", np.ascontiguousarray(self.B, dtype=float).reshape(A.shape[0], A.shape[1]))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).reshape(A.shape[0]))
        object.__setattr__(self, "_flat", A.reshape(-1, A.shape[2]))

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def pieces(self) -> list[QuadPiece]:
        return [QuadPiece(self.A[i], self.B[i], float(self.c[i])) for i in range(self.k)]

    def piece_values(self, x) -> tuple[np.ndarray, np.ndarray]:
        """All piece values and the stacked products A_i x."""
        Ax = (self._flat @ x).reshape(self.k, self.d)
        vals = 0.5 * (Ax @ x) + self.B @ x + self.c
        return vals, Ax

    def evaluate(self, x) -> OracleSample:
        return eval_maxquad(self, x)


def eval_maxquad(p: MaxQuadProblem, x) -> OracleSample:
    x = p._check(x)
    vals, Ax = p.piece_values(x)
    i = int(np.argmax(vals))  # first maximiser wins ties
    return OracleSample(x, float(vals[i]), Ax[i] + p.B[i], i)


def _grid(d, mu, L):
    if d == 1:
        return np.array([float(mu)])
    return mu + np.arange(d) * (L - mu) / (d - 1)


def gen_maxquad(d: int, k: int, mu: float, L: float, seed: int = 0,
                shared_eigvecs: bool = False) -> MaxQuadProblem:
    """Random MAXQUAD instance with spectra on the arithmetic grid mu..L.

    Each piece draws from its own child stream of a Philox generator, so a
    piece does not depend on how many pieces follow it.  With
    ``shared_eigvecs`` a single orthonormal basis is drawn and every piece
    gets an independent random permutation of the eigenvalue grid.
    """
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    if not mu > 0:
        raise ValueError("mu must be positive")
    if L < mu:
        raise ValueError("L must be at least mu")
    d, k = int(d), int(k)
    root = np.random.SeedSequence(int(seed))
    basis_ss, *piece_ss = root.spawn(k + 1)
    lam = _grid(d, float(mu), float(L))

    def orth(rng):
        Q, R = np.linalg.qr(rng.standard_normal((d, d)))
        return Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))

    Qshared = orth(np.random.Generator(np.random.Philox(basis_ss))) if shared_eigvecs else None
    A = np.empty((k, d, d))
    B = np.empty((k, d))
    c = np.empty(k)
    for i, ss in enumerate(piece_ss):
        rng = np.random.Generator(np.random.Philox(ss))
        if shared_eigvecs:
            Q, ev = Qshared, rng.permutation(lam)
        else:
            Q, ev = orth(rng), lam
        Ai = (Q * ev) @ Q.T
        A[i] = 0.5 * (Ai + Ai.T)
        B[i] = rng.standard_normal(d)
        c[i] = rng.standard_normal()
    return MaxQuadProblem(A, B, c, mu=float(mu), L=float(L), seed=int(seed),
                          shared_eigvecs=bool(shared_eigvecs))


def maxquad_from_pieces(pieces) -> MaxQuadProblem:
    """Literal instance from a list of (A, b, c) triples or QuadPiece."""
    As, Bs, cs = [], [], []
    for pc in pieces:
        if isinstance(pc, QuadPiece):
            a, b, c = pc.A, pc.b, pc.c
        else:
            a, b, c = pc
        As.append(np.atleast_2d(np.asarray(a, dtype=float)))
        Bs.append(np.atleast_1d(np.asarray(b, dtype=float)))
        cs.append(float(c))
    return MaxQuadProblem(np.stack(As), np.stack(Bs), np.array(cs))


# ---------------------------------------------------------------- chain


def _tridiag_apply(V):
    """Apply tridiag(-1, 2, -1) along the last axis."""
    out = 2.0 * V
    out[..., 1:] -= V[..., :-1]
    out[..., :-1] -= V[..., 1:]
    return out


@dataclass(frozen=True)
class ChainMaxProblem(FirstOrderOracle):
    """Max over k blocks of the chain quadratic phi_{mu,L}."""

    k: int
    n: int
    mu: float
    L: float

    def __post_init__(self):
        if self.k < 1 or self.n < 1:
            raise ValueError("k and n must be positive")
        if not (self.L >= self.mu > 0):
            raise ValueError("need L >= mu > 0")

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.k * self.n

    @property
    def q(self) -> float:
        r = np.sqrt(self.L / self.mu)
        return (r - 1.0) / (r + 1.0)

    def block_values(self, x):
        V = np.asarray(x, dtype=float).reshape(self.k, self.n)
        AV = _tridiag_apply(V)
        h = (self.L - self.mu) / 4.0
        vals = 0.5 * self.mu * np.sum(V * V, axis=1) + 0.5 * h * np.sum(V * AV, axis=1) - h * V[:, 0]
        return vals, V, AV

    def evaluate(self, x) -> OracleSample:
        return eval_chain(self, x)


def eval_chain(p: ChainMaxProblem, x) -> OracleSample:
    x = p._check(x)
    vals, V, AV = p.block_values(x)
    j = int(np.argmax(vals))
    h = (p.L - p.mu) / 4.0
    g = np.zeros((p.k, p.n))
    g[j] = p.mu * V[j] + h * AV[j]
    g[j, 0] -= h
    return OracleSample(x, float(vals[j]), g.reshape(-1), j)


def chain_block_optimum(n: int, mu: float, L: float) -> np.ndarray:
    """Solve (mu I + h A) v = h e1 with h = (L - mu)/4 by a banded solve."""
    h = (L - mu) / 4.0
    ab = np.zeros((3, n))
    ab[0, 1:] = -h
    ab[1, :] = mu + 2.0 * h
    ab[2, :-1] = -h
    rhs = np.zeros(n)
    rhs[0] = h
    return solve_banded((1, 1), ab, rhs)


def chain_optimum(p: ChainMaxProblem) -> np.ndarray:
    """Exact finite-n minimiser: every block holds the same block optimum."""
    v = chain_block_optimum(p.n, p.mu, p.L)
    return np.tile(v, p.k)


# ---------------------------------------------------------------- toys


class _Toy(FirstOrderOracle):
    def __init__(self, name, dim, fn):
        self.name, self.dim, self._fn = name, dim, fn

    def evaluate(self, x):
        x = self._check(x)
        f, g, idx = self._fn(x)
        return OracleSample(x, float(f), np.asarray(g, dtype=float).reshape(-1), idx)

    def __repr__(self):
        return f"toy_problem({self.name!r})"


def _max_sq_lin(x):
    v = x[0]
    if v * v >= v:
        return v * v, [2 * v], 0
    return v, [1.0], 1


def _norm_plus_abs(x):
    s = 1.0 if x[0] >= 0 else -1.0
    return x @ x + abs(x[0]), 2 * x + np.array([s, 0.0]), None


def _exp_linear(i, M):
    def fn(x):
        v = x[0]
        if v <= -M:
            # clamped to the boundary, where 0 is a valid subgradient
            return np.exp(-M), [0.0], 1
        if v >= 0:
            return i * v + 1.0, [float(i)], 0
        ev = np.exp(v)
        return ev, [ev], 1
    return fn


def toy_problem(name: str, i: int | None = None, M: float | None = None) -> FirstOrderOracle:
    """Small piecewise-smooth test functions.

    ``max_sq_lin``: max{x^2, x} on R.  ``norm_plus_abs``: ||x||^2 + |x_1| on
    R^2.  ``exp_linear``: (i x + 1) for x >= 0 and e^x for x < 0, on
    [-M, inf); queries at or below -M are clamped to the boundary.
    """
    if name == "max_sq_lin":
        return _Toy(name, 1, _max_sq_lin)
    if name == "norm_plus_abs":
        return _Toy(name, 2, _norm_plus_abs)
    if name == "exp_linear":
        if i is None or M is None or i < 1 or not M > 0:
            raise ValueError("exp_linear needs i >= 1 and M > 0")
        return _Toy(f"exp_linear({i},{M})", 1, _exp_linear(int(i), float(M)))
    raise ValueError(f"unknown toy problem {name!r}")


class Quadratic(FirstOrderOracle):
    """f(x) = 0.5 (x - a)' H (x - a) + f0; handy smooth instance."""

    def __init__(self, H, a=None, f0=0.0):
        self.H = np.atleast_2d(np.asarray(H, dtype=float))
        self.dim = self.H.shape[0]
        self.a = np.zeros(self.dim) if a is None else np.asarray(a, dtype=float)
        self.f0 = float(f0)

    def evaluate(self, x):
        x = self._check(x)
        r = x - self.a
        Hr = self.H @ r
        return OracleSample(x, 0.5 * float(r @ Hr) + self.f0, Hr)


UNDEFINED = None
"""Returned by :func:`empirical_lipschitz` for a zero displacement."""


def empirical_lipschitz(o: FirstOrderOracle, x_k, x_next):
    """2[f(y) - f(x) - <g(x), y - x>] / ||y - x||^2, or ``UNDEFINED``."""
    x_k = np.asarray(x_k, dtype=float).reshape(-1)
    x_next = np.asarray(x_next, dtype=float).reshape(-1)
    s = x_next - x_k
    ss = float(s @ s)
    if ss == 0.0:
        return UNDEFINED
    a = o(x_k)
    b = o(x_next)
    return 2.0 * (b.f - a.f - float(a.g @ s)) / ss
