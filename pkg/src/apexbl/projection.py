"""Euclidean projection onto an intersection of halfspaces through its dual.

For ``min 0.5||x - y||^2  s.t.  Ax <= b`` the dual is the nonnegative QP
``min_{lam >= 0} 0.5 lam'AA'lam + lam'(b - Ay)`` and ``x = y - A'lam``.
When ``b = A b_t`` is solvable the dual collapses to the NNLS problem
``min ||A'lam - (y - b_t)||``; otherwise an active-set NQP solver is used,
which can also return a ray proving the primal empty.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.linalg import lstsq

_EPS = np.finfo(float).eps

DEBUG = bool(os.environ.get("APEXBL_DEBUG"))
"""When true, every Optimal projection re-checks its KKT conditions."""


class NNLSError(RuntimeError):
    """Active-set iteration did not settle; ``best`` holds the best iterate."""

    def __init__(self, msg, best):
        super().__init__(msg)
        self.best = best


class Unbounded(Exception):
    """Dual NQP is unbounded below along ``ray`` (ray >= 0, Q ray = 0, c'ray < 0)."""

    def __init__(self, ray):
        super().__init__("nonnegative QP is unbounded")
        self.ray = ray


class Status(str, Enum):
    Optimal = "Optimal"
    Infeasible = "Infeasible"


@dataclass
class HalfspaceSystem:
    A: np.ndarray
    b: np.ndarray
    tags: list = field(default_factory=list)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.shape[0] or self.A.shape[0] < 1:
            raise ValueError("A and b must have the same positive number of rows")
        if not self.tags:
            self.tags = list(range(self.A.shape[0]))


@dataclass(frozen=True)
class Tolerances:
    feas: float = 1e-9
    kkt: float = 1e-10
    consistency: float = 1e-10


DEFAULT_TOLS = Tolerances()


@dataclass
class ProjectionResult:
    x_star: Optional[np.ndarray]
    lambda_star: Optional[np.ndarray]
    primal_violation: float
    kkt_residual: float
    status: Status
    ray: Optional[np.ndarray] = None
    passive: Optional[np.ndarray] = None


def _ls(M, v):
    """Minimum-norm least squares via pivoted QR (the rank guard)."""
    if M.shape[1] == 0:
        return np.zeros(0)
    sol = lstsq(M, v, cond=None, lapack_driver="gelsy", check_finite=False)[0]
    return sol


def nnls(M, v, tol: float = 1e-12, passive=None, return_passive: bool = False):
    """Lawson-Hanson NNLS: minimise ||M lam - v|| subject to lam >= 0.

    ``passive`` optionally seeds the passive set; the seed is used only if
    its unconstrained solution is strictly positive.  A column whose entry
    comes back nonpositive right after entering is treated as numerically
    dependent and is skipped until the iterate moves again.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    v = np.asarray(v, dtype=float).reshape(-1)
    ncol = M.shape[1]
    if ncol < 1:
        raise ValueError("M needs at least one column")
    if not tol > 0:
        raise ValueError("tol must be positive")
    colnorm = np.linalg.norm(M, axis=0)
    scale = colnorm * max(np.linalg.norm(v), 1e-300)
    thresh = tol * np.maximum(scale, 1e-300)

    lam = np.zeros(ncol)
    P = np.zeros(ncol, dtype=bool)
    if passive is not None:
        P0 = np.zeros(ncol, dtype=bool)
        P0[np.asarray(passive, dtype=int)] = True
        P0 &= colnorm > 0
        if P0.any():
            z = _ls(M[:, P0], v)
            if np.all(z > 0):
                P, lam[P0] = P0, z

    max_changes = 10 * ncol
    changes = 0
    blocked = np.zeros(ncol, dtype=bool)
    best = lam.copy()
    while True:
        r = v - M @ lam
        w = M.T @ r
        cand = ~P & ~blocked & (w > thresh)
        if not cand.any():
            break
        j = int(np.argmax(np.where(cand, w, -np.inf)))
        P[j] = True
        changes += 1
        first = True
        while True:
            idx = np.flatnonzero(P)
            z = _ls(M[:, idx], v)
            if first and z[np.searchsorted(idx, j)] <= 0:
                # entering column adds nothing numerically: rank guard
                P[j] = False
                blocked[j] = True
                break
            first = False
            if np.all(z > 0):
                lam[:] = 0.0
                lam[idx] = z
                blocked[:] = False
                break
            neg = np.flatnonzero(z <= 0)
            li = lam[idx]
            ratios = li[neg] / (li[neg] - z[neg])
            alpha = np.min(ratios)
            li = li + alpha * (z - li)
            lam[:] = 0.0
            lam[idx] = li
            dropmask = li <= _EPS * np.max(np.abs(li), initial=1.0)
            dropmask[neg[np.argmin(ratios)]] = True
            drop = idx[dropmask]
            P[drop] = False
            lam[drop] = 0.0
            changes += 1
            if not P.any():
                blocked[:] = False
                break
        best = lam.copy()
        if changes > max_changes:
            raise NNLSError("Lawson-Hanson exceeded its active-set change budget", best)
    lam = np.maximum(lam, 0.0)
    if return_passive:
        return lam, np.flatnonzero(lam > 0)
    return lam


def _gi_project0(G, c, tol: float = 1e-13, max_iter: int | None = None):
    """Project the origin onto {u : G u <= c} by the Goldfarb-Idnani dual method.

    Returns ``(u, lam)`` with ``u = -G'lam`` and ``lam >= 0`` solving the
    nonnegative QP ``min 0.5||G'lam||^2 + c'lam``.  Working rows stay
    linearly independent, so a singular ``G G'`` is harmless.  If a violated
    row is a nonpositive combination of working rows the set is empty and
    :class:`Unbounded` carries the Farkas ray.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    c = np.asarray(c, dtype=float).reshape(-1)
    m, n = G.shape
    rownorm = np.linalg.norm(G, axis=1)
    gscale = max(np.max(rownorm, initial=0.0), 1e-300)
    u = np.zeros(n)
    W: list[int] = []
    lamW = np.zeros(0)
    lam_all = np.zeros(m)
    if max_iter is None:
        max_iter = 20 * (m + n) + 50
    it = 0
    while True:
        s_all = G @ u - c
        thresh = tol * (rownorm * max(np.linalg.norm(u), 1.0) + np.abs(c) + gscale)
        viol = s_all - thresh
        if W:
            viol[W] = -np.inf
        j = int(np.argmax(viol))
        if not viol[j] > 0:
            break
        aj = G[j]
        lj = 0.0
        while True:
            it += 1
            if it > max_iter:
                lam_all[:] = 0.0
                lam_all[W] = lamW
                raise NNLSError("Goldfarb-Idnani iteration cap reached", lam_all.copy())
            if W:
                N = G[W]
                r = _ls(N.T, aj)
                z = aj - N.T @ r
            else:
                r = np.zeros(0)
                z = aj.copy()
            zz = float(z @ z)
            sj = float(aj @ u - c[j])
            # n working rows already span the space, whatever roundoff leaves in z
            dependent = len(W) >= n or zz <= (1e-11 * rownorm[j]) ** 2
            pos = np.flatnonzero(r > 1e-14 * max(np.max(np.abs(r), initial=0.0), 1.0))
            t_dual = np.inf
            k = -1
            if pos.size:
                ratios = lamW[pos] / r[pos]
                k = int(pos[np.argmin(ratios)])
                t_dual = float(np.min(ratios))
            if dependent:
                if k < 0:
                    ray = np.zeros(m)
                    ray[j] = 1.0
                    if W:
                        ray[W] = np.maximum(-r, 0.0)
                    raise Unbounded(ray)
                t = t_dual
            else:
                t_primal = max(sj, 0.0) / zz
                t = min(t_primal, t_dual)
                u = u - t * z
            lamW = lamW - t * r
            lj += t
            if not dependent and t_primal <= t_dual:
                W.append(j)
                lamW = np.append(lamW, lj)
                break
            # drop the blocking working row and retry the same violated row
            del W[k]
            lamW = np.delete(lamW, k)
            if dependent:
                continue
    lam_all[:] = 0.0
    if W:
        lam_all[W] = np.maximum(lamW, 0.0)
    return u, lam_all


def _nqp_factored(G, c, tol: float = 1e-13):
    """min over lam >= 0 of 0.5||G'lam||^2 + c'lam (Q = G G' never formed)."""
    return _gi_project0(G, c, tol)[1]


def nqp(Q, c, tol: float = 1e-12):
    """Minimise 0.5 lam'Q lam + c'lam over lam >= 0 for symmetric psd Q.

    Q is factored as G G' from its eigendecomposition and handed to the
    shared active-set core.  Raises :class:`Unbounded` on a descent ray.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    c = np.asarray(c, dtype=float).reshape(-1)
    asym = np.max(np.abs(Q - Q.T), initial=0.0)
    if asym > 1e-10 * max(1.0, np.max(np.abs(Q), initial=0.0)):
        raise ValueError("Q must be symmetric")
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    if w.size and w[0] < -1e-10 * max(1.0, abs(w[-1])):
        raise ValueError("Q must be positive semidefinite")
    keep = w > max(abs(w[-1]) if w.size else 0.0, 1e-300) * Q.shape[0] * _EPS
    G = V[:, keep] * np.sqrt(w[keep])
    if G.shape[1] == 0:
        G = np.zeros((Q.shape[0], 1))
    return _nqp_factored(G, c, tol)


def _kkt(x, lam, A, b, ybar):
    slack = A @ x - b
    viol = float(np.max(np.maximum(slack, 0.0), initial=0.0))
    stat = np.max(np.abs(x - ybar + A.T @ lam), initial=0.0)
    comp = np.max(np.abs(lam * slack) / (1.0 + np.abs(b)), initial=0.0)
    return viol, float(max(stat / (1.0 + np.max(np.abs(ybar), initial=0.0)), comp))


def project(y_bar, sys: HalfspaceSystem, tols: Tolerances = DEFAULT_TOLS, passive=None) -> ProjectionResult:
    """Project ``y_bar`` onto {x : A x <= b}.

    ``passive`` is an optional warm-start guess of the active rows.
    The KKT residual reported is the larger of the stationarity error
    relative to ``1 + ||y_bar||_inf`` and the complementarity products
    relative to ``1 + |b_i|``.
    """
    y_bar = np.asarray(y_bar, dtype=float).reshape(-1)
    A, b = sys.A, sys.b
    if A.shape[1] != y_bar.shape[0]:
        raise ValueError("dimension mismatch between y_bar and the system")
    m = A.shape[0]
    bscale = 1.0 + np.max(np.abs(b), initial=0.0)

    zero = np.linalg.norm(A, axis=1) == 0.0
    if np.any(zero & (b < -tols.feas * bscale)):
        ray = np.zeros(m)
        ray[np.flatnonzero(zero & (b < 0))[0]] = 1.0
        return ProjectionResult(None, None, float(np.inf), float(np.inf), Status.Infeasible, ray=ray)
    rows = np.flatnonzero(~zero)
    lam = np.zeros(m)
    if rows.size == 0:
        x = y_bar.copy()
        return ProjectionResult(x, lam, 0.0, 0.0, Status.Optimal, passive=np.zeros(0, dtype=int))
    Ar, br = A[rows], b[rows]

    bt = _ls(Ar, br)
    consistent = np.linalg.norm(Ar @ bt - br) <= tols.consistency * (1.0 + np.linalg.norm(br))
    if consistent:
        wp = None
        if passive is not None:
            pos = {r: i for i, r in enumerate(rows)}
            wp = [pos[p] for p in passive if p in pos]
        lr = nnls(Ar.T, y_bar - bt, tol=1e-13, passive=wp)
    else:
        try:
            lr = _nqp_factored(Ar, br - Ar @ y_bar, tol=1e-13)
        except Unbounded as e:
            ray = np.zeros(m)
            ray[rows] = e.ray
            return ProjectionResult(None, None, float(np.inf), float(np.inf), Status.Infeasible, ray=ray)
    lam[rows] = lr
    x = y_bar - A.T @ lam
    viol, kkt = _kkt(x, lam, A, b, y_bar)
    status = Status.Optimal if viol <= tols.feas * bscale else Status.Infeasible
    res = ProjectionResult(x, lam, viol, kkt, status, passive=np.flatnonzero(lam > 0))
    if DEBUG and status is Status.Optimal:
        assert kkt <= max(tols.kkt, 1e-8), f"projection KKT residual {kkt:.3e}"
    return res
