"""Reference optimal values with two-sided brackets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .certificate import WolfeGapError, ball_min
from .onestep import Cut
from .problems import FirstOrderOracle, MaxQuadProblem

CUT_CAP = 10_000
INTERIOR_MARGIN = 0.01


class BracketError(RuntimeError):
    """The solver stopped before closing its bracket."""

    def __init__(self, msg, lower, upper):
        super().__init__(f"{msg} (bracket [{lower!r}, {upper!r}])")
        self.lower, self.upper = lower, upper


@dataclass
class FStarResult:
    f_star: float
    x_star: np.ndarray
    gap: float
    radius_used: float
    cuts_used: int
    lower: float = -math.inf
    upper: float = math.inf


def kelley_fstar(o: FirstOrderOracle, x_init, tol: float = 1e-10, mu_lb: Optional[float] = None,
                 radius: Optional[float] = None, max_cuts: int = CUT_CAP) -> FStarResult:
    """Kelley's cutting-plane method over a growing ball around ``x_init``.

    The master problem (minimise the cut model over the ball) is solved with
    the exact ball dual of :func:`apexbl.certificate.ball_min`, which yields
    a valid lower bound whenever its minimiser is interior; the upper bound is
    the best evaluated value.  When the master minimiser sits within 1% of the
    boundary the radius is multiplied by four and the solve continues with
    the same cuts.  ``f_star`` reports the upper end of the bracket.
    """
    x0 = np.asarray(x_init, dtype=float)
    s = o(x0)
    cuts = [Cut.from_sample(s)]
    best_x, best_f = x0.copy(), float(s.f)
    if radius is None:
        gn = float(np.linalg.norm(s.g))
        if mu_lb is not None and mu_lb > 0:
            # f(x0) - f* <= |g|^2 / (2 mu) under quadratic growth
            radius = math.sqrt(2.0 * (gn * gn / (2.0 * mu_lb)) / mu_lb)
        else:
            radius = 10.0 * (1.0 + float(np.linalg.norm(x0)))
        radius = max(radius, 1e-8 * (1.0 + float(np.linalg.norm(x0))))
    R = float(radius)
    lower = -math.inf
    while True:
        if len(cuts) > max_cuts:
            raise BracketError("Kelley cut cap exceeded", lower, best_f)
        try:
            bm = ball_min(cuts, x0, R, tol=0.05 * tol, max_iter=40)
            lower, xq = bm.lower, bm.witness
        except WolfeGapError as e:
            # still a valid bound; the witness is a usable query point
            lower, xq = e.lower, e.witness
        if best_f - lower <= tol:
            if np.linalg.norm(best_x - x0) < (1.0 - INTERIOR_MARGIN) * R:
                break
            R *= 4.0
            continue
        s = o(xq)
        cuts.append(Cut.from_sample(s))
        if s.f < best_f:
            best_x, best_f = np.array(xq, dtype=float), float(s.f)
    return FStarResult(best_f, best_x, best_f - lower, R, len(cuts), lower, best_f)


def _maxquad_dual(p: MaxQuadProblem, lam):
    A = np.einsum("i,ijk->jk", lam, p.A)
    b = lam @ p.B
    x = -np.linalg.solve(A, b)
    q, _ = p.piece_values(x)
    return float(lam @ q), x, q


def maxquad_fstar(p: MaxQuadProblem, tol: float = 1e-10, max_iter: int = 200) -> FStarResult:
    """Optimal value of a strongly convex MAXQUAD through its simplex dual.

    For weights ``lam`` on the simplex, the Lagrangian minimiser
    ``x(lam)`` solves ``(sum lam_i A_i) x = -sum lam_i b_i`` and the dual
    value ``sum lam_i q_i(x(lam))`` bounds ``f*`` from below, while
    ``max_i q_i(x(lam)) = f(x(lam))`` bounds it from above.  The dual is
    maximised by a projected Newton iteration with the piece-value gradient;
    the returned ``gap`` is the certified bracket width.
    """
    k = p.k
    lam = np.full(k, 1.0 / k)
    D, x, q = _maxquad_dual(p, lam)
    best_lo, best_up, best_x = D, float(np.max(q)), x
    for _ in range(max_iter):
        if best_up - best_lo <= tol:
            break
        # Hessian of the dual: -J A(lam)^{-1} J' with J the piece gradients at x(lam)
        A = np.einsum("i,ijk->jk", lam, p.A)
        J = np.einsum("ijk,k->ij", p.A, x) + p.B
        H = J @ np.linalg.solve(A, J.T)
        lam = _simplex_newton(q, H, lam)
        D, x, q = _maxquad_dual(p, lam)
        if D > best_lo:
            best_lo = D
        fx = float(np.max(q))
        if fx < best_up:
            best_up, best_x = fx, x
    if best_up - best_lo > tol:
        raise BracketError("dual iteration did not close", best_lo, best_up)
    return FStarResult(best_up, best_x, best_up - best_lo, math.inf, 0, best_lo, best_up)


def _simplex_newton(q, H, lam, iters: int = 60):
    """Maximise the quadratic model q'(l - lam) - 1/2 (l - lam)'H(l - lam) on the simplex.

    Uses an active-set loop on the support; safeguards with a backtracking
    blend toward the current point are left to the caller's monotone
    bookkeeping.
    """
    k = lam.size
    H = 0.5 * (H + H.T) + 1e-14 * np.trace(H) / k * np.eye(k)
    c = q + H @ lam  # maximise c'l - 1/2 l'Hl on the simplex
    S = list(np.flatnonzero(lam > 0)) or [int(np.argmax(q))]
    for _ in range(iters):
        S_arr = np.array(sorted(S))
        n = S_arr.size
        K = np.zeros((n + 1, n + 1))
        K[:n, :n] = H[np.ix_(S_arr, S_arr)]
        K[:n, n] = 1.0
        K[n, :n] = 1.0
        rhs = np.concatenate([c[S_arr], [1.0]])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        lS, nu = sol[:n], sol[n]
        if np.any(lS < 0):
            # step from the current feasible point toward lS, dropping the blocking index
            cur = lam[S_arr]
            d = lS - cur
            neg = d < 0
            ratios = np.where(neg, cur / np.where(neg, -d, 1.0), np.inf)
            j = int(np.argmin(ratios))
            step = min(1.0, float(ratios[j]))
            new = np.zeros(k)
            new[S_arr] = np.maximum(cur + step * d, 0.0)
            new[S_arr[j]] = 0.0
            lam = new / new.sum()
            S.remove(int(S_arr[j]))
            continue
        new = np.zeros(k)
        new[S_arr] = lS
        grad = c - H @ new
        out = [i for i in range(k) if i not in S and grad[i] > nu + 1e-15 * (1 + abs(nu))]
        lam = new
        if not out:
            return lam
        S.append(max(out, key=lambda i: grad[i]))
    return lam
