"""Normalized Wolfe certificates and exact minimisation of cut models over balls."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .onestep import Cut
from .projection import NNLSError, Unbounded, _gi_project0


class WolfeGapError(RuntimeError):
    """The bracket did not close; ``lower``/``upper`` bound the ball minimum."""

    def __init__(self, msg, lower, upper, witness=None):
        super().__init__(msg)
        self.lower, self.upper, self.witness = lower, upper, witness


@dataclass
class WolfeCertificate:
    center: np.ndarray
    iota: float
    nu: float
    points: list  # list[Cut], the center's own cut first
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "center": [float(v) for v in self.center],
            "iota": float(self.iota),
            "nu": float(self.nu),
            "points": [{"z": [float(v) for v in c.z], "fz": float(c.fz), "g": [float(v) for v in c.g]}
                       for c in self.points],
        }

    @classmethod
    def from_json(cls, d: dict) -> "WolfeCertificate":
        pts = [Cut(np.asarray(p["z"], dtype=float), float(p["fz"]), np.asarray(p["g"], dtype=float))
               for p in d["points"]]
        return cls(np.asarray(d["center"], dtype=float), float(d["iota"]), float(d["nu"]), pts)


def _stack(P):
    Z = np.array([c.z for c in P], dtype=float)
    F = np.array([c.fz for c in P], dtype=float)
    G = np.array([c.g for c in P], dtype=float)
    return Z, F, G


def psi(P, x) -> float:
    """Max over cuts of their linearisations at ``x``."""
    if not P:
        raise ValueError("P must be nonempty")
    Z, F, G = _stack(P)
    x = np.asarray(x, dtype=float)
    return float(np.max(F + np.einsum("ij,ij->i", G, x[None, :] - Z)))


@dataclass
class BallMin:
    """Certified bracket for min over B(center, radius) of a max-affine model."""

    lower: float
    upper: float
    witness: np.ndarray
    lam: np.ndarray
    psi_center: float
    iterations: int


def _model_at_center(P, center):
    Z, F, G = _stack(P)
    a = F + np.einsum("ij,ij->i", G, center[None, :] - Z)
    return a, G


def ball_min(P, center, radius: float, tol: Optional[float] = None, max_iter: int = 200) -> BallMin:
    """Minimise the cut model over a Euclidean ball, with a duality certificate.

    With ``a_i`` the cut values at the center and ``G`` the stacked
    subgradients, the minimum equals ``max over the simplex of
    a'lam - radius ||G'lam||``.  Any simplex point gives a lower bound and
    any ball point an upper bound.  The solver walks the level ``t`` upward
    from a valid lower bound: at each ``t`` it projects the origin onto
    ``{u : G u <= t - a}``; the projection multipliers give a dual point
    whose value is the Newton step for the convex decreasing map
    ``t -> dist(0, {G u <= t - a})`` toward the radius, and an empty set
    yields a Farkas ray, itself a dual point with ``G'lam = 0``.
    """
    center = np.asarray(center, dtype=float)
    if not radius > 0:
        raise ValueError("radius must be positive")
    a, G = _model_at_center(P, center)
    m = a.shape[0]
    gnorm = np.linalg.norm(G, axis=1)
    psi0 = float(np.max(a))
    if tol is None:
        tol = 1e-9 * (1.0 + abs(psi0))

    def dual_value(lam):
        return float(a @ lam - radius * np.linalg.norm(G.T @ lam))

    def model(u):
        return float(np.max(a + G @ u))

    # single-cut bounds
    single = a - radius * gnorm
    i0 = int(np.argmax(single))
    lo = float(single[i0])
    lam_best = np.zeros(m)
    lam_best[i0] = 1.0
    u_best = np.zeros_like(center)
    hi = psi0
    if gnorm[int(np.argmax(a))] > 0:
        j = int(np.argmax(a))
        u = -radius * G[j] / gnorm[j]
        v = model(u)
        if v < hi:
            hi, u_best = v, u

    def offer_upper(u):
        nonlocal hi, u_best
        nu = np.linalg.norm(u)
        if nu > radius:
            u = u * (radius / nu)
        v = model(u)
        if v < hi:
            hi, u_best = v, u

    def offer_lower(lam):
        nonlocal lo, lam_best
        s = lam.sum()
        if not s > 0:
            return -math.inf
        lam = lam / s
        v = dual_value(lam)
        if v > lo:
            lo, lam_best = v, lam
        return v

    scale = 1.0 + abs(psi0) + float(np.max(gnorm, initial=0.0)) * radius
    t = lo
    it = 0
    while hi - lo > tol and it < max_iter:
        it += 1
        try:
            u, mu = _gi_project0(G, t - a)
        except Unbounded as e:
            offer_lower(e.ray)
            _lp_vertex(a, G, e.ray, offer_lower, offer_upper)
            t = lo + 0.5 * (hi - lo)
            continue
        except NNLSError:
            t = 0.5 * (lo + hi)
            continue
        s = float(np.linalg.norm(u))
        if s <= radius * (1.0 + 1e-12):
            offer_upper(u)
            # t is at or above the optimum; lower it only through the dual
            if hi - lo <= tol:
                break
            t = 0.5 * (lo + min(t, hi)) if t > lo else lo + 0.5 * (hi - lo)
            continue
        offer_lower(mu)
        offer_upper(u)
        _exact_root(a, G, mu, radius, offer_lower, offer_upper)
        t = max(lo, t + 1e-15 * scale)
    if hi - lo > tol:
        raise WolfeGapError("ball minimisation did not close its bracket", lo, hi, center + u_best)
    return BallMin(lo, hi, center + u_best, lam_best, psi0, it)


def _exact_root(a, G, mu, radius, offer_lower, offer_upper):
    """Solve the ball problem exactly on the active rows of ``mu``."""
    S = np.flatnonzero(mu > 0)
    if S.size == 0:
        return
    GS = G[S]
    q = np.linalg.lstsq(GS, np.ones(S.size), rcond=None)[0]
    p = np.linalg.lstsq(GS, a[S], rcond=None)[0]
    # u(t) = t q - p solves G_S u = t - a_S when consistent
    A2 = float(q @ q)
    B2 = -2.0 * float(q @ p)
    C2 = float(p @ p) - radius * radius
    if A2 <= 0:
        return
    disc = B2 * B2 - 4 * A2 * C2
    if disc < 0:
        return
    for t in ((-B2 - math.sqrt(disc)) / (2 * A2), (-B2 + math.sqrt(disc)) / (2 * A2)):
        u = t * q - p
        if np.linalg.norm(GS @ u - (t - a[S])) > 1e-9 * (1 + abs(t) + np.max(np.abs(a[S]))):
            continue
        muS = -np.linalg.lstsq(GS.T, u, rcond=None)[0]
        if np.all(muS >= -1e-14 * max(np.max(np.abs(muS)), 1e-300)):
            lam = np.zeros(a.shape[0])
            lam[S] = np.maximum(muS, 0.0)
            offer_lower(lam)
            offer_upper(u)


def _lp_vertex(a, G, ray, offer_lower, offer_upper):
    """Solve the unconstrained model minimum on the support of a Farkas ray."""
    S = np.flatnonzero(ray > 0)
    if S.size == 0:
        return
    n = G.shape[1]
    K = np.hstack([G[S], -np.ones((S.size, 1))])
    sol = np.linalg.lstsq(K, -a[S], rcond=None)[0]
    offer_upper(sol[:n])
    M = np.vstack([G[S].T, np.ones((1, S.size))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    lamS = np.linalg.lstsq(M, rhs, rcond=None)[0]
    if np.all(lamS >= 0):
        lam = np.zeros(a.shape[0])
        lam[S] = lamS
        offer_lower(lam)


def wolfe_gap(P, y_bar, iota: float, tol: Optional[float] = None):
    """Normalised Wolfe gap V = (psi(y) - min over B(y, iota) of psi) / iota.

    Returns ``(V, x_witness, width)`` where ``V`` is the certified upper end
    of the bracket and ``width`` the bracket width in V units (at most
    ``tol / iota``).  The default ``tol`` is ``1e-9 (1 + |psi(y)|)``.
    """
    bm = ball_min(P, y_bar, iota, tol)
    V = max((bm.psi_center - bm.lower) / iota, 0.0)
    return V, bm.witness, (bm.upper - bm.lower) / iota


def gap_bound(iota: float, nu: float, mu: float) -> float:
    """QG bound on f(y) - f* implied by an (iota, nu) certificate."""
    return max(iota * nu, 2.0 * nu * nu / mu)


def transfer(cert: WolfeCertificate, y_tilde, level: float, f_ybar: float, f_ytilde: float,
             g_ytilde) -> WolfeCertificate:
    """Move a certificate from its center to a nearby point ``y_tilde``.

    ``meta['nu_proof_form']`` carries the alternative bound
    ``[f(y~) + (1+2c) f(y) - (2+2c) level] / iota~``.
    """
    if cert.iota <= 0:
        raise ValueError("certificate radius must be positive")
    y_tilde = np.asarray(y_tilde, dtype=float)
    c = float(np.linalg.norm(cert.center - y_tilde)) / cert.iota
    it = (1.0 + c) * cert.iota
    nu = (f_ytilde + c * f_ybar - (1.0 + 2.0 * c) * level) / it
    alt = (f_ytilde + (1.0 + 2.0 * c) * f_ybar - (2.0 + 2.0 * c) * level) / it
    pts = [Cut(y_tilde.copy(), float(f_ytilde), np.asarray(g_ytilde, dtype=float))] + list(cert.points)
    return WolfeCertificate(y_tilde.copy(), it, nu, pts, {"c": c, "nu_proof_form": alt})


@dataclass
class VerifyReport:
    valid: bool
    V_measured: float
    nu: float
    contained: bool
    width: float


def verify_certificate(cert: WolfeCertificate, tol: float = 1e-7) -> VerifyReport:
    """Containment of every point plus V <= nu + tol."""
    contained = all(np.linalg.norm(c.z - cert.center) <= cert.iota + 1e-9 * max(1.0, cert.iota)
                    for c in cert.points)
    if not cert.points or cert.iota <= 0:
        return VerifyReport(False, math.nan, cert.nu, contained, math.nan)
    V, _, width = wolfe_gap(cert.points, cert.center, cert.iota)
    return VerifyReport(bool(contained and V <= cert.nu + tol), V, cert.nu, contained, width)


def filter_ball(P, center, radius):
    """Cuts whose evaluation point lies in the closed ball."""
    center = np.asarray(center, dtype=float)
    return [c for c in P if np.linalg.norm(c.z - center) <= radius]
