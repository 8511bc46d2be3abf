"""The m-inner-step bundle routine shared by every accelerated driver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .problems import FirstOrderOracle, OracleSample
from .projection import DEFAULT_TOLS, HalfspaceSystem, Status, Tolerances, project

ZERO_DIST = 1e-14


@dataclass(frozen=True)
class Cut:
    """Linearisation fz + <g, x - z>, stored by its evaluation point."""

    z: np.ndarray
    fz: float
    g: np.ndarray

    @classmethod
    def from_sample(cls, s: OracleSample) -> "Cut":
        return cls(np.array(s.x, dtype=float), float(s.f), np.array(s.g, dtype=float))

    def value(self, x) -> float:
        return self.fz + float(self.g @ (np.asarray(x, dtype=float) - self.z))

    def row(self, level: float) -> tuple[np.ndarray, float]:
        """The halfspace g'x <= level - fz + g'z."""
        return self.g, level - self.fz + float(self.g @ self.z)


class CutOption(str, Enum):
    OptionI = "I"
    OptionII = "II"


@dataclass
class Carry:
    """Previous outer iteration's cuts and anchor, for Option II."""

    cuts: list
    anchor: Optional[tuple]  # (normal, rhs) or None


@dataclass
class OneStepOutput:
    x_hat_t: np.ndarray
    fhat_t: float
    x_next0: np.ndarray
    flag: bool
    P: list  # cuts at the x_under points of this call (the y_bar cut is owned by the caller)
    L_t: Optional[float]
    pair_dist: Optional[float]
    inner_iterates: list
    pair: Optional[tuple] = None
    numerator: float = 0.0
    oracle_calls: int = 0
    carry: Optional[Carry] = None
    xbar: list = field(default_factory=list)  # (x_bar, f(x_bar)) when recorded
    max_violation: float = 0.0
    hat_sample: Optional[OracleSample] = None  # oracle sample at x_hat_t if it changed


def anchor_row(x_t0, y_bar):
    """<x - x0, x0 - y> >= 0 written as -(x0 - y)'x <= -(x0 - y)'x0, or None."""
    d = np.asarray(x_t0) - np.asarray(y_bar)
    if not np.any(d):
        return None
    return -d, -float(d @ x_t0)


def one_step(o: FirstOrderOracle, y_bar, x_hat_prev, x_t0, level: float, m: int,
             alpha_t: float, f_hat_prev: float, carry: Optional[Carry] = None,
             option: CutOption = CutOption.OptionI, tols: Tolerances = DEFAULT_TOLS,
             record_pairs: bool = False) -> OneStepOutput:
    """Run one outer iteration of ``m`` cut-and-project inner steps.

    Every oracle call goes through ``o``; wrap it in a counting oracle to
    meter calls.  The returned ``P`` holds the cuts at the interpolated
    points, including the cut that made the last subproblem empty when
    ``flag`` is raised.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if not 0.0 < alpha_t <= 1.0:
        raise ValueError("alpha_t must lie in (0, 1]")
    y_bar = np.asarray(y_bar, dtype=float)
    x_hat_prev = np.asarray(x_hat_prev, dtype=float)
    x0 = np.asarray(x_t0, dtype=float)

    base_rows, base_rhs = [], []
    anc = anchor_row(x0, y_bar)
    if anc is not None:
        base_rows.append(anc[0])
        base_rhs.append(anc[1])
    if option == CutOption.OptionII and carry is not None:
        for c in carry.cuts:
            g, r = c.row(level)
            base_rows.append(g)
            base_rhs.append(r)
        if carry.anchor is not None:
            base_rows.append(carry.anchor[0])
            base_rhs.append(carry.anchor[1])

    cuts: list[Cut] = []
    iterates = [x0]
    x_hat, f_hat = x_hat_prev, float(f_hat_prev)
    hat_sample = None
    flag = False
    calls = 0
    passive = None
    rows = list(base_rows)
    rhs = list(base_rhs)
    max_viol = 0.0
    xbar_rec = []
    for _ in range(m):
        x_under = (1.0 - alpha_t) * x_hat_prev + alpha_t * iterates[-1]
        s = o(x_under)
        calls += 1
        cut = Cut.from_sample(s)
        cuts.append(cut)
        g, r = cut.row(level)
        rows.append(g)
        rhs.append(r)
        res = project(y_bar, HalfspaceSystem(np.array(rows), np.array(rhs)), tols, passive=passive)
        if res.status is Status.Infeasible:
            flag = True
            break
        passive = res.passive
        max_viol = max(max_viol, res.primal_violation)
        x_i = res.x_star
        iterates.append(x_i)
        x_bar = (1.0 - alpha_t) * x_hat_prev + alpha_t * x_i
        sb = o(x_bar)
        calls += 1
        if record_pairs:
            xbar_rec.append((x_bar, float(sb.f)))
        if sb.f < f_hat:
            x_hat, f_hat, hat_sample = x_bar, float(sb.f), sb

    num = (f_hat - level) - (1.0 - 0.75 * alpha_t) * (f_hat_prev - level)
    L_t, dist, pair = _best_pair(iterates, num, alpha_t)

    new_carry = None
    if option == CutOption.OptionII:
        new_carry = Carry(cuts=[c for c in cuts], anchor=anc)
    return OneStepOutput(
        x_hat_t=x_hat, fhat_t=f_hat, x_next0=iterates[-1], flag=flag, P=cuts,
        L_t=L_t, pair_dist=dist, inner_iterates=iterates, pair=pair, numerator=num,
        oracle_calls=calls, carry=new_carry, xbar=xbar_rec, max_violation=max_viol,
        hat_sample=hat_sample,
    )


def _best_pair(iterates, num, alpha):
    """argmin over 0 <= l < r of L_t(r, l); the numerator is pair independent."""
    X = np.asarray(iterates)
    if len(X) < 2:
        return None, None, None
    sq = np.sum(X * X, axis=1)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    scale = max(1.0, float(np.max(np.abs(X))))
    # direct differences for the candidates keep the result exact
    best = None
    l_idx, r_idx = np.triu_indices(len(X), k=1)
    order = np.argsort(D2[l_idx, r_idx])
    if num > 0:
        order = order[::-1]
    for q in order:
        l, r = int(l_idx[q]), int(r_idx[q])
        d = float(np.linalg.norm(X[r] - X[l]))
        if d <= ZERO_DIST * scale:
            continue
        best = (l, r, d)
        break
    if best is None:
        return None, None, None
    l, r, d = best
    return num / (0.5 * alpha * alpha * d * d), d, (r, l)


# ---------------------------------------------------------------- L-bar


class _Kahan:
    __slots__ = ("s", "c")

    def __init__(self):
        self.s = 0.0
        self.c = 0.0

    def add(self, v: float):
        y = v - self.c
        t = self.s + y
        self.c = (t - self.s) - y
        self.s = t


class LbarAccumulator:
    """Running L-bar: sum over event iterations of w a^2 L d^2 / 2, over sum of d^2."""

    def __init__(self):
        self._num = _Kahan()
        self._den = _Kahan()
        self.history: list[tuple] = []

    def update(self, alpha_t, omega_t, L_t, pair_dist, event_t) -> float:
        return lbar_update(self, alpha_t, omega_t, L_t, pair_dist, event_t)

    @property
    def numerator(self) -> float:
        return self._num.s

    @property
    def denominator(self) -> float:
        return self._den.s

    @property
    def value(self) -> float:
        if self._den.s == 0.0:
            return 0.0
        return self._num.s / self._den.s


def lbar_update(state: LbarAccumulator, alpha_t, omega_t, L_t, pair_dist, event_t) -> float:
    state.history.append((alpha_t, omega_t, L_t, pair_dist, bool(event_t)))
    if event_t and L_t is not None and pair_dist:
        d2 = pair_dist * pair_dist
        state._num.add(omega_t * alpha_t * alpha_t * L_t * d2 / 2.0)
        state._den.add(d2)
    return state.value


def event(f_hat_t, f_hat_prev, level, alpha_t) -> bool:
    return (f_hat_t - level) > (1.0 - alpha_t / 2.0) * (f_hat_prev - level)


def alpha(t: int) -> float:
    return 4.0 / (t + 3.0)


def omega(t: int) -> float:
    return (t + 2.0) * (t + 3.0) / 2.0


# ---------------------------------------------------------------- diagnostic


@dataclass
class LtildeWindow:
    """Data of one outer iteration needed by :func:`ltilde_diagnostic`.

    ``pairs`` holds, for each 0 <= l < r, the tuple
    (f(x_bar^{t,r}), f(x_under^{t,l+1}), <g(x_under^{t,l+1}), x_bar^{t,r} - x_under^{t,l+1}>,
    ||x_bar^{t,r} - x_under^{t,l+1}||^2).
    """

    alpha_t: float
    omega_t: float
    f_hat_prev: float
    level: float
    event_t: bool
    pairs: list = field(default_factory=list)


def window_from(out: OneStepOutput, alpha_t, omega_t, f_hat_prev, level, event_t) -> LtildeWindow:
    """Build a diagnostic window from a ``one_step(..., record_pairs=True)`` result."""
    pairs = []
    for r, (xb, fb) in enumerate(out.xbar, start=1):
        for l in range(r):
            c = out.P[l]
            s = xb - c.z
            pairs.append((fb, c.fz, float(c.g @ s), float(s @ s)))
    return LtildeWindow(alpha_t, omega_t, f_hat_prev, level, bool(event_t), pairs)


def smallest_ltilde(pairs, alpha_t=0.0, gap=0.0) -> float:
    """Smallest L making the approximate smoothness inequality hold for some pair.

    Per pair the requirement is
    f(xb) <= f(xu) + <g, xb - xu> + L/2 ||xb - xu||^2 + alpha/4 * gap.
    Returns ``inf`` when no pair has positive separation.
    """
    best = math.inf
    for fb, fu, lin, d2 in pairs:
        if d2 > 0:
            best = min(best, 2.0 * (fb - fu - lin - 0.25 * alpha_t * gap) / d2)
    return best


def ltilde_diagnostic(windows) -> dict:
    """Per-iteration local constants and the resulting bound on L-bar.

    ``bound = 3 sum_E w a (f_prev - l) / sum_E (f_prev - l) / (a L_tilde)``,
    reported as ``inf`` if no event iteration contributes.  Never used to
    steer an algorithm.
    """
    lt = []
    num = den = 0.0
    for w in windows:
        gap = w.f_hat_prev - w.level
        L = smallest_ltilde(w.pairs, w.alpha_t, gap)
        lt.append(L)
        if w.event_t:
            num += w.omega_t * w.alpha_t * gap
            if 0 < L < math.inf:
                den += gap / (w.alpha_t * L)
    bound = 3.0 * num / den if den > 0 else math.inf
    return {"L_tilde": lt, "bound": bound}
