"""Comparison methods: Polyak steps, the plain bundle-level method, and lower-bound runs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .onestep import Cut
from .problems import ChainMaxProblem, FirstOrderOracle, chain_optimum, counting, empirical_lipschitz
from .projection import HalfspaceSystem, Status, project

FLOOR = 1e-12


class SubgradientError(RuntimeError):
    pass


@dataclass
class BaselineTrace:
    """Iterates ``x[0..T]`` with their values; ``steps[k]`` describes the move to ``x[k+1]``."""

    iterates: list = field(default_factory=list)
    f_values: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    oracle_calls: int = 0
    status: str = "ok"

    @property
    def x(self) -> np.ndarray:
        return np.array(self.iterates)

    def to_jsonl(self) -> str:
        lines = []
        for t, (x, f) in enumerate(zip(self.iterates, self.f_values)):
            rec = {"t": t, "f": float(f), "x_norm": float(np.linalg.norm(x))}
            if t < len(self.steps):
                rec.update({k: _plain(v) for k, v in self.steps[t].items()})
            lines.append(json.dumps(rec) + "\n")
        return "".join(lines)


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def polyak(o: FirstOrderOracle, x0, f_star: float, iters: int) -> BaselineTrace:
    """Subgradient steps of length (f(x) - f*) / ||g||^2.

    Stops early when the subgradient vanishes at a point with f = f*.
    """
    oc = counting(o)
    c0 = oc.calls
    x = np.array(x0, dtype=float)
    tr = BaselineTrace()
    s = oc(x)
    tr.iterates.append(x.copy())
    tr.f_values.append(float(s.f))
    for _ in range(iters):
        gg = float(s.g @ s.g)
        gap = float(s.f) - f_star
        if gg == 0.0:
            if gap > 0:
                raise SubgradientError(f"zero subgradient with f - f* = {gap:g} > 0")
            break
        step = gap / gg
        x = x - step * s.g
        tr.steps.append({"step": step, "gap": gap, "g_norm": math.sqrt(gg)})
        s = oc(x)
        tr.iterates.append(x.copy())
        tr.f_values.append(float(s.f))
    tr.oracle_calls = oc.calls - c0
    return tr


def bl(o: FirstOrderOracle, x0, level: float, m: int, iters: int) -> BaselineTrace:
    """Bundle-level steps: project the current iterate onto the last ``m`` cuts at ``level``.

    An empty level set ends the run with ``status = "infeasible"``, which
    means ``level`` lies below the optimal value.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    oc = counting(o)
    c0 = oc.calls
    x = np.array(x0, dtype=float)
    tr = BaselineTrace()
    s = oc(x)
    tr.iterates.append(x.copy())
    tr.f_values.append(float(s.f))
    cuts: list[Cut] = []
    for _ in range(iters):
        cuts.append(Cut.from_sample(s))
        window = cuts[-m:]
        rows = np.array([c.g for c in window])
        rhs = np.array([c.row(level)[1] for c in window])
        res = project(x, HalfspaceSystem(rows, rhs))
        if res.status is Status.Infeasible:
            tr.status = "infeasible"
            break
        tr.steps.append({"move": float(np.linalg.norm(res.x_star - x))})
        x = res.x_star
        s = oc(x)
        tr.iterates.append(x.copy())
        tr.f_values.append(float(s.f))
    tr.oracle_calls = oc.calls - c0
    return tr


def lipschitz_profile(o: FirstOrderOracle, trace: BaselineTrace) -> list:
    """Empirical Lipschitz constants between consecutive iterates of a run."""
    xs = trace.iterates
    return [empirical_lipschitz(o, xs[k], xs[k + 1]) for k in range(len(xs) - 1)]


# ---------------------------------------------------------------- lower bound


def chain_slack(p: ChainMaxProblem) -> float:
    """Finite-n slack: largest relative shortfall of ||x*_{>=i}||^2 against q^{2i} ||x*||^2.

    The asymptotic optimum has tail mass exactly ``q^{2i}`` times the total
    per block; truncation to ``n`` coordinates makes it slightly smaller.
    """
    v = chain_optimum(ChainMaxProblem(1, p.n, p.mu, p.L))
    tails = np.cumsum((v * v)[::-1])[::-1]
    total = tails[0]
    q2 = p.q ** 2
    ratio = tails / (total * q2 ** np.arange(p.n))
    ok = q2 ** np.arange(p.n) * total > FLOOR / p.k
    return float(max(0.0, 1.0 - float(np.min(ratio[ok])))) if np.any(ok) else 0.0


@dataclass
class LowerBoundReport:
    method: str
    k: int
    n: int
    kappa: float
    q: float
    delta_n: float
    dist2: list
    gaps: list
    bound: list
    violations: int
    first_violation: Optional[int]
    checked: int
    support: list
    support_ok: bool
    oracle_calls: int


def _gd(o, L, x0, iters):
    x = np.array(x0, dtype=float)
    xs = [x.copy()]
    for _ in range(iters):
        s = o(x)
        x = x - s.g / L
        xs.append(x.copy())
    return xs


def lowerbound_experiment(method: str, p: ChainMaxProblem, iters: int, m: int = 1) -> LowerBoundReport:
    """Run ``gd``, ``polyak`` or ``bl`` from zero on a chain instance.

    Checks ``||x^t - x*||^2 >= (1 - delta_n) q^{2t/k} ||x^0 - x*||^2`` until the
    distance drops to 1e-12, where ``delta_n`` comes from :func:`chain_slack`.
    ``support[t]`` lists the number of leading nonzero coordinates per block.
    """
    x_star = chain_optimum(p)
    f_star = float(p(x_star).f)
    x0 = np.zeros(p.dim)
    oc = counting(p)
    if method == "gd":
        xs = _gd(oc, p.L, x0, iters)
    elif method == "polyak":
        xs = polyak(oc, x0, f_star, iters).iterates
    elif method == "bl":
        xs = bl(oc, x0, f_star, m, iters).iterates
    else:
        raise ValueError(f"unknown method {method!r}")
    delta_n = chain_slack(p)
    d0 = float(np.sum((x0 - x_star) ** 2))
    dist2, gaps, bound, support = [], [], [], []
    bad, first, checked = 0, None, 0
    support_ok = True
    prev = np.zeros(p.k, dtype=int)
    for t, x in enumerate(xs):
        d2 = float(np.sum((x - x_star) ** 2))
        dist2.append(d2)
        gaps.append(float(p(x).f) - f_star)
        b = (1.0 - delta_n) * p.q ** (2.0 * t / p.k) * d0
        bound.append(b)
        V = x.reshape(p.k, p.n)
        nz = [int(np.flatnonzero(row)[-1]) + 1 if np.any(row) else 0 for row in V]
        support.append(nz)
        if t > 0 and sum(nz) - int(np.sum(prev)) > 1:
            support_ok = False
        prev = np.array(nz)
        if d2 <= FLOOR:
            break
        checked += 1
        if d2 < b:
            bad += 1
            if first is None:
                first = t
    return LowerBoundReport(method, p.k, p.n, p.L / p.mu, p.q, delta_n, dist2, gaps, bound, bad,
                            first, checked, support, support_ok, oc.calls)
