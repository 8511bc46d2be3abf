"""Fixed-level accelerated prox-level driver, run traces and rate checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from .onestep import (Carry, CutOption, LbarAccumulator, OneStepOutput, alpha, event, omega,
                      one_step)
from .problems import CountingOracle, FirstOrderOracle, OracleSample, counting
from .projection import DEFAULT_TOLS, Tolerances

MONOTONE_TOL = 1e-9

TRACE_FIELDS = ("t", "f_hat", "level", "alpha_t", "omega_t", "L_t", "pair_dist", "event_t",
                "dist_to_center", "flag", "oracle_calls", "lbar")


@dataclass
class RunTrace:
    """Per-outer-iteration records plus run metadata.

    ``records[0]`` is the t = 0 state (the center itself).  ``inner_dists``
    keeps ||x^{t,i} - y_bar|| for every produced inner iterate, in order.
    """

    y_bar: np.ndarray
    level: float
    records: list = field(default_factory=list)
    inner_dists: list = field(default_factory=list)
    cuts: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    x_hat: Optional[np.ndarray] = None
    x_last: Optional[np.ndarray] = None

    @property
    def f_hat(self):
        return np.array([r["f_hat"] for r in self.records])

    @property
    def last(self) -> dict:
        return self.records[-1]

    def to_jsonl(self) -> str:
        return "".join(json.dumps({k: _jsonable(r.get(k)) for k in TRACE_FIELDS}) + "\n"
                       for r in self.records)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def monotone_violations(dists, tol: float = MONOTONE_TOL) -> int:
    d = np.asarray(dists, dtype=float)
    if d.size < 2:
        return 0
    return int(np.sum(np.diff(d) < -tol))


class ApexState:
    """Incremental APEX iteration around a fixed center and level.

    Drivers call :meth:`step` once per outer iteration and apply their own
    exit tests to the returned record.
    """

    def __init__(self, o: FirstOrderOracle, y_bar, level: float, m: int,
                 y_sample: Optional[OracleSample] = None, option: CutOption = CutOption.OptionI,
                 collect_cuts: bool = False, tols: Tolerances = DEFAULT_TOLS,
                 record_pairs: bool = False):
        if m < 1:
            raise ValueError("m must be at least 1")
        self.o = counting(o)
        self.y_bar = np.asarray(y_bar, dtype=float)
        self.level = float(level)
        self.m = int(m)
        self.option = option
        self.tols = tols
        self.record_pairs = record_pairs
        self.windows: list = []
        if y_sample is None:
            y_sample = self.o(self.y_bar)
        self.y_sample = y_sample
        self.hat_sample = y_sample
        self.x_hat = self.y_bar.copy()
        self.f_hat0 = float(y_sample.f)
        self.f_hat = self.f_hat0
        self.x_t0 = self.y_bar.copy()
        self.carry: Optional[Carry] = None
        self.lbar = LbarAccumulator()
        self.t = 0
        self.trace = RunTrace(self.y_bar.copy(), self.level)
        self.trace.inner_dists.append(0.0)
        if collect_cuts:
            from .onestep import Cut
            self.trace.cuts.append(Cut.from_sample(y_sample))
        self.collect_cuts = collect_cuts
        self.trace.records.append(dict(t=0, f_hat=self.f_hat, level=self.level, alpha_t=None,
                                       omega_t=None, L_t=None, pair_dist=None, event_t=False,
                                       dist_to_center=0.0, flag=False,
                                       oracle_calls=self.o.calls, lbar=0.0))
        self.trace.x_hat = self.x_hat
        self.trace.x_last = self.x_t0

    def step(self) -> tuple[dict, OneStepOutput]:
        self.t += 1
        t = self.t
        a_t, w_t = alpha(t), omega(t)
        f_prev = self.f_hat
        out = one_step(self.o, self.y_bar, self.x_hat, self.x_t0, self.level, self.m, a_t,
                       f_prev, carry=self.carry, option=self.option, tols=self.tols,
                       record_pairs=self.record_pairs)
        ev = event(out.fhat_t, f_prev, self.level, a_t)
        if ev and f_prev >= self.level:
            assert out.L_t is None or out.L_t > 0, "event iteration with nonpositive L_t"
        lb = self.lbar.update(a_t, w_t, out.L_t, out.pair_dist, ev)
        if self.record_pairs:
            from .onestep import window_from
            self.windows.append(window_from(out, a_t, w_t, f_prev, self.level, ev))
        for x in out.inner_iterates[1:]:
            self.trace.inner_dists.append(float(np.linalg.norm(x - self.y_bar)))
        if self.collect_cuts:
            self.trace.cuts.extend(out.P)
        self.x_hat, self.f_hat = out.x_hat_t, out.fhat_t
        if out.hat_sample is not None:
            self.hat_sample = out.hat_sample
        self.x_t0 = out.x_next0
        self.carry = out.carry
        rec = dict(t=t, f_hat=self.f_hat, level=self.level, alpha_t=a_t, omega_t=w_t,
                   L_t=out.L_t, pair_dist=out.pair_dist, event_t=bool(ev),
                   dist_to_center=float(np.linalg.norm(self.x_t0 - self.y_bar)),
                   flag=bool(out.flag), oracle_calls=self.o.calls, lbar=lb)
        self.trace.records.append(rec)
        self.trace.x_hat = self.x_hat
        self.trace.x_last = self.x_t0
        return rec, out


def apex_run(o: FirstOrderOracle, y_bar, level: float, m: int, max_outer: int,
             stop: Optional[Callable[[RunTrace], bool]] = None,
             option: CutOption = CutOption.OptionI, collect_cuts: bool = False,
             record_pairs: bool = False) -> RunTrace:
    """Run APEX at a fixed level until ``stop``, an empty subproblem, or ``max_outer``."""
    st = ApexState(o, y_bar, level, m, option=option, collect_cuts=collect_cuts,
                   record_pairs=record_pairs)
    while st.t < max_outer:
        rec, _ = st.step()
        if rec["flag"] or (stop is not None and stop(st.trace)):
            break
    st.trace.meta["windows"] = st.windows
    return st.trace


# ---------------------------------------------------------------- stops


def stop_gap(f_star: float, eps: float) -> Callable[[RunTrace], bool]:
    return lambda tr: tr.last["f_hat"] - f_star <= eps


def stop_calls(budget: int) -> Callable[[RunTrace], bool]:
    return lambda tr: tr.last["oracle_calls"] >= budget


def stop_any(*preds) -> Callable[[RunTrace], bool]:
    return lambda tr: any(p(tr) for p in preds)


# ---------------------------------------------------------------- checks


@dataclass
class RateReport:
    ok: bool
    violations: int
    first_violation: Optional[int]
    max_excess: float
    checked: int


def verify_rate(trace: RunTrace, f_star: float, x_star, lbar_scale: float = 1.0) -> RateReport:
    """Check f(x_hat^t) - f* <= [6(f0 - f*) + 2 Lbar(t) ||x* - y||^2] / ((t+2)(t+3)).

    ``lbar_scale`` multiplies the recorded L-bar; values below one exist to
    exercise the detector.
    """
    slack = 1e-8 * (1.0 + abs(f_star))
    R2 = float(np.sum((np.asarray(x_star, dtype=float) - trace.y_bar) ** 2))
    f0 = trace.records[0]["f_hat"]
    bad, first, worst = 0, None, -math.inf
    for r in trace.records:
        t = r["t"]
        rhs = (6.0 * (f0 - f_star) + 2.0 * lbar_scale * r["lbar"] * R2) / ((t + 2.0) * (t + 3.0))
        ex = (r["f_hat"] - f_star) - rhs
        worst = max(worst, ex)
        if ex > slack:
            bad += 1
            if first is None:
                first = t
    return RateReport(bad == 0, bad, first, worst, len(trace.records))


def convergence_bound_violations(trace: RunTrace, slack_rel: float = 1e-8) -> int:
    """Count t where w_t (f_t - l) - 3 (f_0 - l) > Lbar(t) ||x^t - y||^2 + slack."""
    lv = trace.level
    f0 = trace.records[0]["f_hat"]
    bad = 0
    for r in trace.records[1:]:
        lhs = r["omega_t"] * (r["f_hat"] - lv) - 3.0 * (f0 - lv)
        rhs = r["lbar"] * r["dist_to_center"] ** 2
        if lhs > rhs + slack_rel * (1.0 + abs(lv) + r["omega_t"] * abs(r["f_hat"] - lv)):
            bad += 1
    return bad
