"""Restarted drivers: known modulus, gap reduction, and guess-and-check on the modulus."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .apex import ApexState, RunTrace, monotone_violations
from .awg import MAX_OUTER, AwgCapError, awg
from .certificate import WolfeCertificate, filter_ball
from .problems import BudgetExceeded, CountingOracle, FirstOrderOracle, OracleSample

MAX_STAGES = 100_000
EVENTS = ("awg_fail", "awg_ok", "agr_budget", "agr_radius", "agr_objective", "commit")


class StageCapError(RuntimeError):
    pass


@dataclass
class GapState:
    s: int
    f_upper: float
    f_lower: float
    delta: float
    mu_hat: float
    mu_committed: float
    iota_s: float
    cert: Optional[WolfeCertificate]
    y_bar: np.ndarray
    grad_norm_at_y: float


@dataclass
class AgrOutcome:
    half_flag: bool
    x_hat: np.ndarray
    lower_flag: Optional[bool]
    cert: Optional[WolfeCertificate]
    oracle_calls: int = 0
    trace: Optional[RunTrace] = None
    hat_sample: Optional[OracleSample] = None


@dataclass
class RestartResult:
    """Outcome of a restarted run.

    ``status`` is ``"converged"``, ``"budget"`` (oracle budget exhausted,
    partial result) or ``"cap"`` (a safety cap was hit).
    """

    x: np.ndarray
    f: float
    f_lower: float
    status: str
    oracle_calls: int
    outer_iterations: int
    history: list = field(default_factory=list)
    events: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    runs: list = field(default_factory=list)
    monotone_violations: int = 0

    @property
    def f_lowers(self) -> list:
        return [e["f_lower"] for e in self.events]

    @property
    def mu_hats(self) -> list:
        return [e["mu_hat"] for e in self.events if e.get("mu_hat") is not None]

    def events_jsonl(self) -> str:
        keys = ("stage", "event", "mu_hat", "delta_tilde", "f_upper", "f_lower", "oracle_calls")
        return "".join(json.dumps({k: e.get(k) for k in keys}) + "\n" for e in self.events)


class _Book:
    """Per-run bookkeeping shared by both drivers."""

    def __init__(self, keep_traces, keep_certificates, on_certificate):
        self.keep_traces = keep_traces
        self.keep_certificates = keep_certificates
        self.on_certificate = on_certificate
        self.events: list = []
        self.certs: list = []
        self.traces: list = []
        self.runs: list = []
        self.history: list = []
        self.outer = 0
        self.mono = 0

    def run(self, kind, stage, trace: RunTrace, **extra):
        self.outer += trace.last["t"]
        v = monotone_violations(trace.inner_dists)
        self.mono += v
        self.runs.append(dict(kind=kind, stage=stage, t=trace.last["t"], lbar=trace.last["lbar"],
                              level=trace.level, monotone_violations=v, **extra))
        trace.cuts = []
        if self.keep_traces:
            self.traces.append(trace)

    def cert(self, c: Optional[WolfeCertificate], stage, source):
        if c is None:
            return
        c.meta.update(stage=stage, source=source)
        if self.on_certificate is not None:
            self.on_certificate(c)
        if self.keep_certificates:
            self.certs.append(c)

    def event(self, stage, name, mu_hat, delta_tilde, f_upper, f_lower, calls, **extra):
        self.events.append(dict(stage=stage, event=name, mu_hat=mu_hat, delta_tilde=delta_tilde,
                                f_upper=f_upper, f_lower=f_lower, oracle_calls=calls, **extra))

    def result(self, x, f, f_lower, status, calls) -> RestartResult:
        return RestartResult(np.asarray(x, dtype=float).copy(), float(f), float(f_lower), status,
                             calls, self.outer, self.history, self.events, self.certs,
                             self.traces, self.runs, self.mono)


def _ball_cert(cuts, y_bar, iota, nu, source) -> WolfeCertificate:
    return WolfeCertificate(np.array(y_bar, dtype=float), float(iota), float(nu),
                            filter_ball(cuts, y_bar, iota), {"source": source})


def stage_budget(theta: float, lbar: float, mu: float) -> int:
    """Outer-iteration count after which a gap-reduction stage gives up on ``mu``."""
    return math.ceil(math.sqrt(6.0 * theta / (2.0 * theta - 1.0)
                               + 4.0 * lbar * theta / (mu * (2.0 * theta - 1.0))))


def _check_theta(theta):
    if not 0.5 < theta < 1.0:
        raise ValueError("theta must lie in (1/2, 1)")


# ---------------------------------------------------------------- known modulus


def rapex_known(o: FirstOrderOracle, y0, mu_star: float, m: int, theta: float = 0.75,
                eps: float = 1e-6, oracle_budget: Optional[int] = None,
                max_stages: int = MAX_STAGES, max_outer: int = MAX_OUTER,
                keep_traces: bool = False, keep_certificates: bool = True,
                on_certificate: Optional[Callable] = None) -> RestartResult:
    """Restarted APEX with a known quadratic-growth modulus ``mu_star``.

    Each stage targets the level ``f_upper - theta * delta`` and ends when
    either the objective drops to within ``theta * delta`` of the lower
    bound (upper shrink) or the iterates leave the ball of radius
    ``sqrt(2 theta delta / mu_star)`` (lower shrink with a certificate).
    Stage records in ``history``; ``runs[i]['t_bar']`` is the per-stage
    iteration bound computed from that stage's final L-bar.
    """
    _check_theta(theta)
    if not mu_star > 0:
        raise ValueError("mu_star must be positive")
    oc = CountingOracle(o, oracle_budget)
    book = _Book(keep_traces, keep_certificates, on_certificate)
    ys = oc(np.asarray(y0, dtype=float))
    y_bar, f_up = np.array(ys.x, dtype=float), float(ys.f)
    gn = float(np.linalg.norm(ys.g))
    delta = gn * gn / (2.0 * mu_star)
    f_low = f_up - delta
    s = 0
    book.event(0, "commit", mu_star, delta, f_up, f_low, oc.calls)
    try:
        while delta > eps:
            if delta == 0.0:
                break
            s += 1
            if s > max_stages:
                return book.result(y_bar, f_up, f_low, "cap", oc.calls)
            level = f_up - theta * delta
            r2 = 2.0 * theta * delta / mu_star
            st = ApexState(oc, y_bar, level, m, y_sample=ys, collect_cuts=True)
            cert = None
            while True:
                if st.t >= max_outer:
                    raise AwgCapError(f"stage exceeded {max_outer} outer iterations")
                rec, _ = st.step()
                d = rec["dist_to_center"]
                if rec["flag"] or d * d > r2:
                    iota = math.sqrt(r2)
                    cert = _ball_cert(st.trace.cuts, y_bar, iota, math.sqrt(mu_star * theta * delta / 2.0),
                                      "lower_shrink")
                    name = "lower_shrink"
                    f_low = f_up - theta * delta
                    break
                if rec["f_hat"] - f_low <= theta * delta:
                    name = "upper_shrink"
                    break
            delta = theta * delta
            book.cert(cert, s, name)
            book.run("stage", s, st.trace, t_bar=stage_budget(theta, rec["lbar"], mu_star) + 1)
            ys = st.hat_sample
            y_bar, f_up = np.array(ys.x, dtype=float), float(ys.f)
            book.history.append(GapState(s, f_up, f_low, delta, mu_star, mu_star,
                                         math.sqrt(r2), cert if keep_certificates else None, y_bar.copy(),
                                         float(np.linalg.norm(ys.g))))
            book.event(s, name, mu_star, delta, f_up, f_low, oc.calls)
    except BudgetExceeded:
        return book.result(y_bar, f_up, f_low, "budget", oc.calls)
    return book.result(y_bar, f_up, f_low, "converged", oc.calls)


# ---------------------------------------------------------------- gap reduction


def agr(o: FirstOrderOracle, f_lower: float, delta: float, y_bar, mu: float, theta: float, m: int,
        y_sample: Optional[OracleSample] = None, max_outer: int = MAX_OUTER) -> AgrOutcome:
    """Reduce the gap ``f(y_bar) - f_lower`` by the factor ``theta`` or refute ``mu``.

    Returns ``(True, x_hat, False, cert)`` when the iterates leave the ball
    of radius ``sqrt(2 theta delta / mu)`` (an empty subproblem counts as
    leaving), ``(True, x_hat, True, None)`` when the objective reaches
    ``f_lower + theta * delta``, and ``(False, x_hat, None, None)`` once the
    iteration budget implied by ``mu`` is spent.
    """
    _check_theta(theta)
    if not delta > 0:
        raise ValueError("delta must be positive")
    oc = o if isinstance(o, CountingOracle) else CountingOracle(o)
    c0 = oc.calls
    if y_sample is None:
        y_sample = oc(y_bar)
    y_bar = np.asarray(y_bar, dtype=float)
    level = float(y_sample.f) - theta * delta
    r2 = 2.0 * theta * delta / mu
    st = ApexState(oc, y_bar, level, m, y_sample=y_sample, collect_cuts=True)
    while True:
        if st.t >= max_outer:
            raise AwgCapError(f"gap reduction exceeded {max_outer} outer iterations")
        rec, _ = st.step()
        d = rec["dist_to_center"]
        if rec["flag"] or d * d >= r2:
            iota = math.sqrt(r2)
            cert = _ball_cert(st.trace.cuts, y_bar, iota, theta * delta / iota, "agr")
            return AgrOutcome(True, st.x_hat, False, cert, oc.calls - c0, st.trace, st.hat_sample)
        if rec["f_hat"] - f_lower <= theta * delta:
            return AgrOutcome(True, st.x_hat, True, None, oc.calls - c0, st.trace, st.hat_sample)
        if rec["t"] >= stage_budget(theta, rec["lbar"], mu):
            return AgrOutcome(False, st.x_hat, None, None, oc.calls - c0, st.trace, st.hat_sample)


# ---------------------------------------------------------------- unknown modulus


def rapex_unknown(o: FirstOrderOracle, y0, mu_hat_1: float, m: int, theta: float = 0.75,
                  beta: float = 1.0, eps: float = 1e-6, oracle_budget: Optional[int] = None,
                  max_stages: int = MAX_STAGES, keep_traces: bool = False,
                  keep_certificates: bool = True,
                  on_certificate: Optional[Callable] = None) -> RestartResult:
    """Restarted APEX that guesses the modulus and quarters it when refuted.

    Every stage first certifies the current center with :func:`awg`, then
    repeatedly calls :func:`agr` until the prox-center moves.  A failed AWG
    or AGR divides ``mu_hat`` by four and widens the gap estimate.  The run
    ends when ``f_upper - f_lower <= eps``, or returns a partial result with
    status ``"budget"`` once ``oracle_budget`` calls are used.
    """
    _check_theta(theta)
    if not (mu_hat_1 > 0 and beta > 0):
        raise ValueError("mu_hat_1 and beta must be positive")
    oc = CountingOracle(o, oracle_budget)
    book = _Book(keep_traces, keep_certificates, on_certificate)
    ys = oc(np.asarray(y0, dtype=float))
    y_bar, f_up = np.array(ys.x, dtype=float), float(ys.f)
    gn = float(np.linalg.norm(ys.g))
    mu_hat = float(mu_hat_1)
    dt = 2.0 * gn * gn / mu_hat
    f_low = f_up - dt
    mu_prev, delta_prev = 1.0, math.inf  # committed values of the previous stage
    s = 1

    def prev_term():
        return math.inf if math.isinf(delta_prev) else 9.0 * mu_prev * delta_prev / (4.0 * mu_hat)

    def ev(name, **extra):
        book.event(s, name, mu_hat, dt, f_up, f_low, oc.calls, **extra)

    if dt == 0.0:
        return book.result(y_bar, f_up, f_low, "converged", oc.calls)
    try:
        while True:
            if s > max_stages:
                return book.result(y_bar, f_up, f_low, "cap", oc.calls)
            # certificate generation, quartering mu_hat until it succeeds
            while True:
                iota = math.sqrt(2.0 * (1.0 + beta) * dt / mu_hat)
                out = awg(oc, y_bar, dt, m, iota, beta, y_sample=ys)
                book.run("awg", s, out.trace, success=out.success, mu_hat=mu_hat)
                if out.success:
                    break
                mu_hat /= 4.0
                dt = min(prev_term(), 2.0 * gn * gn / mu_hat)
                f_low = f_up - dt
                ev("awg_fail")
            delta_s, mu_s = (1.0 + beta) * dt, mu_hat
            iota_s = math.sqrt(2.0 * delta_s / mu_s)
            cert = out.cert
            book.cert(cert, s, "awg")
            ev("awg_ok")
            # gap reduction around the same center
            while True:
                r = agr(oc, f_low, dt, y_bar, mu_hat, theta, m, y_sample=ys)
                book.run("agr", s, r.trace, half_flag=r.half_flag, lower_flag=r.lower_flag,
                         mu_hat=mu_hat)
                if not r.half_flag:
                    mu_hat /= 4.0
                    dt = min(4.0 * delta_s, 2.0 * gn * gn / mu_hat, prev_term())
                    f_low = f_up - dt
                    ev("agr_budget")
                    break
                if not r.lower_flag:
                    dt = theta * dt
                    f_low = f_up - dt
                    delta_s, mu_s = dt, mu_hat
                    iota_s = math.sqrt(2.0 * delta_s / mu_s)
                    cert = r.cert
                    book.cert(cert, s, "agr")
                    ev("agr_radius")
                    continue
                ys = r.hat_sample if r.hat_sample is not None else ys
                y_bar, f_up = np.array(ys.x, dtype=float), float(ys.f)
                gn = float(np.linalg.norm(ys.g))
                dt = f_up - f_low
                ev("agr_objective")
                mu_prev, delta_prev = mu_s, delta_s
                book.history.append(GapState(s, f_up, f_low, dt, mu_hat, mu_s, iota_s,
                                             cert if keep_certificates else None,
                                             y_bar.copy(), gn))
                ev("commit")
                if dt <= eps:
                    return book.result(y_bar, f_up, f_low, "converged", oc.calls)
                s += 1
                break
    except BudgetExceeded:
        return book.result(y_bar, f_up, f_low, "budget", oc.calls)
