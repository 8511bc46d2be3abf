"""Accelerated Wolfe-certificate generation around a candidate point."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .apex import ApexState, RunTrace
from .certificate import WolfeCertificate, filter_ball
from .problems import FirstOrderOracle, OracleSample, counting

MAX_OUTER = 10**6


class AwgCapError(RuntimeError):
    pass


@dataclass
class AwgOutcome:
    success: bool
    x_hat: np.ndarray
    cert: Optional[WolfeCertificate]
    oracle_calls: int
    trace: RunTrace
    reason: str
    hat_sample: Optional[OracleSample] = None


def awg(o: FirstOrderOracle, y_bar, delta: float, m: int, iota_max: float, beta: float = 1.0,
        y_sample: Optional[OracleSample] = None, max_outer: int = MAX_OUTER,
        keep_cuts: bool = True) -> AwgOutcome:
    """Try to certify that f(y_bar) - f* is at most about ``delta``.

    Runs APEX at level ``f(y_bar) - (1 + beta) delta``.  Escaping the ball of
    radius ``iota_max`` (or an empty subproblem) yields an
    ``(iota_max, (1 + beta) delta / iota_max)`` certificate built from the
    cuts inside that ball.  Returns ``success=False`` once the convergence
    bound shows the gap guess cannot hold.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not beta > 0:
        raise ValueError("beta must be positive")
    oc = counting(o)
    calls0 = oc.calls
    if y_sample is None:
        y_sample = oc(y_bar)
    y_bar = np.asarray(y_bar, dtype=float)
    level = float(y_sample.f) - (1.0 + beta) * delta
    st = ApexState(oc, y_bar, level, m, y_sample=y_sample, collect_cuts=True)
    bd = beta * delta
    while True:
        if st.t >= max_outer:
            raise AwgCapError(f"AWG exceeded {max_outer} outer iterations")
        rec, _ = st.step()
        dist = rec["dist_to_center"]
        if rec["flag"] or dist > iota_max:
            P = filter_ball(st.trace.cuts, y_bar, iota_max)
            cert = WolfeCertificate(y_bar.copy(), float(iota_max), (1.0 + beta) * delta / iota_max, P,
                                    {"source": "awg", "level": level})
            if not keep_cuts:
                st.trace.cuts = []
            return AwgOutcome(True, st.x_hat, cert, oc.calls - calls0, st.trace,
                              "flag" if rec["flag"] else "radius", st.hat_sample)
        lb = rec["lbar"]
        t = rec["t"]
        budget = math.sqrt(max(0.0, (2.0 * iota_max * iota_max * lb + 6.0 * (1.0 + beta) * delta) / bd))
        if lb * dist * dist < rec["omega_t"] * bd - 3.0 * (1.0 + beta) * delta or t >= budget:
            st.trace.cuts = []
            return AwgOutcome(False, st.x_hat, None, oc.calls - calls0, st.trace, "refuted",
                              st.hat_sample)
