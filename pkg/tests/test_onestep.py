import math

import numpy as np
import pytest

from apexbl import files
from apexbl.apex import apex_run
from apexbl.onestep import (Cut, CutOption, LbarAccumulator, alpha, event, ltilde_diagnostic, omega, one_step,
                            smallest_ltilde)
from apexbl.problems import CountingOracle, Quadratic
from apexbl.refsolve import maxquad_fstar


def test_schedule_identity():
    for t in list(range(1, 2000)) + [10**5, 10**6]:
        assert omega(t) * (1 - alpha(t) / 2) == pytest.approx(omega(t - 1), rel=1e-12, abs=0)
    assert alpha(1) == 1.0 and omega(0) == 3.0


def test_cut_row_is_the_level_halfspace():
    c = Cut(np.array([1.0, 0.0]), 2.0, np.array([1.0, -1.0]))
    g, r = c.row(0.5)
    x = np.array([0.3, 0.7])
    assert (g @ x <= r) == (c.value(x) <= 0.5)


def test_event_rule():
    assert event(0.9, 1.0, 0.0, 0.5)
    assert not event(0.7, 1.0, 0.0, 0.5)


def test_lbar_accumulator_matches_fsum():
    rng = np.random.default_rng(0)
    acc = LbarAccumulator()
    num, den = [], []
    for t in range(1, 400):
        a, w, L, d = alpha(t), omega(t), float(rng.random() * 10), float(rng.random())
        ev = bool(rng.random() < 0.6)
        acc.update(a, w, L, d, ev)
        if ev:
            num.append(w * a * a * L * d * d / 2)
            den.append(d * d)
    assert acc.value == pytest.approx(math.fsum(num) / math.fsum(den), rel=1e-13)


@pytest.fixture
def mq():
    p = files.build(files.maxquad_spec(10, 4, 1.0, 10.0, 0))
    return p, maxquad_fstar(p).f_star


@pytest.mark.parametrize("m", [1, 3, 6])
def test_one_step_invariants(mq, m):
    p, fs = mq
    oc = CountingOracle(p)
    y = np.ones(10)
    f0 = p(y).f
    out = one_step(oc, y, y, y, fs, m, alpha(1), f0)
    assert out.fhat_t <= f0
    assert out.oracle_calls == oc.calls <= 2 * m
    assert len(out.inner_iterates) <= m + 1
    assert not out.flag


def test_flag_when_level_is_below_the_optimum():
    q = Quadratic(np.eye(1))
    y = np.array([1.0])
    out = one_step(q, y, y, y, -1.0, 3, alpha(1), q(y).f)
    assert out.flag
    # the cut that emptied the subproblem is kept
    assert 1 <= len(out.P) <= out.oracle_calls


def test_option_two_runs_and_carries_cuts(mq):
    p, fs = mq
    tr = apex_run(p, np.ones(10), fs, 3, 40, option=CutOption.OptionII)
    assert tr.last["f_hat"] - fs < tr.records[0]["f_hat"] - fs


def test_bad_arguments(mq):
    p, fs = mq
    with pytest.raises(ValueError):
        one_step(p, np.ones(10), np.ones(10), np.ones(10), fs, 0, 0.5, 1.0)
    with pytest.raises(ValueError):
        one_step(p, np.ones(10), np.ones(10), np.ones(10), fs, 2, 1.5, 1.0)


def test_ltilde_diagnostic_bounds_lbar():
    checked = 0
    for seed in range(3):
        p = files.build(files.maxquad_spec(10, 4, 1.0, 10.0, seed))
        fs = maxquad_fstar(p).f_star
        tr = apex_run(p, np.ones(10), fs, 4, 60, record_pairs=True)
        dg = ltilde_diagnostic(tr.meta["windows"])
        assert len(dg["L_tilde"]) == tr.last["t"]
        if math.isfinite(dg["bound"]):
            assert tr.last["lbar"] <= dg["bound"]
            checked += 1
    assert checked >= 1
    assert smallest_ltilde([]) == math.inf
