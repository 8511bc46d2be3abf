import math

import numpy as np
import pytest

from apexbl import files
from apexbl.awg import awg
from apexbl.certificate import verify_certificate
from apexbl.problems import CountingOracle
from apexbl.refsolve import maxquad_fstar


@pytest.fixture(scope="module")
def inst():
    p = files.build(files.maxquad_spec(12, 4, 1.0, 10.0, 3))
    ref = maxquad_fstar(p)
    return p, ref


def _iota(delta, beta=1.0, mu=1.0):
    return math.sqrt(2 * (1 + beta) * delta / mu)


@pytest.mark.parametrize("shift", [1e-3, 1e-2, 0.1])
def test_success_when_gap_is_within_delta(inst, shift):
    p, ref = inst
    rng = np.random.default_rng(0)
    y = ref.x_star + shift * rng.standard_normal(12)
    gap = p(y).f - ref.f_star
    for delta in (gap, 2 * gap, 10 * gap):
        out = awg(p, y, delta, 4, _iota(delta))
        assert out.success, delta


def test_success_yields_the_promised_certificate(inst):
    p, ref = inst
    y = ref.x_star + 0.05
    delta = 2 * (p(y).f - ref.f_star)
    iota = _iota(delta, beta=0.5)
    out = awg(p, y, delta, 4, iota, beta=0.5)
    assert out.success
    c = out.cert
    assert c.iota == iota and c.nu == pytest.approx(1.5 * delta / iota)
    assert all(np.linalg.norm(q.z - y) <= iota for q in c.points)
    assert verify_certificate(c).valid


def test_failure_when_gap_exceeds_twice_delta(inst):
    p, ref = inst
    y = np.ones(12)
    gap = p(y).f - ref.f_star
    out = awg(p, y, gap / 10, 4, _iota(gap / 10))
    assert not out.success and out.cert is None


def test_calls_go_through_the_shared_counter(inst):
    p, ref = inst
    oc = CountingOracle(p)
    out = awg(oc, np.ones(12), 1e-3, 4, _iota(1e-3))
    assert out.oracle_calls == oc.calls


def test_validation(inst):
    p, _ = inst
    with pytest.raises(ValueError):
        awg(p, np.ones(12), 0.0, 4, 1.0)
    with pytest.raises(ValueError):
        awg(p, np.ones(12), 1.0, 4, 1.0, beta=0.0)
