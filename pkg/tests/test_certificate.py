import math

import numpy as np
import pytest

from apexbl.certificate import (WolfeCertificate, WolfeGapError, ball_min, filter_ball, gap_bound, psi,
                                transfer, verify_certificate, wolfe_gap)
from apexbl.onestep import Cut
from apexbl.problems import Quadratic


def _cuts(o, pts):
    return [Cut.from_sample(o(p)) for p in pts]


def test_single_cut_closed_form():
    c = Cut(np.zeros(3), 1.0, np.array([3.0, 4.0, 0.0]))
    bm = ball_min([c], np.zeros(3), 2.0)
    assert bm.lower == pytest.approx(1.0 - 2.0 * 5.0, abs=1e-9)
    assert bm.upper - bm.lower <= 1e-8
    V, _, _ = wolfe_gap([c], np.zeros(3), 2.0)
    assert V == pytest.approx(5.0, abs=1e-9)


def test_flat_model_has_zero_gap():
    cs = [Cut(np.zeros(2), 0.0, np.zeros(2)), Cut(np.ones(2), -1.0, np.zeros(2))]
    V, _, _ = wolfe_gap(cs, np.zeros(2), 1.0)
    assert V == pytest.approx(0.0, abs=1e-12)


def test_ball_min_against_sampling():
    rng = np.random.default_rng(3)
    for _ in range(30):
        d = int(rng.integers(1, 5))
        P = [Cut(rng.standard_normal(d), float(rng.standard_normal()), rng.standard_normal(d))
             for _ in range(int(rng.integers(1, 6)))]
        c = rng.standard_normal(d)
        R = float(rng.uniform(0.2, 2.0))
        bm = ball_min(P, c, R)
        u = rng.standard_normal((2000, d))
        u = c + R * u / np.linalg.norm(u, axis=1, keepdims=True) * rng.random((2000, 1)) ** (1 / d)
        sampled = min(psi(P, x) for x in u)
        assert bm.lower <= sampled + 1e-9
        assert psi(P, bm.witness) <= bm.upper + 1e-9
        assert np.linalg.norm(bm.witness - c) <= R * (1 + 1e-9)


def test_wolfe_gap_error_carries_a_valid_bracket():
    rng = np.random.default_rng(0)
    P = [Cut(rng.standard_normal(3), float(rng.standard_normal()), rng.standard_normal(3)) for _ in range(5)]
    try:
        bm = ball_min(P, np.zeros(3), 1.0, tol=1e-300, max_iter=2)
        assert bm.lower <= bm.upper
    except WolfeGapError as e:
        assert e.lower <= e.upper and e.witness is not None


def test_gap_bound():
    assert gap_bound(2.0, 0.5, 1.0) == max(1.0, 0.5)
    assert gap_bound(0.1, 3.0, 1.0) == 18.0


def test_certificate_round_trip_and_verify():
    q = Quadratic(np.eye(2))
    y = np.array([1.0, 0.0])
    pts = [y, np.array([0.5, 0.0]), np.array([1.0, 0.5])]
    P = _cuts(q, pts)
    V, _, _ = wolfe_gap(P, y, 1.0)
    cert = WolfeCertificate(y, 1.0, V + 1e-9, P)
    assert verify_certificate(cert).valid
    back = WolfeCertificate.from_json(cert.to_json())
    assert np.array_equal(back.center, cert.center) and back.nu == cert.nu
    assert verify_certificate(back).valid
    tight = WolfeCertificate(y, 1.0, V - 1e-3, P)
    assert not verify_certificate(tight).valid
    outside = WolfeCertificate(y, 0.1, V, P)
    assert not verify_certificate(outside).contained


def test_certificate_bounds_the_gap():
    # f = 0.5||x||^2 is 1-QG with f* = 0
    q = Quadratic(np.eye(3))
    rng = np.random.default_rng(4)
    for _ in range(20):
        y = rng.standard_normal(3)
        iota = float(rng.uniform(0.1, 3.0))
        pts = [y] + [y + iota * v / max(1.0, np.linalg.norm(v)) for v in rng.standard_normal((6, 3))]
        P = filter_ball(_cuts(q, pts), y, iota)
        V, _, _ = wolfe_gap(P, y, iota)
        assert q(y).f <= gap_bound(iota, V, 1.0) + 1e-9


def test_transfer_moves_center():
    q = Quadratic(np.eye(2))
    y = np.array([1.0, 1.0])
    P = _cuts(q, [y, y * 0.5])
    cert = WolfeCertificate(y, 1.0, 0.7, P)
    yt = np.array([1.2, 1.0])
    s = q(yt)
    t = transfer(cert, yt, level=0.2, f_ybar=q(y).f, f_ytilde=s.f, g_ytilde=s.g)
    c = 0.2
    assert t.iota == pytest.approx((1 + c) * 1.0)
    assert t.nu == pytest.approx((s.f + c * q(y).f - (1 + 2 * c) * 0.2) / t.iota)
    assert np.array_equal(t.points[0].z, yt)
    with pytest.raises(ValueError):
        transfer(WolfeCertificate(y, 0.0, 1.0, P), yt, 0.0, 1.0, 1.0, s.g)


def test_ball_min_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        ball_min([Cut(np.zeros(1), 0.0, np.ones(1))], np.zeros(1), 0.0)
