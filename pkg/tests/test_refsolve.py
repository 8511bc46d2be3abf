import numpy as np
import pytest

from apexbl import files
from apexbl.problems import Quadratic, toy_problem
from apexbl.refsolve import BracketError, kelley_fstar, maxquad_fstar


def test_kelley_on_a_quadratic():
    q = Quadratic(np.diag([1.0, 3.0]), a=np.array([0.5, -1.0]), f0=2.0)
    r = kelley_fstar(q, np.zeros(2), tol=1e-8, mu_lb=1.0)
    assert r.lower <= 2.0 <= r.upper
    assert r.gap <= 1e-8
    assert np.allclose(r.x_star, [0.5, -1.0], atol=1e-3)


def test_kelley_grows_the_ball_when_needed():
    q = Quadratic(np.eye(1), a=np.array([30.0]))
    r = kelley_fstar(q, np.zeros(1), tol=1e-8, radius=1.0)
    assert r.radius_used > 30.0 and r.gap <= 1e-8


def test_kelley_nonsmooth_toy():
    r = kelley_fstar(toy_problem("norm_plus_abs"), np.array([1.0, 1.0]), tol=1e-9)
    assert abs(r.f_star) <= 1e-9


@pytest.mark.parametrize("seed", [0, 1])
def test_dual_and_kelley_agree(seed):
    p = files.build(files.maxquad_spec(3, 4, 1.0, 10.0, seed))
    dual = maxquad_fstar(p)
    kel = kelley_fstar(p, np.ones(3), tol=1e-10, mu_lb=1.0)
    assert dual.gap <= 1e-10 and kel.gap <= 1e-10
    assert dual.lower <= kel.upper + 1e-12 and kel.lower <= dual.upper + 1e-12
    assert abs(dual.f_star - kel.f_star) <= 2e-10


@pytest.mark.parametrize("d,L", [(50, 1000.0), (120, 10.0)])
def test_dual_bracket_is_tight(d, L):
    p = files.build(files.maxquad_spec(d, 20, 1.0, L, 0))
    r = maxquad_fstar(p)
    assert r.lower <= r.upper and r.gap <= 1e-10
    assert p(r.x_star).f == pytest.approx(r.f_star, abs=1e-14)


def test_cut_cap_raises_with_bracket():
    p = files.build(files.maxquad_spec(8, 5, 1.0, 50.0, 0))
    with pytest.raises(BracketError) as e:
        kelley_fstar(p, np.ones(8), tol=1e-12, max_cuts=5)
    assert e.value.lower <= e.value.upper
