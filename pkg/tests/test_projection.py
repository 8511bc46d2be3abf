import numpy as np
import pytest

from apexbl.projection import HalfspaceSystem, Status, nnls, project

from conftest import enumerate_projection


def test_interior_point_is_unchanged():
    res = project(np.zeros(3), HalfspaceSystem(np.eye(3), np.ones(3)))
    assert res.status is Status.Optimal
    assert np.allclose(res.x_star, 0) and np.allclose(res.lambda_star, 0)


def test_single_halfspace_closed_form():
    a, b, y = np.array([1.0, 2.0]), 1.0, np.array([3.0, 3.0])
    res = project(y, HalfspaceSystem(a[None, :], [b]))
    expect = y - (a @ y - b) / (a @ a) * a
    assert np.allclose(res.x_star, expect)
    assert res.lambda_star[0] == pytest.approx((a @ y - b) / (a @ a))


def test_random_systems_match_enumeration():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        A = rng.standard_normal((m, n))
        b = A @ rng.standard_normal(n) + rng.random(m)
        y = 2 * rng.standard_normal(n)
        res = project(y, HalfspaceSystem(A, b))
        assert res.status is Status.Optimal
        assert np.allclose(res.x_star, enumerate_projection(y, A, b), atol=1e-9)
        assert res.kkt_residual <= 1e-9 and np.all(res.lambda_star >= 0)


def test_infeasible_system_returns_a_farkas_ray():
    A = np.array([[1.0, 0.0], [-1.0, 0.0]])
    b = np.array([-1.0, -1.0])  # x1 <= -1 and x1 >= 1
    res = project(np.zeros(2), HalfspaceSystem(A, b))
    assert res.status is Status.Infeasible and res.x_star is None
    r = res.ray
    assert np.all(r >= 0) and np.allclose(A.T @ r, 0, atol=1e-12) and b @ r < 0


def test_zero_row_with_negative_rhs_is_infeasible():
    A = np.array([[0.0, 0.0], [1.0, 1.0]])
    res = project(np.ones(2), HalfspaceSystem(A, [-0.5, 0.0]))
    assert res.status is Status.Infeasible


def test_degenerate_duplicate_rows():
    A = np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]])
    b = np.array([1.0, 1.0, 2.0])
    res = project(np.array([2.0, 2.0]), HalfspaceSystem(A, b))
    assert res.status is Status.Optimal
    assert np.allclose(res.x_star, [0.5, 0.5])


def test_nnls_matches_unconstrained_when_positive():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((6, 3))
    x_true = np.array([1.0, 2.0, 0.5])
    x = nnls(M, M @ x_true)
    assert np.allclose(x, x_true)
    x = nnls(M, -M @ x_true)
    assert np.all(x >= 0)


def test_shape_validation():
    with pytest.raises(ValueError):
        HalfspaceSystem(np.ones((2, 2)), np.ones(3))
    with pytest.raises(ValueError):
        project(np.zeros(3), HalfspaceSystem(np.ones((1, 2)), [1.0]))


def test_nnls_against_scipy():
    from scipy.optimize import nnls as scipy_nnls
    rng = np.random.default_rng(7)
    for _ in range(50):
        M = rng.standard_normal((int(rng.integers(2, 9)), int(rng.integers(1, 7))))
        v = rng.standard_normal(M.shape[0])
        ours = nnls(M, v)
        ref, _ = scipy_nnls(M, v)
        assert np.linalg.norm(M @ ours - v) <= np.linalg.norm(M @ ref - v) + 1e-10
        assert np.all(ours >= 0)
