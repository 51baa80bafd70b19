import numpy as np
import pytest

from fdhetnet.barrier import barrier_minimize, linear_constraints, stack_constraints


def _neg_log(w):
    def obj(x):
        if np.any(x <= 0):
            return np.inf, None, None
        return -float(w @ np.log(x)), -w / x, np.diag(w / x ** 2)
    return obj


def test_weighted_log_on_simplex():
    w = np.array([3.0, 1.0])
    cons = linear_constraints(np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]), np.array([1.0, 0.0, 0.0]))
    res = barrier_minimize(_neg_log(w), cons, np.array([0.2, 0.2]))
    np.testing.assert_allclose(res.x, [0.75, 0.25], atol=1e-6)
    assert res.converged and res.kkt_residual < 1e-6


def test_quadratic_constraint_projection():
    # min (x - 2)^2 + (y - 2)^2  s.t.  x^2 + y^2 <= 1  -> (1/sqrt2, 1/sqrt2)
    def obj(x):
        d = x - 2.0
        return float(d @ d), 2 * d, 2 * np.eye(2)

    def disk(x):
        return np.array([x @ x - 1.0]), 2 * x[None], lambda w: 2 * w[0] * np.eye(2)
    box = linear_constraints(np.vstack([np.eye(2), -np.eye(2)]), np.full(4, 5.0))
    res = barrier_minimize(obj, stack_constraints(disk, box), np.zeros(2))
    np.testing.assert_allclose(res.x, [2 ** -0.5] * 2, atol=1e-6)
    assert res.duals.shape == (5,)


def test_infeasible_start_raises():
    cons = linear_constraints(np.array([[1.0]]), np.array([1.0]))
    with pytest.raises(ValueError):
        barrier_minimize(lambda x: (float(x @ x), 2 * x, 2 * np.eye(1)), cons, np.array([2.0]))
