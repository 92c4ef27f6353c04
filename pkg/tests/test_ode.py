import math

import numpy as np
import pytest

from liefloquet.factorization import alpha_rhs
from liefloquet.models import kapitza, paul_trap
from liefloquet.ode import IntegrationError, IvpProblem, integrate, step_doubling_verify


def rk4_fixed(f, t0, t1, y0, steps):
    """Classical RK4 on a uniform grid, returns the final state."""
    h = (t1 - t0) / steps
    y = np.array(y0, dtype=float)
    t = t0
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def mathieu(a, q):
    return lambda v, y: np.array([y[1], -(a - 2 * q * math.cos(2 * v)) * y[0]])


def test_constant_solution():
    sol = integrate(IvpProblem(lambda t, y: np.zeros(2), (0.0, 3.0), [1.5, -2.0]))
    assert sol.stats.rejected == 0
    np.testing.assert_array_equal(sol(np.linspace(0, 3, 17)), np.tile([1.5, -2.0], (17, 1)))


def test_exponential():
    sol = integrate(IvpProblem(lambda t, y: y, (0.0, 1.0), [1.0], 1e-10, 1e-10))
    assert abs(sol.y_final[0] - math.e) <= 1e-9


def test_mathieu_without_modulation_is_harmonic():
    sol = integrate(IvpProblem(mathieu(1.0, 0.0), (0.0, math.pi), [1.0, 0.0]))
    assert abs(sol.y_final[0] - math.cos(math.pi)) <= 1e-9


def test_nodes_are_reproduced_exactly():
    sol = integrate(IvpProblem(mathieu(1.3, 0.4), (0.0, 5.0), [1.0, 0.0], 1e-8, 1e-8))
    np.testing.assert_array_equal(sol(sol.t), sol.y)
    assert sol.t[0] == 0.0 and sol.t[-1] == 5.0


def test_dense_output_is_continuous_and_differentiable():
    f = mathieu(1.3, 0.4)
    sol = integrate(IvpProblem(f, (0.0, 5.0), [1.0, 0.0], 1e-9, 1e-9))
    inner = sol.t[1:-1]
    eps = 1e-13
    jump = np.abs(sol(inner + eps) - sol(inner - eps))
    assert jump.max() <= 1e-9
    # the interpolant derivative at nodes tracks the vector field
    fs = np.array([f(t, y) for t, y in zip(sol.t, sol.y)])
    np.testing.assert_allclose(sol.derivative(sol.t), fs, atol=1e-6)


def test_evaluation_outside_interval_raises():
    sol = integrate(IvpProblem(lambda t, y: -y, (0.0, 1.0), [1.0]))
    with pytest.raises(ValueError):
        sol(1.5)


def test_reproducible_bitwise():
    prob = IvpProblem(mathieu(2.0, 0.7), (0.0, 4.0), [0.3, 1.0], 1e-10, 1e-10)
    a, b = integrate(prob), integrate(prob)
    np.testing.assert_array_equal(a.t, b.t)
    np.testing.assert_array_equal(a.y, b.y)


def test_tightening_tolerance_reduces_error():
    f = mathieu(1.7, 0.6)
    ref = rk4_fixed(f, 0.0, math.pi, [1.0, 0.0], 10000)
    errs = []
    for tol in (1e-6, 1e-8, 1e-10):
        sol = integrate(IvpProblem(f, (0.0, math.pi), [1.0, 0.0], tol, tol))
        errs.append(np.max(np.abs(sol.y_final - ref)))
    assert errs[0] > errs[1] > errs[2]


def test_blow_up_reports_time():
    with pytest.raises(IntegrationError) as info:
        integrate(IvpProblem(lambda t, y: y * y, (0.0, 2.0), [1.0]))
    assert 0.99 < info.value.t <= 1.0


def test_non_finite_rhs_reports_time():
    def f(t, y):
        return np.array([np.nan]) if t > 0.5 else np.array([1.0])

    with pytest.raises(IntegrationError, match="non-finite") as info:
        integrate(IvpProblem(f, (0.0, 1.0), [0.0]))
    assert info.value.t >= 0.0


@pytest.mark.parametrize("kwargs", [
    dict(t_span=(1.0, 1.0)), dict(t_span=(1.0, 0.0)), dict(rel_tol=1e-15), dict(abs_tol=0.1),
])
def test_problem_validation(kwargs):
    base = dict(rhs=lambda t, y: y, t_span=(0.0, 1.0), y0=[1.0])
    with pytest.raises(ValueError):
        IvpProblem(**{**base, **kwargs})


def test_step_doubling_trivial():
    assert step_doubling_verify(IvpProblem(lambda t, y: np.zeros(1), (0.0, 1.0), [2.0])) == 0.0


@pytest.mark.parametrize("factory", [paul_trap, kapitza], ids=["paul-trap", "kapitza"])
@pytest.mark.parametrize("tol", [1e-10, 1e-12])
def test_step_doubling_alpha_flow(factory, tol):
    p = factory()
    prob = IvpProblem(lambda t, a: alpha_rhs(p.algebra, a, p.drive(t)), (0.0, p.T),
                      np.zeros(p.algebra.n), tol, tol)
    assert step_doubling_verify(prob) < 10 * tol
