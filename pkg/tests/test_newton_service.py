import numpy as np
import pytest

from betaspec.core.exceptions import (
    LineSearchFailed,
    MaxIterationsExceeded,
    NotAdmissible,
    SingularHessian,
)
from betaspec.services import newton_service
from betaspec.services.newton_service import DualEvaluation


class LogBarrier:
    """f(x) = sum(c_i x_i - log x_i), minimized at x_i = 1 / c_i; admissible for x > 0"""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def evaluate(self, x, derivatives=True):
        if np.any(x <= 0.0):
            raise NotAdmissible("x must be positive")
        evaluation = DualEvaluation(value=float(np.dot(self.c, x) - np.sum(np.log(x))), margin=float(np.min(x)))
        if derivatives:
            evaluation.gradient = self.c - 1.0 / x
            evaluation.hessian = np.diag(1.0 / x ** 2)
        return evaluation

    def search_direction(self, x, evaluation):
        return newton_service.solve_least_squares(evaluation.hessian, -evaluation.gradient)


class NoDescent(LogBarrier):
    def evaluate(self, x, derivatives=True):
        evaluation = super().evaluate(x, derivatives)
        if not derivatives:
            evaluation.value = evaluation.value + 1.0
        return evaluation


class FlatValue(LogBarrier):
    """Constant value with a nonzero gradient: no step can decrease J"""

    def evaluate(self, x, derivatives=True):
        evaluation = super().evaluate(x, derivatives)
        evaluation.value = 1e6
        return evaluation


def test_converges_to_minimizer():
    problem = LogBarrier([2.0, 0.5, 4.0])
    trace = newton_service.damped_newton(problem, np.ones(3), eps=1e-12)
    assert trace.converged
    assert np.allclose(trace.x, [0.5, 2.0, 0.25], rtol=1e-10)
    assert trace.records[-1].step_size == 0.0
    assert trace.records[-1].gradient_norm <= 1e-12
    for before, after in zip(trace.records, trace.records[1:]):
        assert after.value <= before.value + 1e-12 * (1.0 + abs(before.value))
        if before.gradient_norm > 1e-5:
            assert after.value < before.value


def test_admissibility_halving():
    problem = LogBarrier([10.0])
    trace = newton_service.damped_newton(problem, np.array([1.0]), eps=1e-12)
    assert trace.converged
    assert trace.records[0].step_size < 1.0
    assert all(record.margin > 0.0 for record in trace.records)


def test_quadratic_terminal_convergence():
    trace = newton_service.damped_newton(LogBarrier([3.0, 0.2]), np.array([0.1, 1.0]), eps=1e-13)
    norms = [record.gradient_norm for record in trace.records]
    for previous, current in zip(norms[-4:-1], norms[-3:]):
        if previous < 1e-2:
            assert current <= 1e4 * previous ** 2 + 1e-11


def test_max_iterations_carries_trace():
    with pytest.raises(MaxIterationsExceeded) as excinfo:
        newton_service.damped_newton(LogBarrier([10.0, 10.0]), np.ones(2), eps=1e-14, max_iter=2)
    trace = excinfo.value.trace
    assert trace is not None
    assert len(trace.records) == 2
    assert not trace.converged


def test_line_search_failure():
    with pytest.raises(LineSearchFailed) as excinfo:
        newton_service.damped_newton(NoDescent([2.0]), np.array([1.0]), eps=1e-12, max_backtrack=5)
    assert excinfo.value.trace.records[-1].step_size == 0.0


def test_singular_system():
    with pytest.raises(SingularHessian):
        newton_service.solve_least_squares(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 1.0]))
    solution = newton_service.solve_least_squares(np.diag([2.0, 4.0]), np.array([1.0, 1.0]))
    assert np.allclose(solution, [0.5, 0.25])


def test_step_without_decrease_is_rejected():
    with pytest.raises(LineSearchFailed) as excinfo:
        newton_service.damped_newton(FlatValue([1.0]), np.array([1.1]), eps=1e-12)
    trace = excinfo.value.trace
    assert trace.iterations == 0
    assert np.array_equal(trace.x, [1.1])


def test_rounding_level_steps_use_the_gradient_norm():
    problem = LogBarrier([2.0, 0.5])
    x0 = np.array([0.5, 2.0]) * (1.0 + 1e-9)
    trace = newton_service.damped_newton(problem, x0, eps=1e-14)
    assert trace.converged
    assert trace.iterations >= 1
    assert np.allclose(trace.x, [0.5, 2.0], rtol=1e-13)
