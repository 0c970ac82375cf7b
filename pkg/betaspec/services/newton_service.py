"""Damped Newton iteration with backtracking, shared by both dual solvers.

A problem object supplies:

    evaluate(x, derivatives) -> DualEvaluation   (raises NotAdmissible outside the domain)
    search_direction(x, evaluation) -> np.ndarray

The loop halves the step until the trial point is admissible and satisfies
the Armijo condition J(x + t d) < J(x) + alpha t <g, d>, so J strictly decreases.
Once alpha |<g, d>| falls under the rounding level of J the step is accepted
when it lowers the gradient norm without raising J beyond that level.
"""
import logging
from typing import Any, Optional, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict

from betaspec.core.config import get_settings
from betaspec.core.exceptions import (
    LineSearchFailed,
    MaxIterationsExceeded,
    NotAdmissible,
    SingularHessian,
)
from betaspec.models.domain.solver import IterationRecord, NewtonTrace

logger = logging.getLogger(__name__)

# relative floor under which Armijo decreases are indistinguishable from rounding
ARMIJO_NOISE = 64.0 * np.finfo(float).eps


class DualEvaluation(BaseModel):
    """Value, optional derivatives and admissibility margin at a dual point"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    value: float
    margin: float
    gradient: Optional[np.ndarray] = None
    hessian: Optional[np.ndarray] = None
    cache: Any = None


class NewtonProblem(Protocol):
    def evaluate(self, x: np.ndarray, derivatives: bool = True) -> DualEvaluation:
        ...

    def search_direction(self, x: np.ndarray, evaluation: DualEvaluation) -> np.ndarray:
        ...


def damped_newton(
    problem: NewtonProblem,
    x0: np.ndarray,
    eps: Optional[float] = None,
    alpha: Optional[float] = None,
    max_iter: Optional[int] = None,
    max_backtrack: Optional[int] = None,
    label: str = "newton",
) -> NewtonTrace:
    """
    Minimize a convex dual functional from an admissible starting point

    Args:
        problem: dual problem exposing evaluate / search_direction
        x0: admissible starting coordinates
        eps: stop when the gradient norm is at most eps
        alpha: Armijo parameter in (0, 1/2)
        max_iter: maximum number of Newton steps
        max_backtrack: maximum number of step halvings per iteration
        label: name used in log messages

    Returns:
        NewtonTrace with per-iteration records and the final point

    Raises:
        MaxIterationsExceeded, LineSearchFailed: carry the partial trace
        NotAdmissible: x0 itself is not admissible
    """
    settings = get_settings()
    eps = settings.NEWTON_EPS if eps is None else eps
    alpha = settings.NEWTON_ALPHA if alpha is None else alpha
    max_iter = settings.NEWTON_MAX_ITER if max_iter is None else max_iter
    max_backtrack = settings.NEWTON_MAX_BACKTRACK if max_backtrack is None else max_backtrack

    x = np.array(x0, dtype=float)
    current = problem.evaluate(x, derivatives=True)
    trace = NewtonTrace(x=x.copy())

    for iteration in range(max_iter + 1):
        gradient_norm = float(np.linalg.norm(current.gradient))
        logger.debug(
            f"{label} iter={iteration} J={current.value:.15g} |g|={gradient_norm:.3e} "
            f"margin={current.margin:.3e}"
        )
        if gradient_norm <= eps:
            trace.records.append(
                IterationRecord(
                    iteration=iteration,
                    value=current.value,
                    gradient_norm=gradient_norm,
                    step_size=0.0,
                    margin=current.margin,
                )
            )
            trace.x = x.copy()
            trace.converged = True
            logger.info(f"{label} converged in {iteration} iterations, |g|={gradient_norm:.3e}")
            return trace
        if iteration == max_iter:
            break

        direction = problem.search_direction(x, current)
        slope = float(np.dot(current.gradient, direction))
        if not slope < 0.0:
            logger.warning(f"{label}: Newton direction is not a descent direction, using -gradient")
            direction = -current.gradient
            slope = -gradient_norm ** 2

        step = 1.0
        accepted = None
        # below the noise floor a decrease of J cannot be observed, so progress is
        # measured by the gradient norm instead
        floor = ARMIJO_NOISE * max(1.0, abs(current.value))
        resolvable = -alpha * slope > floor
        for _ in range(max_backtrack + 1):
            try:
                trial = problem.evaluate(x + step * direction, derivatives=not resolvable)
            except NotAdmissible:
                step *= 0.5
                continue
            if resolvable:
                sufficient = trial.value < current.value + alpha * step * slope
            else:
                sufficient = (
                    float(np.linalg.norm(trial.gradient)) < gradient_norm and trial.value <= current.value + floor
                )
            if sufficient:
                accepted = trial
                break
            step *= 0.5
        trace.records.append(
            IterationRecord(
                iteration=iteration,
                value=current.value,
                gradient_norm=gradient_norm,
                step_size=step if accepted is not None else 0.0,
                margin=current.margin,
            )
        )
        if accepted is None:
            trace.x = x.copy()
            raise LineSearchFailed(
                f"{label}: no acceptable step after {max_backtrack} halvings "
                f"(|g|={gradient_norm:.3e})",
                trace=trace,
            )
        x = x + step * direction
        current = accepted if accepted.gradient is not None else problem.evaluate(x, derivatives=True)

    trace.x = x.copy()
    raise MaxIterationsExceeded(
        f"{label}: gradient norm {float(np.linalg.norm(current.gradient)):.3e} above {eps:.1e} "
        f"after {max_iter} iterations",
        trace=trace,
    )


def solve_least_squares(
    system: np.ndarray,
    rhs: np.ndarray,
    rcond: Optional[float] = None,
    label: str = "newton",
) -> np.ndarray:
    """Least-squares solution of system @ a = rhs; rank below the column count is singular"""
    if rcond is None:
        rcond = get_settings().LSTSQ_RCOND
    solution, _, rank, singular_values = np.linalg.lstsq(system, rhs, rcond=rcond)
    if rank < system.shape[1]:
        raise SingularHessian(
            f"{label}: Newton system has rank {rank} < {system.shape[1]} "
            f"(singular values {singular_values[-1]:.3e} .. {singular_values[0]:.3e})"
        )
    return solution
