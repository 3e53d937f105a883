"""The subgradient, gradient, and accelerated gradient methods.

Each run records its complete history: iterates x_k, the oracle outputs g_k
at the query point of step k, the step sizes t_k, and (for the accelerated
method) the extrapolation points y_k and momentum parameters theta_k.  A run
of horizon K stores x_0..x_K; the step array also has K+1 entries because
t_K enters the averaged objective sums even though it drives no update.

Runs are deterministic: identical inputs produce bitwise-identical traces,
and the stored iterates are exactly the values the update formulas computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import OracleError
from .problems import ProblemInstance, as_point

__all__ = [
    "StepSchedule",
    "MethodTrace",
    "theta_next",
    "theta_sequence",
    "run_subgradient",
    "run_gradient",
    "run_accelerated",
]

# Full-history traces are kept in memory; desk scale only.
MAX_TRACE_SCALARS = 10**8


@dataclass(frozen=True)
class StepSchedule:
    """Step-size schedule for the subgradient/gradient method.

    Kinds:
      constant      t_i = t
      horizon_sqrt  t_i = 1/sqrt(K+1), valid only for the fixed horizon K
                    it was created with (the schedule is not anytime-safe)
      inverse_L     t_i = 1/L, L taken from the problem
      explicit      user-supplied list of K+1 positive steps
    """

    kind: str
    t: Optional[float] = None
    horizon: Optional[int] = None
    values: Optional[tuple[float, ...]] = None

    @classmethod
    def constant(cls, t: float) -> "StepSchedule":
        if not (t > 0 and math.isfinite(t)):
            raise ValueError("constant step must be positive and finite")
        return cls(kind="constant", t=float(t))

    @classmethod
    def horizon_sqrt(cls, horizon: int) -> "StepSchedule":
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        return cls(kind="horizon_sqrt", horizon=int(horizon))

    @classmethod
    def inverse_L(cls) -> "StepSchedule":
        return cls(kind="inverse_L")

    @classmethod
    def explicit(cls, values: Sequence[float]) -> "StepSchedule":
        vals = tuple(float(v) for v in values)
        if not vals or any(not (v > 0 and math.isfinite(v)) for v in vals):
            raise ValueError("explicit steps must be positive and finite")
        return cls(kind="explicit", values=vals)

    def resolve(self, K: int, lipschitz_grad: Optional[float] = None) -> np.ndarray:
        """The K+1 steps t_0..t_K for a run of horizon K."""
        if K < 0:
            raise ValueError("horizon K must be >= 0")
        if self.kind == "constant":
            return np.full(K + 1, self.t)
        if self.kind == "horizon_sqrt":
            if self.horizon != K:
                raise ValueError(
                    f"horizon_sqrt schedule was fixed for K={self.horizon}, "
                    f"refusing to run with K={K}"
                )
            return np.full(K + 1, 1.0 / math.sqrt(K + 1))
        if self.kind == "inverse_L":
            if lipschitz_grad is None:
                raise ValueError("inverse_L schedule needs the problem's gradient Lipschitz constant")
            return np.full(K + 1, 1.0 / lipschitz_grad)
        if self.kind == "explicit":
            if len(self.values) != K + 1:
                raise ValueError(f"explicit schedule has {len(self.values)} steps, need {K + 1}")
            return np.array(self.values)
        raise ValueError(f"unknown schedule kind {self.kind!r}")


def theta_next(theta_k: float) -> float:
    """The momentum parameter after theta_k.

    Unique positive root of theta^2 + theta_k^2 * theta - theta_k^2 = 0,
    evaluated in the cancellation-free form 2*theta_k/(sqrt(theta_k^2+4)+theta_k).
    Always lies in (0, 1).
    """
    if not (0.0 < theta_k <= 1.0):
        raise ValueError(f"theta_k must be in (0, 1], got {theta_k}")
    return 2.0 * theta_k / (math.sqrt(theta_k * theta_k + 4.0) + theta_k)


def theta_sequence(K: int) -> np.ndarray:
    """theta_0..theta_K with theta_0 = 1 and the defining recurrence."""
    if K < 0:
        raise ValueError("K must be >= 0")
    theta = np.empty(K + 1)
    theta[0] = 1.0
    for k in range(K):
        theta[k + 1] = theta_next(theta[k])
    return theta


@dataclass(frozen=True, eq=False)
class MethodTrace:
    """Complete history of one run.

    x[k] is the k-th iterate; g[k] the oracle output at the query point of
    step k (x_k for subgradient/gradient, y_k for the accelerated method);
    t[k] the k-th step size.  y and theta are populated for accelerated runs
    only.  Recurrences hold exactly as stored:

      subgradient/gradient  x[k+1] == x[k] - t[k]*g[k]
      accelerated           x[k+1] == y[k] - t[k]*g[k]
                            y[k+1] == x[k+1] + (theta[k+1]*(1-theta[k])/theta[k])*(x[k+1]-x[k])
    """

    method: str
    problem_id: str
    x: np.ndarray
    g: np.ndarray
    t: np.ndarray
    y: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("x", "g", "t", "y", "theta"):
            arr = getattr(self, name)
            if arr is not None:
                arr.flags.writeable = False

    @property
    def horizon(self) -> int:
        return self.x.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.x.shape[1]


def _check_budget(K: int, dim: int):
    if (K + 1) * dim > MAX_TRACE_SCALARS:
        raise ValueError(
            f"trace of {(K + 1) * dim} scalars exceeds the {MAX_TRACE_SCALARS:.0e} budget"
        )


def _query(p: ProblemInstance, x: np.ndarray, k: int) -> np.ndarray:
    """Value/subgradient oracle call with a finite-output check."""
    with np.errstate(over="ignore", invalid="ignore"):
        value = p.value(x)
        g = np.asarray(p.subgradient(x), dtype=float)
    if not math.isfinite(value):
        raise OracleError(f"objective value is not finite at iteration {k}", iteration=k)
    if not np.all(np.isfinite(g)):
        raise OracleError(f"subgradient is not finite at iteration {k}", iteration=k)
    return g


def _run_descent(p: ProblemInstance, x0, schedule: StepSchedule, K: int, method: str) -> MethodTrace:
    x0 = as_point(x0, p.dim, "x0")
    _check_budget(K, p.dim)
    t = schedule.resolve(K, p.lipschitz_grad)
    x = np.empty((K + 1, p.dim))
    g = np.empty((K + 1, p.dim))
    x[0] = x0
    for k in range(K + 1):
        g[k] = _query(p, x[k], k)
        if k < K:
            x[k + 1] = x[k] - t[k] * g[k]
    return MethodTrace(method=method, problem_id=p.problem_id, x=x, g=g, t=t)


def run_subgradient(
    p: ProblemInstance, x0, schedule: StepSchedule, K: int
) -> MethodTrace:
    """x_{k+1} = x_k - t_k g_k with g_k a subgradient of f at x_k."""
    return _run_descent(p, x0, schedule, K, "subgradient")


def run_gradient(p: ProblemInstance, x0, K: int) -> MethodTrace:
    """The subgradient method with the fixed smooth step t_k = 1/L.

    Descent is monotone: f(x_{k+1}) <= f(x_k) up to roundoff.
    """
    if p.lipschitz_grad is None:
        raise ValueError(f"{p.problem_id} has no gradient Lipschitz constant")
    if not p.is_differentiable:
        raise ValueError(f"{p.problem_id} is not differentiable")
    return _run_descent(p, x0, StepSchedule.inverse_L(), K, "gradient")


def run_accelerated(p: ProblemInstance, x0, K: int) -> MethodTrace:
    """Momentum method: step from y_k, then extrapolate.

        x_{k+1} = y_k - (1/L) grad f(y_k)
        y_{k+1} = x_{k+1} + (theta_{k+1}(1-theta_k)/theta_k)(x_{k+1} - x_k)

    with y_0 = x_0, theta_0 = 1.  The first step coincides with the plain
    gradient step.
    """
    if p.lipschitz_grad is None:
        raise ValueError(f"{p.problem_id} has no gradient Lipschitz constant")
    if not p.is_differentiable:
        raise ValueError(f"{p.problem_id} is not differentiable")
    x0 = as_point(x0, p.dim, "x0")
    _check_budget(K, p.dim)
    t = np.full(K + 1, 1.0 / p.lipschitz_grad)
    x = np.empty((K + 1, p.dim))
    y = np.empty((K + 1, p.dim))
    g = np.empty((K + 1, p.dim))
    theta = np.empty(K + 1)
    x[0] = x0
    y[0] = x0
    theta[0] = 1.0
    for k in range(K + 1):
        g[k] = _query(p, y[k], k)
        if k < K:
            x[k + 1] = y[k] - t[k] * g[k]
            theta[k + 1] = theta_next(theta[k])
            coef = theta[k + 1] * (1.0 - theta[k]) / theta[k]
            y[k + 1] = x[k + 1] + coef * (x[k + 1] - x[k])
    return MethodTrace(
        method="accelerated", problem_id=p.problem_id, x=x, g=g, t=t, y=y, theta=theta
    )
