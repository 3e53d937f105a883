"""Convex objectives with value, subgradient, and conjugate oracles.

Instances are immutable and their oracles are pure functions, so they can be
shared freely across threads.  Four families are cataloged:

* ``quad``    quadratic  f(x) = (1/2)<x, A x> + <b, x>  with A symmetric PD
* ``norm``    scaled Euclidean norm  f(x) = G ||x||
* ``lse``     log-sum-exp  f(x) = log sum_i exp(x_i)
* ``maxaff``  piecewise-linear maximum of affine pieces  f(x) = max_i <a_i, x> + b_i

String identifiers of the form ``family:key=val:key=val`` address the catalog
(see :func:`from_id`; full grammar documented in :mod:`ccfom.cli`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import ConfigError

__all__ = [
    "ProblemInstance",
    "as_point",
    "fenchel_gap",
    "make_quadratic",
    "make_scaled_norm",
    "make_log_sum_exp",
    "make_max_affine",
    "random_max_affine",
    "from_id",
]

# Maximum accepted condition number for the quadratic family: beyond this the
# conjugate (which needs A^{-1}) is numerically meaningless.
MAX_QUAD_CONDITION = 1e12

# Indicator-type conjugate domains get a hair of slack: dual vectors that are
# mathematically inside the domain can land a few ulp outside after long
# floating-point accumulations, and must not be reported as +inf.
_BALL_SLACK = 1e-12
_SIMPLEX_TOL = 1e-9

# Face enumeration guard for the least-norm subgradient at tie points.
_MAX_ACTIVE_PIECES = 12


def as_point(values, dim: Optional[int] = None, name: str = "point") -> np.ndarray:
    """Validate a vector: 1-D, float64, finite; returned read-only.

    Scalars are promoted to 1-D.  Raises ValueError on non-finite entries or
    a dimension mismatch.
    """
    x = np.array(values, dtype=float, copy=True)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {x.shape}")
    if x.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite coordinates")
    if dim is not None and x.size != dim:
        raise ValueError(f"{name} has dimension {x.size}, expected {dim}")
    x.flags.writeable = False
    return x


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A convex objective together with its analytic side information.

    ``value``/``subgradient``/``conjugate`` are the three oracles; the
    conjugate may return +inf outside its domain but never -inf.  At least
    one of ``lipschitz_f`` (G, bound on subgradient norms) and
    ``lipschitz_grad`` (L, gradient Lipschitz constant) must be present.

    ``project_to_solution`` maps a point to the designated reference point
    used by bound checks: the nearest minimizer when one exists, otherwise a
    documented surrogate (see ``solution_provenance``).
    """

    problem_id: str
    dim: int
    value: Callable[[np.ndarray], float]
    subgradient: Callable[[np.ndarray], np.ndarray]
    conjugate: Callable[[np.ndarray], float]
    value_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lipschitz_f: Optional[float] = None
    lipschitz_grad: Optional[float] = None
    optimal_value: Optional[float] = None
    project_to_solution: Optional[Callable[[np.ndarray], np.ndarray]] = None
    solution_provenance: str = "unavailable"
    is_differentiable: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.lipschitz_f is None and self.lipschitz_grad is None:
            raise ValueError("at least one Lipschitz constant must be provided")
        for name in ("lipschitz_f", "lipschitz_grad"):
            c = getattr(self, name)
            if c is not None and not (c > 0 and math.isfinite(c)):
                raise ValueError(f"{name} must be positive and finite")

    def distance_to_solution(self, x) -> Optional[float]:
        """||x - reference point||, or None when no reference is available."""
        if self.project_to_solution is None:
            return None
        x = as_point(x, self.dim, "x")
        return float(np.linalg.norm(x - self.project_to_solution(x)))

    def gradient(self, x) -> np.ndarray:
        if not self.is_differentiable:
            raise ValueError(f"{self.problem_id} is not differentiable")
        return self.subgradient(x)


def fenchel_gap(p: ProblemInstance, z, x) -> float:
    """f*(z) + f(x) - <z, x>.

    Nonnegative for every pair, zero exactly when z is a subgradient of f
    at x.  Returns +inf when z lies outside dom(f*).
    """
    z = as_point(z, p.dim, "z")
    x = as_point(x, p.dim, "x")
    return p.conjugate(z) + p.value(x) - float(z @ x)


# ---------------------------------------------------------------------------
# quadratic family


def make_quadratic(A, b=None, problem_id: Optional[str] = None) -> ProblemInstance:
    """f(x) = (1/2)<x, A x> + <b, x> with A symmetric positive definite.

    The conjugate f*(z) = (1/2)<z - b, A^{-1}(z - b)> is evaluated through a
    Cholesky factorization computed once here.  Matrices with condition
    number above ``MAX_QUAD_CONDITION`` are rejected.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be a square matrix")
    n = A.shape[0]
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    if not np.all(np.isfinite(A)):
        raise ValueError("A has non-finite entries")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * (1.0 + scale)):
        raise ValueError("A must be symmetric")
    b = np.zeros(n) if b is None else np.array(as_point(b, n, "b"))

    eigs = np.linalg.eigvalsh(A)
    if eigs[0] <= 0.0:
        raise ValueError("A must be positive definite")
    if eigs[-1] / eigs[0] > MAX_QUAD_CONDITION:
        raise ValueError(
            f"condition number {eigs[-1] / eigs[0]:.3e} exceeds {MAX_QUAD_CONDITION:.0e}"
        )
    factor = scipy.linalg.cho_factor(A)
    minimizer = scipy.linalg.cho_solve(factor, -b)
    minimizer.flags.writeable = False

    def value(x):
        return float(0.5 * (x @ A @ x) + b @ x)

    def grad(x):
        return A @ x + b

    def conjugate(z):
        d = z - b
        return float(0.5 * (d @ scipy.linalg.cho_solve(factor, d)))

    def value_batch(X):
        # columnwise accumulation: fast on both C- and F-ordered batches
        quads = (A @ X.T) * X.T
        out = 0.5 * quads[0]
        for j in range(1, n):
            out += 0.5 * quads[j]
        if np.any(b):
            out += X @ b
        return out

    return ProblemInstance(
        problem_id=problem_id or f"quad:custom:dim={n}",
        dim=n,
        value=value,
        subgradient=grad,
        conjugate=conjugate,
        value_batch=value_batch,
        lipschitz_grad=float(eigs[-1]),
        optimal_value=value(minimizer),
        project_to_solution=lambda x: minimizer,
        solution_provenance="closed-form minimizer -A^{-1} b",
        is_differentiable=True,
    )


# ---------------------------------------------------------------------------
# scaled norm family


def make_scaled_norm(G: float, dim: int, problem_id: Optional[str] = None) -> ProblemInstance:
    """f(x) = G ||x||, the canonical G-Lipschitz nonsmooth objective.

    The subgradient at 0 is the least-norm element of the G-ball, i.e. 0.
    The conjugate is the indicator of the closed G-ball, with a relative
    boundary slack so dual vectors of norm G (up to roundoff) stay inside.
    """
    if not (G > 0 and math.isfinite(G)):
        raise ValueError("G must be positive and finite")
    G = float(G)
    zero = np.zeros(dim)
    zero.flags.writeable = False

    def value(x):
        return G * float(np.linalg.norm(x))

    def subgradient(x):
        nx = float(np.linalg.norm(x))
        if nx == 0.0:
            return np.zeros(dim)
        return (G / nx) * x

    def conjugate(z):
        if float(np.linalg.norm(z)) <= G * (1.0 + _BALL_SLACK):
            return 0.0
        return math.inf

    def value_batch(X):
        acc = X[:, 0] ** 2
        for j in range(1, dim):
            acc += X[:, j] ** 2
        return G * np.sqrt(acc)

    return ProblemInstance(
        problem_id=problem_id or f"norm:G={G:g}:dim={dim}",
        dim=dim,
        value=value,
        subgradient=subgradient,
        conjugate=conjugate,
        value_batch=value_batch,
        lipschitz_f=G,
        optimal_value=0.0,
        project_to_solution=lambda x: zero,
        solution_provenance="unique minimizer at the origin",
        is_differentiable=False,
    )


# ---------------------------------------------------------------------------
# log-sum-exp family


def make_log_sum_exp(dim: int, problem_id: Optional[str] = None) -> ProblemInstance:
    """f(x) = log sum_i exp(x_i); gradient is the softmax, L = 1.

    The conjugate is negative entropy on the probability simplex and +inf
    off it (membership tested with a small tolerance: dual vectors built as
    convex combinations of softmax outputs sum to one only up to roundoff).

    The objective has no minimizer: it decreases without bound along the
    -(1,...,1) direction.  Bound checks therefore use the projection onto
    the diagonal {x : x_1 = ... = x_n} as their reference point, which is
    where gradient trajectories flatten out.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")

    def value(x):
        m = float(np.max(x))
        return m + math.log(float(np.sum(np.exp(x - m))))

    def grad(x):
        e = np.exp(x - np.max(x))
        return e / e.sum()

    def conjugate(z):
        if abs(float(np.sum(z)) - 1.0) > _SIMPLEX_TOL or np.any(z < -_SIMPLEX_TOL):
            return math.inf
        zc = np.clip(z, 0.0, None)
        pos = zc[zc > 0.0]
        return float(np.sum(pos * np.log(pos)))

    def value_batch(X):
        m = np.array(X[:, 0])
        for j in range(1, dim):
            np.maximum(m, X[:, j], out=m)
        acc = np.exp(X[:, 0] - m)
        for j in range(1, dim):
            acc += np.exp(X[:, j] - m)
        return m + np.log(acc)

    def project(x):
        return np.full(dim, float(np.mean(x)))

    return ProblemInstance(
        problem_id=problem_id or f"lse:dim={dim}",
        dim=dim,
        value=value,
        subgradient=grad,
        conjugate=conjugate,
        value_batch=value_batch,
        lipschitz_grad=1.0,
        optimal_value=None,
        project_to_solution=project,
        solution_provenance=(
            "projection onto the diagonal {x: all coordinates equal}; the "
            "objective is unbounded below, so bounds are checked against "
            "this reference line instead of a minimizer"
        ),
        is_differentiable=True,
    )


# ---------------------------------------------------------------------------
# max-of-affine family


def _least_norm_in_hull(rows: np.ndarray) -> np.ndarray:
    """Least-norm point of conv{rows}, by enumerating faces of the simplex.

    Exact up to linear-algebra roundoff for up to _MAX_ACTIVE_PIECES rows;
    beyond the guard, falls back to the shortest single row (still a valid
    subgradient, just not the least-norm one).
    """
    m = rows.shape[0]
    if m == 1:
        return rows[0].copy()
    if m > _MAX_ACTIVE_PIECES:
        return rows[int(np.argmin(np.linalg.norm(rows, axis=1)))].copy()
    best = None
    best_norm2 = math.inf
    for mask in range(1, 2**m):
        idx = [i for i in range(m) if mask >> i & 1]
        sub = rows[idx]
        s = len(idx)
        # minimize ||sub^T lam||^2 subject to sum(lam) = 1 (KKT system)
        kkt = np.zeros((s + 1, s + 1))
        kkt[:s, :s] = 2.0 * (sub @ sub.T)
        kkt[:s, s] = 1.0
        kkt[s, :s] = 1.0
        rhs = np.zeros(s + 1)
        rhs[s] = 1.0
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        lam = sol[:s]
        if np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-9:
            continue
        g = sub.T @ lam
        n2 = float(g @ g)
        if n2 < best_norm2 - 1e-18:
            best_norm2 = n2
            best = g
    if best is None:
        best = rows[int(np.argmin(np.linalg.norm(rows, axis=1)))].copy()
    return best


def make_max_affine(A, b, problem_id: Optional[str] = None) -> ProblemInstance:
    """f(x) = max_i <a_i, x> + b_i over the rows a_i of A.

    G = max_i ||a_i||.  The conjugate is evaluated by linear programming
    over the convex-combination weights: f*(z) = min{-<b, lam> : A^T lam = z,
    lam in simplex}, +inf when z is outside conv{a_i}.  The optimal value
    and one minimizer (an LP vertex; the optimal set may be larger) are
    computed at construction when the objective is bounded below.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("A must be a matrix (one affine piece per row)")
    m, n = A.shape
    b = np.array(as_point(b, m, "b"))
    if m < 1:
        raise ValueError("need at least one affine piece")
    G = float(np.max(np.linalg.norm(A, axis=1)))
    if G <= 0.0:
        raise ValueError("all pieces are constant; objective has no slope")

    def value(x):
        return float(np.max(A @ x + b))

    def value_batch(X):
        pieces = A @ X.T  # (m, N): rows contiguous for the max pass
        pieces += b[:, None]
        out = pieces[0]
        for i in range(1, m):
            np.maximum(out, pieces[i], out=out)
        return out

    def subgradient(x):
        vals = A @ x + b
        top = float(np.max(vals))
        active = np.flatnonzero(vals >= top - 1e-12 * (1.0 + abs(top)))
        if active.size == 1:
            return A[active[0]].copy()
        return _least_norm_in_hull(A[active])

    def conjugate(z):
        # min -<b, lam>  s.t.  A^T lam = z, 1^T lam = 1, lam >= 0
        a_eq = np.vstack([A.T, np.ones((1, m))])
        b_eq = np.concatenate([z, [1.0]])
        res = scipy.optimize.linprog(-b, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status == 2:  # infeasible: z outside conv{a_i}
            return math.inf
        if not res.success:
            raise RuntimeError(f"conjugate LP failed: {res.message}")
        return float(res.fun)

    # min_x max_i <a_i, x> + b_i as an LP in (x, t)
    c = np.zeros(n + 1)
    c[n] = 1.0
    a_ub = np.hstack([A, -np.ones((m, 1))])
    res = scipy.optimize.linprog(
        c, A_ub=a_ub, b_ub=-b, bounds=[(None, None)] * (n + 1), method="highs"
    )
    if res.success:
        minimizer = np.array(res.x[:n])
        minimizer.flags.writeable = False
        optimal_value = float(res.fun)
        project = lambda x: minimizer  # noqa: E731
        provenance = "LP vertex minimizer (one element of the optimal set)"
    elif res.status == 3:  # unbounded below
        optimal_value = None
        project = None
        provenance = "objective unbounded below"
    else:
        raise RuntimeError(f"optimum LP failed: {res.message}")

    return ProblemInstance(
        problem_id=problem_id or f"maxaff:custom:dim={n}:pieces={m}",
        dim=n,
        value=value,
        subgradient=subgradient,
        conjugate=conjugate,
        value_batch=value_batch,
        lipschitz_f=G,
        optimal_value=optimal_value,
        project_to_solution=project,
        solution_provenance=provenance,
        is_differentiable=False,
    )


def random_max_affine(dim: int, pieces: int, seed: int, problem_id: Optional[str] = None) -> ProblemInstance:
    """Seeded max-of-affine instance that is guaranteed bounded below.

    pieces - 1 slopes are drawn standard normal and the last is their
    negated sum, so 0 lies in the convex hull of the slopes.
    """
    if pieces < 2:
        raise ValueError("need at least two pieces")
    rng = np.random.default_rng([314159, seed])
    A = rng.standard_normal((pieces - 1, dim))
    A = np.vstack([A, -A.sum(axis=0, keepdims=True)])
    b = 0.5 * rng.standard_normal(pieces)
    return make_max_affine(A, b, problem_id=problem_id)


# ---------------------------------------------------------------------------
# catalog identifiers


def _parse_params(parts: list[str], pid: str) -> dict[str, str]:
    params = {}
    for part in parts:
        if "=" not in part:
            raise ConfigError(f"bad parameter {part!r} in problem id {pid!r}")
        key, _, val = part.partition("=")
        if not key or not val:
            raise ConfigError(f"bad parameter {part!r} in problem id {pid!r}")
        if key in params:
            raise ConfigError(f"duplicate parameter {key!r} in problem id {pid!r}")
        params[key] = val
    return params


def _floats(val: str, pid: str) -> list[float]:
    try:
        return [float(v) for v in val.split(",")]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {val!r} in {pid!r}") from None


def _int(val: str, pid: str) -> int:
    try:
        return int(val)
    except ValueError:
        raise ConfigError(f"expected an integer, got {val!r} in {pid!r}") from None


def from_id(pid: str) -> ProblemInstance:
    """Build a catalog instance from a ``family:key=val:...`` identifier."""
    pid = pid.strip()
    if not pid:
        raise ConfigError("empty problem id")
    family, *parts = pid.split(":")
    params = _parse_params(parts, pid)

    def take(allowed):
        extra = set(params) - set(allowed)
        if extra:
            raise ConfigError(f"unknown parameters {sorted(extra)} in problem id {pid!r}")

    try:
        if family == "quad":
            take({"diag", "b"})
            if "diag" not in params:
                raise ConfigError(f"quad needs diag=... in {pid!r}")
            diag = _floats(params["diag"], pid)
            b = _floats(params["b"], pid) if "b" in params else None
            return make_quadratic(np.diag(diag), b, problem_id=pid)
        if family == "norm":
            take({"G", "dim"})
            G = _floats(params["G"], pid)[0] if "G" in params else 1.0
            dim = _int(params["dim"], pid) if "dim" in params else 1
            return make_scaled_norm(G, dim, problem_id=pid)
        if family == "lse":
            take({"dim"})
            dim = _int(params["dim"], pid) if "dim" in params else 2
            return make_log_sum_exp(dim, problem_id=pid)
        if family == "maxaff":
            if "abs" in params:
                take({"abs"})
                G = _floats(params["abs"], pid)[0]
                return make_max_affine([[G], [-G]], [0.0, 0.0], problem_id=pid)
            take({"dim", "pieces", "seed"})
            dim = _int(params["dim"], pid) if "dim" in params else 2
            pieces = _int(params["pieces"], pid) if "pieces" in params else dim + 2
            seed = _int(params["seed"], pid) if "seed" in params else 0
            return random_max_affine(dim, pieces, seed, problem_id=pid)
    except ValueError as exc:
        raise ConfigError(f"cannot build problem {pid!r}: {exc}") from exc
    raise ConfigError(f"unknown problem family {family!r} in {pid!r}")
