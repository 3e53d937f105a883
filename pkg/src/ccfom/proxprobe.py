"""Empirical probe of the conjectured certificate for proximal iterations.

For composite objectives f = phi + psi (phi smooth, psi with a computable
proximal map) the momentum method extends by replacing the gradient step
with

    x_{k+1} = prox_{t_k}(y_k - t_k grad phi(y_k)),

and the conjectured replacement for the certificate value is

    -phi*(z_k) + min_u { psi(u) + <z_k, u> + (mu_k/2) ||u - x0||^2 }.

IMPORTANT: this is a conjecture, not a theorem.  No construction of the
dual sequences is known for the composite case; the probe reuses the
accelerated recipe verbatim with g_k = grad phi(y_k) feeding the
z-recursion (the minimal analogue), and that choice is recorded in every
output.  A violation is a reportable finding, never a test failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .certificates import DualCertificate, build_certificate, _quad_min_tail
from .errors import OracleError
from .methods import MethodTrace, theta_next
from .problems import ProblemInstance, as_point, make_quadratic
from .tolerances import DEFAULT_TOLERANCES, Tolerances

__all__ = [
    "Regularizer",
    "CompositeProblem",
    "make_l1",
    "make_box",
    "make_zero",
    "run_proximal_accelerated",
    "conjectured_certificate",
    "ProbeResult",
    "probe_instance",
    "lasso_instance",
    "lasso_suite",
    "ProbeSummary",
    "Z_RECURSION_NOTE",
]

Z_RECURSION_NOTE = (
    "CONJECTURE probe: z-recursion fed with grad of the smooth part at y_k "
    "(no composite construction is known; this is the minimal analogue)"
)


@dataclass(frozen=True, eq=False)
class Regularizer:
    """A simple nonsmooth term psi with closed-form proximal machinery.

    ``inner_min(z, mu, x0)`` returns (value, argmin) of
    min_u psi(u) + <z, u> + (mu/2)||u - x0||^2, the quantity the conjectured
    certificate needs.
    """

    kind: str
    label: str
    value: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray]
    inner_min: Callable[[np.ndarray, float, np.ndarray], tuple[float, np.ndarray]]


def soft_threshold(v: np.ndarray, amount: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - amount, 0.0)


def make_l1(lam: float) -> Regularizer:
    """psi(x) = lam * ||x||_1; prox is componentwise soft-thresholding."""
    if not (lam > 0 and math.isfinite(lam)):
        raise ValueError("lam must be positive and finite")
    lam = float(lam)

    def value(x):
        return lam * float(np.sum(np.abs(x)))

    def prox(x, t):
        return soft_threshold(x, lam * t)

    def inner_min(z, mu, x0):
        u = soft_threshold(x0 - z / mu, lam / mu)
        val = value(u) + float(z @ u) + 0.5 * mu * float(np.sum((u - x0) ** 2))
        return val, u

    return Regularizer(kind="l1", label=f"l1:lam={lam:g}", value=value, prox=prox, inner_min=inner_min)


def make_box(lo, hi) -> Regularizer:
    """psi = indicator of the box [lo, hi]; prox is the projection.

    Scalar bounds broadcast against vector ones.
    """
    lo, hi = np.broadcast_arrays(np.atleast_1d(np.asarray(lo, float)),
                                 np.atleast_1d(np.asarray(hi, float)))
    lo, hi = np.array(as_point(lo)), np.array(as_point(hi))
    if not np.all(lo < hi):
        raise ValueError("lo must be componentwise below hi")

    def value(x):
        if np.all(x >= lo) and np.all(x <= hi):
            return 0.0
        return math.inf

    def prox(x, t):
        return np.clip(x, lo, hi)

    def inner_min(z, mu, x0):
        u = np.clip(x0 - z / mu, lo, hi)
        val = float(z @ u) + 0.5 * mu * float(np.sum((u - x0) ** 2))
        return val, u

    label = f"box:lo={','.join(f'{v:g}' for v in lo)}:hi={','.join(f'{v:g}' for v in hi)}"
    return Regularizer(kind="box", label=label, value=value, prox=prox, inner_min=inner_min)


def make_zero() -> Regularizer:
    """psi identically zero: the degenerate composite, prox is the identity.

    Its inner minimum is evaluated with exactly the certificate-value
    arithmetic so the degenerate probe reproduces the plain certificate
    bitwise.
    """

    def value(x):
        return 0.0

    def prox(x, t):
        return x

    def inner_min(z, mu, x0):
        return _quad_min_tail(z, mu, x0), x0 - z / mu

    return Regularizer(kind="zero", label="zero", value=value, prox=prox, inner_min=inner_min)


def regularizer_from_id(rid: str) -> Regularizer:
    """Parse ``zero``, ``l1:lam=L``, or ``box:lo=...:hi=...``."""
    from .errors import ConfigError

    rid = rid.strip()
    family, *parts = rid.split(":")
    params = {}
    for part in parts:
        key, _, val = part.partition("=")
        if not key or not val:
            raise ConfigError(f"bad parameter {part!r} in psi id {rid!r}")
        params[key] = val
    try:
        if family == "zero":
            if params:
                raise ConfigError(f"psi zero takes no parameters, got {rid!r}")
            return make_zero()
        if family == "l1":
            return make_l1(float(params["lam"]))
        if family == "box":
            lo = [float(v) for v in params["lo"].split(",")]
            hi = [float(v) for v in params["hi"].split(",")]
            return make_box(lo, hi)
    except KeyError as exc:
        raise ConfigError(f"psi id {rid!r} is missing parameter {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"cannot build psi {rid!r}: {exc}") from exc
    raise ConfigError(f"unknown psi family {family!r}")


@dataclass(frozen=True, eq=False)
class CompositeProblem:
    """f = phi + psi with phi smooth (L present) and psi a Regularizer."""

    phi: ProblemInstance
    psi: Regularizer

    def __post_init__(self):
        if self.phi.lipschitz_grad is None or not self.phi.is_differentiable:
            raise ValueError("the smooth part must be differentiable with L present")

    @property
    def dim(self) -> int:
        return self.phi.dim

    @property
    def label(self) -> str:
        return f"{self.phi.problem_id}+{self.psi.label}"

    def value(self, x) -> float:
        return self.phi.value(x) + self.psi.value(x)


def run_proximal_accelerated(cp: CompositeProblem, x0, K: int) -> MethodTrace:
    """Accelerated method with the proximal step, t_k = 1/L of the smooth part.

    The theta/y updates are unchanged; with psi == 0 the trace reproduces
    :func:`ccfom.methods.run_accelerated` bitwise.
    """
    p = cp.phi
    x0 = as_point(x0, p.dim, "x0")
    t = np.full(K + 1, 1.0 / p.lipschitz_grad)
    x = np.empty((K + 1, p.dim))
    y = np.empty((K + 1, p.dim))
    g = np.empty((K + 1, p.dim))
    theta = np.empty(K + 1)
    x[0] = x0
    y[0] = x0
    theta[0] = 1.0
    for k in range(K + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            value = p.value(y[k])
            gk = np.asarray(p.subgradient(y[k]), dtype=float)
        if not math.isfinite(value):
            raise OracleError(f"objective value is not finite at iteration {k}", iteration=k)
        if not np.all(np.isfinite(gk)):
            raise OracleError(f"gradient is not finite at iteration {k}", iteration=k)
        g[k] = gk
        if k < K:
            x[k + 1] = cp.psi.prox(y[k] - t[k] * g[k], t[k])
            theta[k + 1] = theta_next(theta[k])
            coef = theta[k + 1] * (1.0 - theta[k]) / theta[k]
            y[k + 1] = x[k + 1] + coef * (x[k + 1] - x[k])
    return MethodTrace(
        method="prox_accelerated", problem_id=cp.label, x=x, g=g, t=t, y=y, theta=theta
    )


def conjectured_certificate(
    cert: DualCertificate, cp: CompositeProblem, x0, k: int
) -> float:
    """The conjectured composite bound at k; -inf (vacuous) when phi*(z_k) = +inf."""
    if not cert.start_index <= k <= cert.horizon:
        raise ValueError(f"k={k} outside certificate range [{cert.start_index}, {cert.horizon}]")
    x0 = as_point(x0, cp.dim, "x0")
    z = cert.z[k]
    mu = float(cert.mu[k])
    phistar = cp.phi.conjugate(z)
    if math.isinf(phistar):
        return -math.inf
    inner, _ = cp.psi.inner_min(z, mu, x0)
    return -phistar + inner


@dataclass(frozen=True, eq=False)
class ProbeResult:
    """Margins of the conjectured bound along one run.

    margin_k = conjectured certificate_k - f(x_k); the conjecture predicts
    margin_k >= 0, so entries below -tolerance are counted as violations.
    """

    composite_label: str
    x0: np.ndarray
    ks: np.ndarray
    f_values: np.ndarray
    conjectured: np.ndarray
    margins: np.ndarray
    tolerances: np.ndarray
    vacuous: np.ndarray
    violations: tuple[tuple[int, float, float], ...]

    @property
    def iterations_checked(self) -> int:
        return int(self.ks.size)


def probe_instance(
    cp: CompositeProblem, x0, K: int, tol: Tolerances = DEFAULT_TOLERANCES
) -> tuple[MethodTrace, DualCertificate, ProbeResult]:
    """Run the proximal method on ``cp`` and evaluate the conjectured bound."""
    trace = run_proximal_accelerated(cp, x0, K)
    cert = build_certificate(trace, cp.phi)
    x0 = trace.x[0]
    start = cert.start_index
    ks = np.arange(start, K + 1)
    f_vals = np.array([cp.value(trace.x[k]) for k in ks])
    conied = np.array([conjectured_certificate(cert, cp, x0, int(k)) for k in ks])
    vac = np.isneginf(conied)
    margins = conied - f_vals
    tols = np.array([tol.bound(float(f), float(c)) for f, c in zip(f_vals, conied)])
    violations = tuple(
        (int(k), float(m), float(t))
        for k, m, t, v in zip(ks, margins, tols, vac)
        if not v and m < -t
    )
    result = ProbeResult(
        composite_label=cp.label,
        x0=np.array(x0),
        ks=ks,
        f_values=f_vals,
        conjectured=conied,
        margins=margins,
        tolerances=tols,
        vacuous=vac,
        violations=violations,
    )
    return trace, cert, result


def lasso_instance(dim: int, seed: int, rows_extra: int = 3, lam_scale: float = 0.3) -> tuple[CompositeProblem, np.ndarray]:
    """Seeded l1-regularized least-squares composite and its start point.

    phi(x) = (1/2)||Ax - y||^2 up to an additive constant (built as the
    quadratic (1/2)x^T A^T A x - (A^T y)^T x; dropping the constant shifts
    phi and phi* equally, so probe margins are unchanged), psi = lam ||x||_1
    with lam = lam_scale * ||A^T y||_inf.
    """
    rng = np.random.default_rng([271828, seed])
    m = dim + rows_extra
    A = rng.standard_normal((m, dim))
    target = rng.standard_normal(m)
    Q = A.T @ A
    lin = -(A.T @ target)
    lam = lam_scale * float(np.max(np.abs(A.T @ target)))
    phi = make_quadratic(Q, lin, problem_id=f"lasso-smooth:dim={dim}:seed={seed}")
    cp = CompositeProblem(phi=phi, psi=make_l1(lam))
    return cp, np.zeros(dim)


@dataclass(frozen=True, eq=False)
class ProbeSummary:
    """Aggregate outcome of a batch of probe runs."""

    instances: int
    iterations_checked: int
    violations_found: int
    vacuous_records: int
    min_margin: float
    violation_reports: tuple[str, ...]
    note: str = Z_RECURSION_NOTE

    def summary_line(self) -> str:
        return (
            f"CONJECTURE probe: {self.instances} instances, "
            f"{self.iterations_checked} iterations checked, "
            f"{self.violations_found} violations found"
        )


def lasso_suite(
    instances: int,
    dim: int,
    K: int,
    seed: int = 0,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[ProbeSummary, list[ProbeResult]]:
    """Probe ``instances`` seeded lasso composites for K iterations each."""
    results = []
    reports = []
    total_iters = 0
    violations = 0
    vacuous = 0
    min_margin = math.inf
    for i in range(instances):
        cp, x0 = lasso_instance(dim, seed + i)
        _, _, res = probe_instance(cp, x0, K, tol)
        results.append(res)
        total_iters += res.iterations_checked
        violations += len(res.violations)
        vacuous += int(res.vacuous.sum())
        finite = res.margins[~res.vacuous]
        if finite.size:
            min_margin = min(min_margin, float(finite.min()))
        for k, m, t in res.violations:
            reports.append(
                f"violation: composite={res.composite_label} seed={seed + i} dim={dim} "
                f"K={K} x0=zeros k={k} margin={m:.6e} tol={t:.3e}"
            )
    summary = ProbeSummary(
        instances=instances,
        iterations_checked=total_iters,
        violations_found=violations,
        vacuous_records=vacuous,
        min_margin=min_margin,
        violation_reports=tuple(reports),
    )
    return summary, results
