import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ccfom
from ccfom.errors import ConfigError
from ccfom.proxprobe import (
    CompositeProblem,
    conjectured_certificate,
    lasso_instance,
    lasso_suite,
    make_box,
    make_l1,
    make_zero,
    probe_instance,
    regularizer_from_id,
    run_proximal_accelerated,
    soft_threshold,
)


def brute_prox(psi, x, t, lo=-10.0, hi=10.0, n=200001):
    """Grid minimizer of psi(y) + ||x - y||^2 / (2t), dim 1."""
    ys = np.linspace(lo, hi, n)
    vals = np.array([psi.value(np.array([y])) for y in ys]) + (x - ys) ** 2 / (2 * t)
    return ys[int(np.argmin(vals))]


class TestRegularizers:
    def test_soft_threshold_values(self):
        psi = make_l1(1.0)
        assert psi.prox(np.array([3.0]), 1.0) == np.array([2.0])
        assert np.allclose(psi.prox(np.array([0.4, -0.2]), 0.5), [0.0, 0.0])
        assert psi.value(np.array([1.0, -2.0])) == 3.0

    def test_box_projection(self):
        psi = make_box([0.0, 0.0], [10.0, 10.0])
        assert np.allclose(psi.prox(np.array([-1.0, 2.0]), 1.0), [0.0, 2.0])
        assert psi.value(np.array([-0.1, 1.0])) == math.inf
        assert psi.value(np.array([0.5, 1.0])) == 0.0

    @pytest.mark.parametrize("x,t", [(3.0, 1.0), (-1.7, 0.25), (0.2, 2.0)])
    def test_l1_prox_matches_grid(self, x, t):
        psi = make_l1(0.7)
        grid = brute_prox(psi, x, t)
        step = 20.0 / 200000
        assert abs(float(psi.prox(np.array([x]), t)[0]) - grid) <= step

    @pytest.mark.parametrize("x,t", [(3.0, 1.0), (-1.7, 0.5)])
    def test_box_prox_matches_grid(self, x, t):
        psi = make_box([-1.0], [1.0])
        grid = brute_prox(psi, x, t)
        step = 20.0 / 200000
        assert abs(float(psi.prox(np.array([x]), t)[0]) - grid) <= step

    @given(st.floats(-20, 20), st.floats(0.01, 5.0))
    @settings(max_examples=200, deadline=None)
    def test_l1_inner_min_is_a_minimum(self, z, mu):
        # the closed-form inner minimum never exceeds the objective at probe points
        psi = make_l1(1.3)
        x0 = np.array([0.7])
        val, u = psi.inner_min(np.array([z]), mu, x0)
        for probe in (u, u + 0.1, u - 0.1, np.zeros(1)):
            obj = psi.value(probe) + z * probe[0] + 0.5 * mu * (probe[0] - x0[0]) ** 2
            assert val <= obj + 1e-9 * (1 + abs(obj))

    def test_regularizer_ids(self):
        assert regularizer_from_id("zero").kind == "zero"
        assert regularizer_from_id("l1:lam=0.5").label == "l1:lam=0.5"
        assert regularizer_from_id("box:lo=0:hi=1,2").kind == "box"
        for bad in ("l1", "l1:lam=-1", "box:lo=1:hi=0", "huber:delta=1"):
            with pytest.raises(ConfigError):
                regularizer_from_id(bad)


class TestProximalRun:
    def test_worked_example_one_step(self):
        phi = ccfom.make_quadratic([[1.0]], [0.0])
        cp = CompositeProblem(phi=phi, psi=make_l1(1.0))
        tr = run_proximal_accelerated(cp, [3.0], 1)
        assert tr.x[1] == np.array([0.0])  # prox_1(3 - 3) = 0

    def test_zero_psi_reproduces_accelerated_bitwise(self):
        phi = ccfom.from_id("quad:diag=1,10")
        cp = CompositeProblem(phi=phi, psi=make_zero())
        tz = run_proximal_accelerated(cp, [1.0, 1.0], 40)
        ta = ccfom.run_accelerated(phi, [1.0, 1.0], 40)
        assert np.array_equal(tz.x, ta.x)
        assert np.array_equal(tz.y, ta.y)
        assert np.array_equal(tz.theta, ta.theta)

    def test_box_constrained_iterates_stay_feasible(self):
        phi = ccfom.from_id("quad:diag=1,10:b=1,0")
        cp = CompositeProblem(phi=phi, psi=make_box([0.0, 0.0], [5.0, 5.0]))
        tr = run_proximal_accelerated(cp, [2.0, 2.0], 30)
        assert np.all(tr.x >= 0.0) and np.all(tr.x <= 5.0)

    def test_needs_smooth_part(self):
        with pytest.raises(ValueError):
            CompositeProblem(phi=ccfom.make_scaled_norm(1.0, 1), psi=make_zero())


class TestConjecturedCertificate:
    def test_worked_example_margin_zero(self):
        phi = ccfom.make_quadratic([[1.0]], [0.0])
        cp = CompositeProblem(phi=phi, psi=make_l1(1.0))
        trace, cert, res = probe_instance(cp, [3.0], 3)
        # z_1 = grad phi(x0) = 3, mu_1 = 1: inner min at u = 0 gives 4.5,
        # certificate = -phi*(3) + 4.5 = 0 = f(x_1)
        assert res.conjectured[0] == 0.0
        assert res.f_values[0] == 0.0
        assert res.margins[0] == 0.0
        assert res.violations == ()

    def test_inner_min_value_cross_checked_by_grid(self):
        phi = ccfom.make_quadratic([[1.0]], [0.0])
        psi = make_l1(1.0)
        z, mu, x0 = np.array([3.0]), 1.0, np.array([3.0])
        val, _ = psi.inner_min(z, mu, x0)
        us = np.linspace(-10, 10, 400001)
        grid = np.min(np.abs(us) + 3.0 * us + 0.5 * (us - 3.0) ** 2)
        assert val == pytest.approx(4.5, abs=1e-12)
        assert val <= grid + 1e-9

    def test_zero_psi_matches_plain_certificate_bitwise(self):
        phi = ccfom.from_id("quad:diag=1,10")
        cp = CompositeProblem(phi=phi, psi=make_zero())
        trace, cert, res = probe_instance(cp, [1.0, 1.0], 25)
        plain = ccfom.run_accelerated(phi, [1.0, 1.0], 25)
        plain_cert = ccfom.build_certificate(plain, phi)
        x0 = np.array([1.0, 1.0])
        for i, k in enumerate(res.ks):
            expect = ccfom.certificate_value(plain_cert, phi, x0, int(k))
            assert res.conjectured[i] == expect

    def test_vacuous_when_smooth_conjugate_infinite(self):
        # log-sum-exp as the smooth part: z outside the simplex is vacuous
        phi = ccfom.from_id("lse:dim=2")
        cp = CompositeProblem(phi=phi, psi=make_l1(0.1))
        trace, cert, _ = probe_instance(cp, [1.0, -1.0], 3)
        hacked_z = np.array(cert.z)
        hacked_z[1] = [5.0, 5.0]
        hacked = ccfom.DualCertificate(
            method=cert.method, start_index=1, z=hacked_z,
            mu=np.array(cert.mu), theta=np.array(cert.theta),
        )
        assert conjectured_certificate(hacked, cp, [1.0, -1.0], 1) == -math.inf


class TestLassoSuite:
    def test_instance_construction_is_seeded(self):
        a, x0a = lasso_instance(3, seed=7)
        b, _ = lasso_instance(3, seed=7)
        c, _ = lasso_instance(3, seed=8)
        x = np.array([0.3, -0.2, 1.0])
        assert a.value(x) == b.value(x)
        assert a.value(x) != c.value(x)
        assert np.all(x0a == 0.0)

    def test_suite_reports_margins(self):
        summary, results = lasso_suite(4, 3, 40, seed=11)
        assert summary.instances == 4
        assert summary.iterations_checked == 4 * 40
        assert len(results) == 4
        assert math.isfinite(summary.min_margin)
        assert "CONJECTURE" in summary.summary_line()

    def test_probe_reports_violations_without_asserting(self):
        # corrupt the margin tolerance path: a fabricated composite whose
        # "smooth part" lies about its conjugate must surface violations
        phi_honest = ccfom.make_quadratic([[1.0]], [0.0])
        lying = ccfom.ProblemInstance(
            problem_id="lying",
            dim=1,
            value=phi_honest.value,
            subgradient=phi_honest.subgradient,
            conjugate=lambda z: phi_honest.conjugate(z) + 5.0,  # depresses the certificate
            value_batch=phi_honest.value_batch,
            lipschitz_grad=1.0,
            is_differentiable=True,
        )
        cp = CompositeProblem(phi=lying, psi=make_l1(1.0))
        _, _, res = probe_instance(cp, [3.0], 10)
        assert len(res.violations) > 0  # reported, not raised
