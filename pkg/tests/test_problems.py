import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ccfom
from ccfom.errors import ConfigError
from conftest import NONSMOOTH_CELLS, SMOOTH_CELLS, sample_points

ALL_CELLS = SMOOTH_CELLS + NONSMOOTH_CELLS


def test_as_point_validation():
    p = ccfom.as_point(2.0)
    assert p.shape == (1,) and not p.flags.writeable
    with pytest.raises(ValueError):
        ccfom.as_point([1.0, math.nan])
    with pytest.raises(ValueError):
        ccfom.as_point([1.0, 2.0], dim=3)
    with pytest.raises(ValueError):
        ccfom.as_point([[1.0, 2.0]])


class TestFenchelGap:
    def test_scalar_quadratic(self, scalar_quad):
        # f = x^2/2 is self-conjugate, so the gap is (z-x)^2/2
        assert ccfom.fenchel_gap(scalar_quad, [3.0], [1.0]) == pytest.approx(2.0, abs=1e-15)

    def test_zero_at_gradient_pair(self, scalar_quad):
        assert ccfom.fenchel_gap(scalar_quad, [2.0], [2.0]) == 0.0

    def test_abs_value_pair(self, abs_value):
        assert ccfom.fenchel_gap(abs_value, [0.5], [2.0]) == pytest.approx(1.0, abs=1e-15)

    def test_dimension_mismatch(self, scalar_quad):
        with pytest.raises(ValueError):
            ccfom.fenchel_gap(scalar_quad, [1.0, 2.0], [1.0])

    @pytest.mark.parametrize("pid,x0", ALL_CELLS)
    def test_nonnegative_and_tight_at_subgradients(self, pid, x0, rng):
        p = ccfom.from_id(pid)
        for x in sample_points(rng, p.dim):
            z = p.subgradient(x)
            g = ccfom.fenchel_gap(p, z, x)
            scale = 1.0 + abs(p.conjugate(ccfom.as_point(z, p.dim))) + abs(p.value(x)) + abs(float(z @ x))
            assert g >= -1e-9 * scale
            assert abs(g) <= 1e-8 * scale  # equality when z is a subgradient at x

    @given(z=st.floats(-50, 50), x=st.floats(-50, 50))
    @settings(max_examples=200, deadline=None)
    def test_gap_nonnegative_hypothesis(self, z, x):
        p = ccfom.make_quadratic([[1.0]], [0.0])
        assert ccfom.fenchel_gap(p, [z], [x]) >= -1e-9 * (1 + z * z + x * x)


class TestQuadratic:
    def test_identity(self, scalar_quad):
        assert scalar_quad.value(np.array([3.0])) == 4.5
        assert scalar_quad.conjugate(np.array([3.0])) == 4.5
        assert scalar_quad.lipschitz_grad == 1.0
        assert scalar_quad.optimal_value == 0.0

    def test_diagonal(self):
        p = ccfom.from_id("quad:diag=1,10")
        assert p.lipschitz_grad == 10.0
        assert p.optimal_value == 0.0
        assert np.allclose(p.project_to_solution(np.zeros(2)), 0.0)

    def test_offset_conjugate_formula(self):
        p = ccfom.from_id("quad:diag=1,10:b=1,0")
        for z in ([0.0, 0.0], [2.0, 5.0], [-1.0, 3.0]):
            z = np.array(z)
            expect = 0.5 * (z[0] - 1.0) ** 2 + z[1] ** 2 / 20.0
            assert p.conjugate(z) == pytest.approx(expect, rel=1e-12)
        assert np.allclose(p.project_to_solution(np.zeros(2)), [-1.0, 0.0])
        assert p.optimal_value == pytest.approx(-0.5, abs=1e-14)

    def test_rejects_bad_matrices(self):
        with pytest.raises(ValueError):
            ccfom.make_quadratic([[0.0]], [0.0])  # not PD
        with pytest.raises(ValueError):
            ccfom.make_quadratic([[-1.0]], [0.0])
        with pytest.raises(ValueError):
            ccfom.make_quadratic([[1.0, 0.5], [0.0, 1.0]], None)  # asymmetric
        with pytest.raises(ValueError):
            ccfom.make_quadratic(np.diag([1.0, 1e13]), None)  # condition guard

    def test_gradient_matches_finite_differences(self, rng):
        p = ccfom.from_id("quad:diag=1,10:b=1,0")
        h = 1e-6
        for x in sample_points(rng, 2, n=5):
            g = p.subgradient(x)
            for i in range(2):
                e = np.zeros(2)
                e[i] = h
                fd = (p.value(x + e) - p.value(x - e)) / (2 * h)
                assert g[i] == pytest.approx(fd, abs=1e-4)


class TestScaledNorm:
    def test_values_and_subgradients(self):
        p = ccfom.make_scaled_norm(1.0, 1)
        assert p.value(np.array([-2.0])) == 2.0
        assert p.subgradient(np.array([-2.0])) == np.array([-1.0])
        assert p.subgradient(np.array([0.0])) == np.array([0.0])

    def test_conjugate_is_ball_indicator(self):
        p = ccfom.make_scaled_norm(2.0, 2)
        assert p.conjugate(np.array([0.0, 2.5])) == math.inf
        assert p.conjugate(np.array([0.0, 2.0])) == 0.0
        assert p.conjugate(np.array([1.0, 1.0])) == 0.0

    def test_rejects_nonpositive_G(self):
        with pytest.raises(ValueError):
            ccfom.make_scaled_norm(0.0, 1)
        with pytest.raises(ValueError):
            ccfom.make_scaled_norm(-1.0, 2)


class TestLogSumExp:
    def test_symmetric_point(self):
        p = ccfom.make_log_sum_exp(2)
        assert p.value(np.zeros(2)) == pytest.approx(math.log(2), rel=1e-15)
        assert np.allclose(p.subgradient(np.zeros(2)), [0.5, 0.5])

    def test_conjugate_entropy(self):
        p = ccfom.make_log_sum_exp(2)
        assert p.conjugate(np.array([0.5, 0.5])) == pytest.approx(-math.log(2), rel=1e-14)
        assert p.conjugate(np.array([0.6, 0.5])) == math.inf
        assert p.conjugate(np.array([1.2, -0.2])) == math.inf
        # vertex of the simplex: 1*log(1) = 0
        assert p.conjugate(np.array([1.0, 0.0])) == 0.0

    def test_gradient_is_stable_for_large_inputs(self):
        p = ccfom.make_log_sum_exp(2)
        g = p.subgradient(np.array([800.0, -800.0]))
        assert np.all(np.isfinite(g)) and g.sum() == pytest.approx(1.0)
        assert math.isfinite(p.value(np.array([800.0, -800.0])))

    def test_diagonal_reference(self):
        p = ccfom.make_log_sum_exp(2)
        x0 = np.array([3.0, -3.0])
        assert np.allclose(p.project_to_solution(x0), [0.0, 0.0])
        assert p.distance_to_solution(x0) == pytest.approx(math.sqrt(18.0), rel=1e-15)
        assert p.optimal_value is None


class TestMaxAffine:
    def test_abs_value_pieces(self):
        p = ccfom.from_id("maxaff:abs=1")
        assert p.value(np.array([-2.0])) == 2.0
        assert p.subgradient(np.array([2.0])) == np.array([1.0])
        assert p.subgradient(np.array([0.0])) == np.array([0.0])  # least-norm at the tie
        assert p.conjugate(np.array([0.5])) == pytest.approx(0.0, abs=1e-12)
        assert p.conjugate(np.array([2.0])) == math.inf
        assert p.optimal_value == pytest.approx(0.0, abs=1e-12)
        assert p.lipschitz_f == 1.0

    def test_least_norm_tie_2d(self):
        p = ccfom.make_max_affine([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]], [0.0, 0.0, 0.0])
        g = p.subgradient(np.array([0.0, -5.0]))
        assert np.allclose(g, [0.0, 0.0], atol=1e-12)

    def test_seeded_instance_is_bounded_with_valid_subgradients(self, rng):
        p = ccfom.from_id("maxaff:dim=3:pieces=6:seed=0")
        assert p.optimal_value is not None
        xbar = p.project_to_solution(np.zeros(3))
        assert p.value(xbar) == pytest.approx(p.optimal_value, abs=1e-9)
        for x in sample_points(rng, 3, n=10):
            g = p.subgradient(x)
            # subgradient inequality f(y) >= f(x) + <g, y-x> at sampled y
            for y in sample_points(rng, 3, n=5):
                assert p.value(y) >= p.value(x) + float(g @ (y - x)) - 1e-9

    def test_conjugate_affine_combinations(self):
        # z = sum lam_i a_i with lam in the simplex gives f*(z) <= -sum lam_i b_i
        p = ccfom.from_id("maxaff:dim=2:pieces=5:seed=1")
        assert math.isfinite(p.conjugate(np.zeros(2)))
        far = p.conjugate(np.array([1e3, 1e3]))
        assert far == math.inf


@pytest.mark.parametrize("pid,x0", ALL_CELLS)
class TestCatalogInvariants:
    def test_lipschitz_bound_on_subgradients(self, pid, x0, rng):
        p = ccfom.from_id(pid)
        if p.lipschitz_f is None:
            pytest.skip("no G constant")
        for x in sample_points(rng, p.dim):
            assert np.linalg.norm(p.subgradient(x)) <= p.lipschitz_f * (1 + 1e-9)

    def test_descent_inequality(self, pid, x0, rng):
        p = ccfom.from_id(pid)
        if p.lipschitz_grad is None:
            pytest.skip("no L constant")
        L = p.lipschitz_grad
        for x in sample_points(rng, p.dim):
            g = p.subgradient(x)
            lhs = p.value(x - g / L)
            rhs = p.value(x) - float(g @ g) / (2 * L)
            assert lhs <= rhs + 1e-9

    def test_batch_matches_scalar_oracle(self, pid, x0, rng):
        p = ccfom.from_id(pid)
        X = sample_points(rng, p.dim, n=40)
        batch = p.value_batch(X)
        direct = np.array([p.value(row) for row in X])
        assert np.allclose(batch, direct, rtol=1e-12, atol=1e-12)

    def test_optimal_value_is_a_lower_bound(self, pid, x0, rng):
        p = ccfom.from_id(pid)
        if p.optimal_value is None:
            pytest.skip("no finite optimal value")
        for x in sample_points(rng, p.dim):
            assert p.value(x) >= p.optimal_value - 1e-9 * (1 + abs(p.optimal_value))


class TestCatalogIds:
    def test_round_trip_id(self):
        for pid, _ in ALL_CELLS:
            assert ccfom.from_id(pid).problem_id == pid

    @pytest.mark.parametrize(
        "bad",
        [
            "",
            "quad",
            "quad:diag=",
            "quad:diag=1:diag=2",
            "quad:diag=1:extra=9",
            "norm:G=abc",
            "lse:dim=x",
            "maxaff:pieces=1:dim=2",
            "mystery:dim=2",
            "norm:G=-1",
        ],
    )
    def test_bad_ids_raise_config_error(self, bad):
        with pytest.raises(ConfigError):
            ccfom.from_id(bad)

    def test_requires_a_lipschitz_constant(self):
        with pytest.raises(ValueError):
            ccfom.ProblemInstance(
                problem_id="x",
                dim=1,
                value=lambda x: 0.0,
                subgradient=lambda x: np.zeros(1),
                conjugate=lambda z: 0.0,
            )
