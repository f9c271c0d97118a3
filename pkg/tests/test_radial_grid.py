"""
Tests for the radial grid, its quadrature and the Helmholtz solve
"""
import math

import numpy as np
import pytest

from qsp_lab.errors import GridError
from qsp_lab.radial_grid import (
    Field,
    apply_helmholtz,
    build_uniform,
    inner_h1,
    norm_h1,
    norm_lp,
    radial_derivative,
    seminorm_grad_lp,
    solve_helmholtz,
    solve_tridiagonal,
    stiffness_form,
    stiffness_matvec,
    volume_integral,
)


def bumps(g, centre=1.0, width=1.0, amplitude=1.0):
    return g.sample(lambda r: amplitude * np.exp(-(((r - centre) / width) ** 2)))


class TestBuildUniform:
    """Grid construction and argument checks"""

    def test_nodes_and_spacing(self):
        g = build_uniform(10.0, 400)
        assert g.dr == pytest.approx(0.025)
        assert g.nodes.shape == (401,)
        assert g.nodes[0] == 0.0
        assert g.nodes[-1] == 10.0
        assert g.half_nodes.shape == (400,)
        assert g.half_weights.shape == (400,)

    def test_arrays_are_read_only(self):
        g = build_uniform(10.0, 400)
        with pytest.raises(ValueError):
            g.vol_weights[0] = 1.0

    @pytest.mark.parametrize(
        "R, N", [(0.0, 100), (-1.0, 100), (math.nan, 100), (10.0, 8), (10.0, 100.5)]
    )
    def test_rejects_bad_arguments(self, R, N):
        with pytest.raises(GridError):
            build_uniform(R, N)

    def test_grid_error_is_value_error(self):
        with pytest.raises(ValueError):
            build_uniform(10.0, 2)


class TestField:
    """Node-value container with the Dirichlet condition at R"""

    def test_sample_truncates_last_value(self, grid):
        f = grid.sample(lambda r: 1.0 + 0.0 * r)
        assert f.values[-1] == 0.0
        assert f.values[0] == 1.0

    def test_rejects_nonzero_boundary_value(self, grid):
        with pytest.raises(GridError):
            Field(grid, np.ones(grid.N + 1))

    def test_rejects_wrong_shape_and_nan(self, grid):
        with pytest.raises(GridError):
            Field(grid, np.zeros(grid.N))
        values = np.zeros(grid.N + 1)
        values[3] = np.nan
        with pytest.raises(GridError):
            Field(grid, values)

    def test_arithmetic(self, grid, gaussian):
        np.testing.assert_allclose((2.0 * gaussian - gaussian).values, gaussian.values)
        np.testing.assert_allclose((gaussian * gaussian).values, gaussian.values**2)
        np.testing.assert_allclose((-gaussian / 2.0).values, -0.5 * gaussian.values)

    def test_grid_mismatch(self, grid, gaussian):
        other = build_uniform(10.0, 200).sample(lambda r: np.exp(-r * r))
        with pytest.raises(GridError):
            gaussian + other
        with pytest.raises(GridError):
            volume_integral(grid, other)

    def test_content_hash_tracks_values(self, grid, gaussian):
        same = grid.sample(lambda r: np.exp(-0.5 * r * r))
        assert gaussian.content_hash() == same.content_hash()
        assert gaussian.content_hash() != (1.5 * gaussian).content_hash()

    def test_extrema(self, gaussian):
        assert gaussian.max() == pytest.approx(1.0)
        assert gaussian.min() == 0.0
        assert (-gaussian).sup() == pytest.approx(1.0)

    def test_positive_part(self, grid, gaussian):
        mixed = gaussian - 0.5 * grid.sample(lambda r: np.exp(-0.1 * r * r))
        part = mixed.positive_part()
        assert part.min() == 0.0
        np.testing.assert_array_equal(part.values, np.maximum(mixed.values, 0.0))
        np.testing.assert_array_equal(gaussian.positive_part().values, gaussian.values)


class TestQuadrature:
    """Control-volume quadrature and norms"""

    def test_constants_integrate_exactly(self, grid):
        total = volume_integral(grid, np.ones(grid.N + 1))
        assert total == pytest.approx(grid.ball_volume, rel=1e-12)

    def test_second_order_on_gaussian(self):
        exact = math.pi**1.5
        errors = []
        for n in (200, 400):
            g = build_uniform(10.0, n)
            errors.append(abs(volume_integral(g, np.exp(-g.nodes**2)) - exact))
        assert 1.8 <= math.log2(errors[0] / errors[1]) <= 2.2

    def test_lp_norms(self, grid):
        ones = np.ones(grid.N + 1)
        assert norm_lp(grid, ones, 2) == pytest.approx(math.sqrt(grid.ball_volume), rel=1e-12)
        assert norm_lp(grid, ones, math.inf) == 1.0
        with pytest.raises(ValueError):
            norm_lp(grid, ones, 0.5)

    def test_gradient_seminorm_of_linear_profile(self, grid):
        d = radial_derivative(grid, grid.nodes)
        np.testing.assert_allclose(d, 1.0)
        assert seminorm_grad_lp(grid, grid.nodes, 2) ** 2 == pytest.approx(grid.ball_volume, rel=1e-4)

    def test_h1_norm(self, grid, gaussian):
        expected = stiffness_form(grid, gaussian, gaussian) + volume_integral(grid, gaussian * gaussian)
        assert norm_h1(grid, gaussian) ** 2 == pytest.approx(expected, rel=1e-12)


class TestStiffness:
    """Discrete Laplacian in flux form"""

    def test_integration_by_parts(self, grid):
        h = bumps(grid, 1.0, 0.8)
        v = bumps(grid, 2.0, 1.3, -0.7)
        lhs = stiffness_form(grid, h, v)
        rhs = float(np.dot(v.values, stiffness_matvec(grid, h)))
        assert rhs == pytest.approx(lhs, rel=1e-12)

    def test_symmetry(self, grid):
        h = bumps(grid, 1.0, 0.8)
        v = bumps(grid, 2.0, 1.3)
        assert stiffness_form(grid, h, v) == pytest.approx(stiffness_form(grid, v, h), rel=1e-14)


class TestHelmholtz:
    """Weak solve of -Lap w + w = s with w(R) = 0"""

    def test_inverts_apply(self, grid):
        h = bumps(grid, 1.5, 1.0)
        back = solve_helmholtz(grid, apply_helmholtz(grid, h))
        np.testing.assert_allclose(back.values, h.values, atol=1e-10 * h.sup())

    def test_riesz_representative(self, grid):
        s = bumps(grid, 0.5, 1.0)
        v = bumps(grid, 2.0, 0.7, 0.3)
        w = solve_helmholtz(grid, s)
        assert inner_h1(grid, w, v) == pytest.approx(volume_integral(grid, s * v), rel=1e-10)

    def test_self_adjoint(self, grid):
        s1 = bumps(grid, 0.5, 1.0)
        s2 = bumps(grid, 2.5, 0.6)
        a = volume_integral(grid, solve_helmholtz(grid, s1) * s2)
        b = volume_integral(grid, solve_helmholtz(grid, s2) * s1)
        assert a == pytest.approx(b, rel=1e-10)

    def test_zero_source(self, grid):
        assert not np.any(solve_helmholtz(grid, grid.zeros()).values)

    def test_positive_source_gives_positive_solution(self, grid):
        w = solve_helmholtz(grid, bumps(grid))
        assert np.all(w.values[:-1] > 0.0)

    def test_singular_system_raises(self):
        with pytest.raises(GridError):
            solve_tridiagonal(np.zeros(4), np.zeros(3), np.ones(4))
