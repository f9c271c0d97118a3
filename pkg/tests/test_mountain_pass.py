"""
Tests for the path deformation, the refinement and the full mountain-pass run
"""
import math
from types import SimpleNamespace

import numpy as np
import pytest

from qsp_lab.energy import ReducedEnergy
from qsp_lab.errors import NonConvergence, ThresholdViolation
from qsp_lab.model import ModelParams
from qsp_lab.mountain_pass import (
    MountainPassOptions,
    MountainPassSolver,
    PathState,
    _arclength_midpoint,
    init_path,
    mpa_step,
    ray_level,
    run,
)
from qsp_lab.radial_grid import build_uniform, inner_h1, norm_h1


@pytest.fixture
def energy(grid, params):
    return ReducedEnergy(grid, params)


class TestPath:
    """Initial path and single deformation steps"""

    def test_init_path(self, energy):
        state = init_path(energy, 12)
        assert len(state.nodes) == 13
        assert not np.any(state.nodes[0].values)
        assert state.values[0] == 0.0
        assert state.values[-1] < 0.0
        assert 0 < state.max_index < 12
        assert state.level_estimate > 0.0

    def test_init_path_needs_two_segments(self, energy):
        with pytest.raises(ValueError):
            init_path(energy, 1)

    def test_step_lowers_the_highest_node(self, energy):
        opts = MountainPassOptions(n_path=12)
        state = init_path(energy, 12)
        k = state.max_index
        new = mpa_step(state, energy, opts)
        assert new.iterations == 1
        assert new.values[k] < state.level_estimate
        assert new.level_estimate <= state.level_estimate + 1e-12
        assert new.grad_norm > 0.0
        assert new.nodes[0] is state.nodes[0]
        assert new.nodes[-1] is state.nodes[-1]

    def test_repeated_steps_never_raise_the_level(self, energy):
        opts = MountainPassOptions(n_path=12)
        state = init_path(energy, 12)
        levels = [state.level_estimate]
        for _ in range(5):
            state = mpa_step(state, energy, opts)
            levels.append(state.level_estimate)
        assert all(b <= a + 1e-12 for a, b in zip(levels, levels[1:]))

    def test_step_is_capped_and_nonnegative(self, grid, energy):
        opts = MountainPassOptions()
        state = init_path(energy, opts.n_path)
        state.step = opts.max_step
        for _ in range(10):
            k = state.max_index
            u = state.nodes[k]
            gap = min(norm_h1(grid, u - state.nodes[j]) for j in (k - 1, k + 1))
            new = mpa_step(state, energy, opts)
            assert norm_h1(grid, new.nodes[k] - u) <= gap * (1 + 1e-12)
            assert all(node.min() >= 0.0 for node in new.nodes)
            state = new

    def test_path_level_stays_positive(self, energy):
        opts = MountainPassOptions()
        state = init_path(energy, opts.n_path)
        state.step = opts.initial_step
        for _ in range(40):
            state = mpa_step(state, energy, opts)
            assert state.level_estimate > 0.0
            assert 0 < state.max_index < opts.n_path

    def test_init_path_along_a_direction(self, grid, energy):
        direction = grid.sample(lambda r: np.exp(-(((r - 1.0) / 1.5) ** 2)))
        state = init_path(energy, 12, direction)
        e = state.nodes[-1]
        scale = norm_h1(grid, e) / norm_h1(grid, direction)
        np.testing.assert_allclose(e.values, scale * direction.values, atol=1e-12 * scale)
        assert state.level_estimate > 0.0

    def test_ray_level_bounds_the_nodes(self, energy):
        state = init_path(energy, 12)
        assert ray_level(energy, state) >= state.level_estimate

    def test_arclength_midpoint(self, grid, gaussian):
        a = grid.zeros()
        b = 0.2 * gaussian
        c = 2.0 * gaussian
        mid = _arclength_midpoint(a, b, c)
        np.testing.assert_allclose(mid.values, gaussian.values, atol=1e-12)
        assert _arclength_midpoint(a, a, a) is a

    def test_path_state_properties(self, grid):
        state = PathState([grid.zeros()] * 3, np.array([0.0, 2.0, -1.0]))
        assert state.max_index == 1
        assert state.level_estimate == 2.0


class TestSolverUnits:
    """Pieces of the solver that do not need a full run"""

    def test_fiber_max_zeroes_the_fiber_derivative(self, grid, params, energy, gaussian):
        solver = MountainPassSolver(grid, params)
        u = solver._fiber_max(energy, gaussian, 0.5)
        v = gaussian / norm_h1(grid, gaussian)
        assert abs(energy.fiber_derivative(v, norm_h1(grid, u))) <= 1e-8
        assert energy.value(u) > 0.0

    def test_threshold_violations_warn(self, grid, params):
        solver = MountainPassSolver(grid, params)
        cp = SimpleNamespace(violations=["level 9 >= Sobolev bound 1"])
        with pytest.warns(ThresholdViolation):
            solver._warn_thresholds(cp, None)

    def test_certify_rejects_negative_points(self, grid, params, gaussian):
        solver = MountainPassSolver(grid, params)
        assert solver._certify(gaussian, 1.0, 2.0) == []
        assert solver._certify(-gaussian, 1.0, 2.0)
        dipped = gaussian - 0.5 * grid.sample(lambda r: np.exp(-((r - 3.0) ** 2)))
        assert solver._certify(dipped, 1.0, 2.0)

    def test_certify_rejects_levels_above_the_path(self, grid, params, gaussian):
        solver = MountainPassSolver(grid, params)
        assert solver._certify(gaussian, 3.0, 2.0)
        assert solver._certify(gaussian, 0.0, 2.0)
        assert solver._certify(gaussian, 2.0 + 1e-12, 2.0) == []

    def test_budget_exhaustion(self, grid, params):
        opts = MountainPassOptions(n_path=8, path_iter=1, max_iter=1, max_restarts=0)
        cp = run(grid, params, opts)
        assert not cp.converged
        with pytest.raises(NonConvergence) as info:
            run(grid, params, opts, raise_on_failure=True)
        assert info.value.critical_point is not None


@pytest.mark.slow
class TestCriticalPoint:
    """Contract of a converged mountain-pass run at the default parameters"""

    def test_converged_with_positive_level(self, critical_point):
        cp = critical_point
        assert cp.converged
        assert cp.level > 0.0
        assert cp.grad_norm <= 1e-6 * max(1.0, cp.h1_norm)

    def test_nonnegative(self, critical_point):
        cp = critical_point
        assert cp.min_u >= -1e-6 * cp.u.max()

    def test_promoted_to_untruncated_problem(self, critical_point):
        cp = critical_point
        assert cp.promoted
        assert cp.untruncated_grad_norm <= 2e-6 * max(1.0, cp.h1_norm)

    def test_theta_decomposition(self, mp_grid, critical_point):
        cp = critical_point
        energy = ReducedEnergy(mp_grid, ModelParams().with_(T=cp.T))
        assert energy.identity_decomposition(cp.u).defect <= 1e-6

    def test_critical_in_random_directions(self, mp_grid, critical_point):
        cp = critical_point
        energy = ReducedEnergy(mp_grid, ModelParams().with_(T=cp.T))
        w = energy.grad_J_trunc(cp.u)
        rng = np.random.default_rng(7)
        for _ in range(10):
            centre, width = rng.uniform(0.0, 4.0), rng.uniform(0.5, 1.5)
            v = mp_grid.sample(lambda r: np.exp(-(((r - centre) / width) ** 2)))
            assert abs(inner_h1(mp_grid, w, v)) <= 1e-6 * max(1.0, cp.h1_norm) * norm_h1(mp_grid, v)

    def test_potential_diagnostics(self, critical_point):
        phi = critical_point.phi
        assert phi.converged
        assert phi.min_value >= -1e-10 * phi.sup
        assert phi.x_norm > 0.0

    def test_warm_start_reproduces_the_level(self, mp_grid, critical_point):
        cp = MountainPassSolver(mp_grid, ModelParams()).run(initial_guess=critical_point.u)
        assert cp.converged
        assert cp.level == pytest.approx(critical_point.level, rel=1e-6)
        assert norm_h1(mp_grid, cp.u - critical_point.u) <= 1e-3 * critical_point.h1_norm
        assert cp.iterations > 0
        assert cp.level <= cp.path_level + 1e-8 * max(1.0, cp.path_level)

    def test_level_below_the_initial_path(self, critical_point):
        cp = critical_point
        assert math.isfinite(cp.path_level)
        assert cp.level <= cp.path_level + 1e-8 * max(1.0, cp.path_level)

    def test_larger_lambda_gives_smaller_solution(self, mp_grid, critical_point):
        cp = MountainPassSolver(mp_grid, ModelParams(lam=120.0)).run()
        assert cp.converged
        assert cp.h1_norm < critical_point.h1_norm
        assert cp.level < critical_point.level

    def test_large_lambda_stays_positive(self):
        grid = build_uniform(12.0, 300)
        cp = MountainPassSolver(grid, ModelParams(lam=120.0)).run()
        assert cp.converged
        assert cp.u.max() > 0.0
        assert cp.min_u >= -1e-6 * cp.u.max()
        assert cp.u.values[0] > 0.0
        assert 0.0 < cp.level <= cp.path_level + 1e-8 * max(1.0, cp.path_level)


@pytest.mark.slow
class TestDefaultConfig:
    """Cold start on the default grid and parameters"""

    def test_default_run(self):
        grid = build_uniform(20.0, 1200)
        cp = MountainPassSolver(grid, ModelParams()).run()
        assert cp.converged
        assert cp.grad_norm <= 1e-6 * max(1.0, cp.h1_norm)
        assert cp.level > 0.0
        assert cp.promoted
        assert cp.min_u >= -1e-6 * cp.u.max()
        assert cp.level <= cp.path_level + 1e-8 * max(1.0, cp.path_level)
