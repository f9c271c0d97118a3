"""
Tests for the executable property suite
"""
import numpy as np
import pytest

from qsp_lab.invariants import (
    CheckResult,
    InvariantSuite,
    corrupt_quadrature,
    invariant_suite,
    smooth_random_field,
)
from qsp_lab.model import ModelParams, PowerTerm
from qsp_lab.radial_grid import build_uniform


def failures(results):
    return [f"{r.module}.{r.prop}: {r.observed}" for r in results if not r.passed]


class TestSuite:
    """Release gate without the mountain-pass run"""

    def test_quick_suite_passes(self):
        results = invariant_suite(quick=True)
        assert results
        assert all(isinstance(r, CheckResult) for r in results)
        assert failures(results) == []
        modules = {r.module for r in results}
        assert modules == {"radial_grid", "model", "phi_solver", "energy"}

    def test_quick_suite_with_two_terms(self):
        params = ModelParams(theta=4.5, terms=(PowerTerm(1.0, 5.0), PowerTerm(0.5, 5.5)))
        assert failures(invariant_suite(params, quick=True)) == []

    def test_oracle_check_is_included(self):
        suite = InvariantSuite(quick=True)
        suite.check_phi()
        assert any("oracle" in r.prop for r in suite.results)

    def test_gradient_check_is_relative(self):
        suite = InvariantSuite(quick=True)
        suite.check_energy()
        row = next(r for r in suite.results if r.prop == "gradients vs finite differences")
        assert row.required == "<= 1e-4"
        assert row.passed
        assert float(row.observed) <= 1e-4

    def test_corrupted_quadrature_is_caught(self):
        results = invariant_suite(quick=True, grid_hook=corrupt_quadrature)
        failed = {r.prop for r in results if not r.passed}
        assert "quadrature exact on constants" in failed

    def test_exceptions_are_itemised(self):
        suite = InvariantSuite(quick=True)

        def broken():
            raise RuntimeError("boom")

        suite._guard("energy", "broken", broken)
        assert suite.results[-1].passed is False
        assert "boom" in suite.results[-1].observed

    @pytest.mark.slow
    def test_full_suite_passes(self):
        results = invariant_suite()
        assert failures(results) == []
        assert any(r.module == "mountain_pass" for r in results)


class TestHelpers:
    """Random test fields and fault injection"""

    def test_smooth_random_field(self):
        g = build_uniform(10.0, 200)
        f = smooth_random_field(g, np.random.default_rng(1))
        assert f.values[-1] == 0.0
        assert np.any(f.values)

    def test_corrupt_quadrature(self):
        g = build_uniform(10.0, 200)
        before = g.vol_weights[5]
        corrupt_quadrature(g, index=5, factor=2.0)
        assert g.vol_weights[5] == pytest.approx(2.0 * before)
        assert not g.vol_weights.flags.writeable
