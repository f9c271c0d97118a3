"""
Tests for the nonlinearity, the supercritical cap, the cutoff and parameter validation
"""
import numpy as np
import pytest

from qsp_lab.errors import ConfigError
from qsp_lab.model import (
    CUTOFF,
    F_eval,
    GK_eval,
    ModelParams,
    PowerTerm,
    f_eval,
    gk_eval,
    h_T,
    h_T_prime,
    psi,
    psi_prime,
    require_valid,
    validate,
)

R = np.array([0.0, 0.7, 2.0, 5.0])


class TestPowerTerm:
    """Radial coefficient profiles"""

    def test_constant(self):
        np.testing.assert_allclose(PowerTerm(C=2.0).coefficient(R), 2.0)

    def test_gaussian_and_yukawa_bumps(self):
        gauss = PowerTerm(C=1.0, profile="gaussian", amplitude=0.5, width=2.0)
        yukawa = PowerTerm(C=1.0, profile="yukawa", amplitude=0.5, width=2.0)
        np.testing.assert_allclose(gauss.coefficient(R), 1.0 + 0.5 * np.exp(-((R / 2.0) ** 2)))
        np.testing.assert_allclose(yukawa.coefficient(R), 1.0 + 0.5 * np.exp(-R / 2.0))
        assert gauss.sup_coefficient() == pytest.approx(1.5)


class TestNonlinearity:
    """f, F and the combined source"""

    def test_vanishes_for_nonpositive_t(self, params):
        t = np.linspace(-5.0, 0.0, 11)
        assert not np.any(f_eval(params, 0.0, t))
        assert not np.any(F_eval(params, 0.0, t))

    def test_single_power(self, params):
        t = np.array([0.5, 1.0, 2.0])
        np.testing.assert_allclose(f_eval(params, 0.0, t), t**4)
        np.testing.assert_allclose(F_eval(params, 0.0, t), t**5 / 5.0)

    def test_primitive_differentiates_to_density(self):
        m = ModelParams(terms=(PowerTerm(1.0, 4.5), PowerTerm(0.5, 5.5, "gaussian", 1.0, 1.0)))
        t = np.array([0.3, 1.1, 2.4])
        h = 1e-6
        fd = (F_eval(m, 0.7, t + h) - F_eval(m, 0.7, t - h)) / (2 * h)
        np.testing.assert_allclose(fd, f_eval(m, 0.7, t), rtol=1e-7)

    def test_source_adds_critical_term(self, params):
        t = np.array([0.5, 1.5])
        expected = params.lam * t**4 + t**5
        np.testing.assert_allclose(params.source(0.0, t), expected)
        np.testing.assert_allclose(
            params.source_primitive(0.0, t), params.lam * t**5 / 5 + t**6 / 6
        )

    def test_crit_coeff_scales_power_part(self, params):
        t = np.array([0.5, 1.5])
        scaled = params.with_(crit_coeff=3.0)
        np.testing.assert_allclose(scaled.power_part(0.0, t), 3.0 * params.power_part(0.0, t))


class TestSupercriticalCap:
    """g_K agrees with the supercritical power below K and grows critically above"""

    @pytest.fixture
    def capped(self, params):
        return params.with_(p=7.0, K=1.0, supercritical=True)

    def test_below_the_cap(self, capped):
        t = np.array([0.2, 0.9])
        expected = capped.lam * f_eval(capped, 0.0, t) + t**6
        np.testing.assert_allclose(gk_eval(capped, 0.0, t), expected)

    def test_continuous_with_continuous_primitive_at_K(self, capped):
        below, above = 1.0 - 1e-9, 1.0 + 1e-9
        assert gk_eval(capped, 0.0, above) == pytest.approx(gk_eval(capped, 0.0, below), rel=1e-7)
        assert GK_eval(capped, 0.0, above) == pytest.approx(GK_eval(capped, 0.0, below), rel=1e-7)

    def test_above_the_cap_grows_like_t5(self):
        m = ModelParams(p=8.0, K=0.5)
        t = np.array([2.0, 4.0])
        power = gk_eval(m, 0.0, t) - m.lam * f_eval(m, 0.0, t)
        np.testing.assert_allclose(power, 0.5**2 * t**5)

    def test_source_dispatches(self, capped):
        t = np.array([0.4, 3.0])
        np.testing.assert_allclose(capped.source(0.0, t), gk_eval(capped, 0.0, t))
        np.testing.assert_allclose(capped.source_primitive(0.0, t), GK_eval(capped, 0.0, t))

    def test_requires_p_and_K(self, params):
        with pytest.raises(ConfigError):
            gk_eval(params, 0.0, 1.0)
        with pytest.raises(ConfigError):
            GK_eval(params.with_(p=7.0), 0.0, 1.0)


class TestCutoff:
    """psi and the truncation factor"""

    def test_values(self):
        assert psi(0.0) == 1.0
        assert psi(1.0) == 1.0
        assert psi(1.5) == pytest.approx(0.5)
        assert psi(2.0) == 0.0
        assert psi(7.0) == 0.0
        assert isinstance(psi(0.3), float)

    def test_derivative(self):
        assert psi_prime(0.5) == 0.0
        assert psi_prime(1.5) == pytest.approx(-1.5)
        assert psi_prime(2.5) == 0.0
        t = np.linspace(0.0, 3.0, 301)
        d = CUTOFF.psi_prime(t)
        assert np.all(d <= 0.0)
        assert np.max(np.abs(d)) <= 2.0

    def test_derivative_matches_finite_differences(self):
        t = np.array([1.1, 1.4, 1.8])
        h = 1e-6
        fd = (CUTOFF.psi(t + h) - CUTOFF.psi(t - h)) / (2 * h)
        np.testing.assert_allclose(fd, CUTOFF.psi_prime(t), rtol=1e-6)

    def test_truncation_factor(self, params):
        T2 = params.T**2
        assert h_T(params, 0.5 * T2) == 1.0
        assert h_T(params, T2) == 1.0
        assert h_T(params, 4.0 * T2) == 0.0
        assert h_T_prime(params, 0.5 * T2) == 0.0
        assert h_T_prime(params, 1.5 * T2) == pytest.approx(2.0 / T2 * -1.5)


class TestValidation:
    """Hypothesis report and the strict variant"""

    def test_defaults_pass(self, params):
        report = validate(params)
        assert report.passed
        assert [c.name for c in report.checks] == ["params", "f0", "f1", "f2", "f3"]

    def test_multi_term_profile_passes(self):
        m = ModelParams(
            theta=4.5,
            terms=(PowerTerm(1.0, 4.5), PowerTerm(2.0, 5.5, "yukawa", 0.5, 2.0)),
        )
        assert validate(m).passed

    def test_theta_above_min_q_fails(self, params):
        report = validate(params.with_(theta=5.5))
        assert not report.passed
        assert not report["params"].passed
        assert "theta" in report["params"].detail

    def test_theta_outside_ar_range_fails_f3(self, params):
        report = validate(params.with_(theta=6.5, terms=(PowerTerm(1.0, 5.9),)))
        assert not report["f3"].passed

    def test_critical_growth_fails_f2(self, params):
        report = validate(params.with_(terms=(PowerTerm(1.0, 6.5),)))
        assert not report["f2"].passed
        assert not report["params"].passed

    @pytest.mark.parametrize(
        "changes",
        [{"lam": 0.0}, {"eps": -0.1}, {"T": 0.0}, {"crit_coeff": -1.0}, {"p": 5.0}, {"K": 0.0}],
    )
    def test_bad_scalars_fail(self, params, changes):
        assert not validate(params.with_(**changes))["params"].passed

    def test_supercritical_without_cap_fails(self, params):
        assert not validate(params.with_(supercritical=True)).passed

    def test_unknown_check_name(self, params):
        with pytest.raises(KeyError):
            validate(params)["f9"]

    def test_require_valid(self, params):
        assert require_valid(params) is params
        with pytest.raises(ConfigError, match="theta"):
            require_valid(params.with_(theta=5.5))
