"""
Problem data: the power-sum nonlinearity, its supercritical surgery, the cutoff and the hypothesis checks
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError

logger = logging.getLogger("qsp_lab.model")

CRIT = 6  # Sobolev critical exponent in R^3
PROFILES = ("constant", "gaussian", "yukawa")


@dataclass(frozen=True)
class PowerTerm:
    """One term C(r) * t_+^(q-1) of the nonlinearity

    The radial coefficient is C * (1 + amplitude * bump(r / width)) where the
    bump is 0 for "constant", exp(-(r/w)^2) for "gaussian" and exp(-r/w)
    for "yukawa".
    """

    C: float = 1.0
    q: float = 5.0
    profile: str = "constant"
    amplitude: float = 0.0
    width: float = 1.0

    def coefficient(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.profile == "constant" or self.amplitude == 0.0:
            return np.full_like(r, self.C)
        x = r / self.width
        bump = np.exp(-x * x) if self.profile == "gaussian" else np.exp(-x)
        return self.C * (1.0 + self.amplitude * bump)

    def sup_coefficient(self) -> float:
        return self.C * (1.0 + max(self.amplitude, 0.0))


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the coupled problem

    ``supercritical`` swaps lam*f + crit_coeff*|t|^4 t for the capped
    nonlinearity g_K (requires p and K).
    """

    lam: float = 30.0
    eps: float = 0.5
    T: float = 3.0
    theta: float = 5.0
    terms: Tuple[PowerTerm, ...] = field(default_factory=lambda: (PowerTerm(),))
    crit_coeff: float = 1.0
    p: Optional[float] = None
    K: Optional[float] = None
    supercritical: bool = False

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @property
    def min_q(self) -> float:
        return min(t.q for t in self.terms)

    @property
    def max_q(self) -> float:
        return max(t.q for t in self.terms)

    def source(self, r, t) -> np.ndarray:
        """Right-hand side nonlinearity of the u-equation"""
        if self.supercritical:
            return gk_eval(self, r, t)
        t = np.asarray(t, dtype=float)
        return self.lam * f_eval(self, r, t) + self.crit_coeff * np.abs(t) ** 4 * t

    def source_primitive(self, r, t) -> np.ndarray:
        if self.supercritical:
            return GK_eval(self, r, t)
        t = np.asarray(t, dtype=float)
        return self.lam * F_eval(self, r, t) + self.crit_coeff * np.abs(t) ** CRIT / CRIT

    def power_part(self, r, t) -> np.ndarray:
        """Primitive of the source minus lam*F: the critical (or capped supercritical) term"""
        return self.source_primitive(r, t) - self.lam * F_eval(self, r, t)

    def power_density(self, r, t) -> np.ndarray:
        return self.source(r, t) - self.lam * f_eval(self, r, t)


def f_eval(m: ModelParams, r, t) -> np.ndarray:
    """f(r, t) = sum_i C_i(r) t_+^(q_i - 1)"""
    tp = np.maximum(np.asarray(t, dtype=float), 0.0)
    out = np.zeros(np.broadcast(np.asarray(r), tp).shape)
    for term in m.terms:
        out = out + term.coefficient(r) * tp ** (term.q - 1.0)
    return out


def F_eval(m: ModelParams, r, t) -> np.ndarray:
    """Exact primitive of f_eval in t"""
    tp = np.maximum(np.asarray(t, dtype=float), 0.0)
    out = np.zeros(np.broadcast(np.asarray(r), tp).shape)
    for term in m.terms:
        out = out + term.coefficient(r) * tp**term.q / term.q
    return out


def _require_cap(m: ModelParams) -> Tuple[float, float]:
    if m.p is None or m.K is None:
        raise ConfigError("Supercritical nonlinearity needs both p and K")
    return float(m.p), float(m.K)


def gk_eval(m: ModelParams, r, t) -> np.ndarray:
    """lam*f + |t|^(p-2) t below the cap K, lam*f + K^(p-6) |t|^4 t above it"""
    p, K = _require_cap(m)
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    below = a ** (p - 2.0) * t
    above = K ** (p - CRIT) * a**4 * t
    return m.lam * f_eval(m, r, t) + np.where(a <= K, below, above)


def GK_eval(m: ModelParams, r, t) -> np.ndarray:
    p, K = _require_cap(m)
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    below = a**p / p
    above = K**p / p + K ** (p - CRIT) * (a**CRIT - K**CRIT) / CRIT
    return m.lam * F_eval(m, r, t) + np.where(a <= K, below, above)


@dataclass(frozen=True)
class CutoffSpec:
    """Descending cubic smoothstep: 1 on [0,1], 1 - 3s^2 + 2s^3 with s = t-1 on [1,2], 0 after"""

    lower: float = 1.0
    upper: float = 2.0

    def psi(self, t):
        s = np.clip((np.asarray(t, dtype=float) - self.lower) / (self.upper - self.lower), 0.0, 1.0)
        out = 1.0 - 3.0 * s**2 + 2.0 * s**3
        return float(out) if np.ndim(out) == 0 else out

    def psi_prime(self, t):
        t = np.asarray(t, dtype=float)
        width = self.upper - self.lower
        s = (t - self.lower) / width
        inside = (s > 0.0) & (s < 1.0)
        out = np.where(inside, (-6.0 * s + 6.0 * s**2) / width, 0.0)
        return float(out) if np.ndim(out) == 0 else out


CUTOFF = CutoffSpec()


def psi(t):
    return CUTOFF.psi(t)


def psi_prime(t):
    return CUTOFF.psi_prime(t)


def h_T(m: ModelParams, u_norm_sq: float) -> float:
    """Truncation factor psi(|u|^2 / T^2)"""
    return float(psi(u_norm_sq / m.T**2))


def h_T_prime(m: ModelParams, u_norm_sq: float) -> float:
    """Scalar factor (2/T^2) psi'(|u|^2 / T^2) of the truncation derivative"""
    return float(2.0 / m.T**2 * psi_prime(u_norm_sq / m.T**2))


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    """Pass/fail per hypothesis; never raises"""

    checks: List[HypothesisCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[HypothesisCheck]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


PROBE_RADII = np.array([0.0, 0.5, 1.0, 3.0, 10.0])


def _check_params(m: ModelParams) -> HypothesisCheck:
    problems = []

    def finite(x) -> bool:
        try:
            return math.isfinite(float(x))
        except (TypeError, ValueError):
            return False

    if not (finite(m.lam) and m.lam > 0):
        problems.append(f"lambda must be > 0 (got {m.lam})")
    if not (finite(m.eps) and m.eps >= 0):
        problems.append(f"eps must be >= 0 (got {m.eps})")
    if not (finite(m.T) and m.T > 0):
        problems.append(f"T must be > 0 (got {m.T})")
    if not (finite(m.crit_coeff) and m.crit_coeff >= 0):
        problems.append(f"crit_coeff must be >= 0 (got {m.crit_coeff})")
    if not m.terms:
        problems.append("at least one power term is required")
    for i, term in enumerate(m.terms):
        if not (finite(term.C) and term.C >= 0):
            problems.append(f"term {i}: C must be >= 0 (got {term.C})")
        if not (finite(term.q) and 2 < term.q < CRIT):
            problems.append(f"term {i}: q must lie in (2, 6) (got {term.q})")
        if term.profile not in PROFILES:
            problems.append(f"term {i}: unknown profile {term.profile!r}")
        if not (finite(term.amplitude) and term.amplitude > -1):
            problems.append(f"term {i}: amplitude must exceed -1 (got {term.amplitude})")
        if not (finite(term.width) and term.width > 0):
            problems.append(f"term {i}: width must be > 0 (got {term.width})")
    if m.terms and all(finite(t.q) for t in m.terms):
        if not (finite(m.theta) and 4 < m.theta <= m.min_q):
            problems.append(f"theta must satisfy 4 < theta <= min q = {m.min_q} (got {m.theta})")
    if m.p is not None and not (finite(m.p) and m.p > CRIT):
        problems.append(f"p must be > 6 (got {m.p})")
    if m.K is not None and not (finite(m.K) and m.K > 0):
        problems.append(f"K must be > 0 (got {m.K})")
    if m.supercritical and (m.p is None or m.K is None):
        problems.append("supercritical runs need p and K")
    return HypothesisCheck("params", not problems, "; ".join(problems))


def _check_f0(m: ModelParams) -> HypothesisCheck:
    t = np.linspace(-10.0, 0.0, 101)
    worst = max(float(np.max(np.abs(f_eval(m, r, t)))) for r in PROBE_RADII)
    return HypothesisCheck("f0", worst == 0.0, f"max |f(t)| on t <= 0: {worst:.3g}")


def _check_f1(m: ModelParams) -> HypothesisCheck:
    t = np.logspace(-8, -2, 61)
    ok = True
    worst = 0.0
    for r in PROBE_RADII:
        ratio = f_eval(m, r, t) / t
        vanishing = ratio[-1] == 0.0 or ratio[0] < ratio[-1]
        ok = ok and bool(np.all(np.diff(ratio) >= 0)) and vanishing
        worst = max(worst, float(ratio[0]))
    return HypothesisCheck("f1", ok, f"f(t)/t at t=1e-8: {worst:.3g}")


def _check_f2(m: ModelParams) -> HypothesisCheck:
    q_probe = (m.max_q + CRIT) / 2.0 if m.max_q < CRIT else float(CRIT)
    t = np.logspace(1, 6, 51)
    ok = m.max_q < CRIT
    for r in PROBE_RADII:
        ratio = f_eval(m, r, t) / t ** (q_probe - 1.0)
        ok = ok and bool(np.all(np.diff(ratio) <= 1e-12 * ratio[:-1]))
    return HypothesisCheck("f2", ok, f"growth probed against t^{q_probe - 1:.3g}")


def _check_f3(m: ModelParams) -> HypothesisCheck:
    t = np.linspace(1e-3, 100.0, 400)
    ok = 4 < m.theta < CRIT
    slack = math.inf
    for r in PROBE_RADII:
        F = F_eval(m, r, t)
        tf = t * f_eval(m, r, t)
        ok = ok and bool(np.all(F > 0)) and bool(np.all(m.theta * F <= tf * (1 + 1e-12)))
        slack = min(slack, float(np.min(tf - m.theta * F)))
    return HypothesisCheck("f3", ok, f"theta={m.theta}, min(t f - theta F) = {slack:.3g}")


def validate(m: ModelParams) -> ValidationReport:
    """Check the parameter invariants and spot-check the conditions f0-f3 on f numerically"""
    report = ValidationReport([_check_params(m)])
    if not report.passed and not m.terms:
        return report
    for check in (_check_f0, _check_f1, _check_f2, _check_f3):
        try:
            report.checks.append(check(m))
        except (ValueError, TypeError, FloatingPointError, ZeroDivisionError) as e:
            report.checks.append(HypothesisCheck(check.__name__[-2:], False, str(e)))
    for c in report.failures():
        logger.debug(f"Hypothesis {c.name} failed: {c.detail}")
    return report


def require_valid(m: ModelParams) -> ModelParams:
    report = validate(m)
    if not report.passed:
        details = "; ".join(f"{c.name}: {c.detail}" for c in report.failures())
        raise ConfigError(f"Invalid model parameters ({details})")
    return m
