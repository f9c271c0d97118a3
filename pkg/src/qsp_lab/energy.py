"""
Reduced energy J, its truncation J^T, their H^1 gradients and the fiber/threshold helpers
"""
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import BracketError
from .model import CRIT, F_eval, ModelParams, f_eval, h_T, h_T_prime
from .phi_solver import PhiSolution, PhiSolverOptions, solve_phi
from .radial_grid import (
    Field,
    RadialGrid,
    build_uniform,
    inner_h1,
    norm_h1,
    norm_lp,
    seminorm_grad_lp,
    solve_helmholtz,
)

logger = logging.getLogger("qsp_lab.energy")

T_SCAN_RANGE = (1e-4, 1e4)
T_SCAN_SAMPLES = 160
T_SCAN_XTOL = 1e-6
MAX_DOUBLINGS = 60


@dataclass
class EnergyBreakdown:
    """Terms of J (or J^T); total = h1_half + h_t * i_eps - f_term - crit_term"""

    h1_half: float
    i_eps: float
    i_eps_d2: float
    i_eps_d4: float
    f_term: float
    crit_term: float
    total: float
    h_t: float = 1.0


@dataclass
class IdentityDecomposition:
    """J at a critical point split into the terms of J - (1/theta) J'(u)[u]"""

    h1_term: float
    d2_term: float
    d4_term: float
    f_term: float
    crit_term: float
    total: float
    level: float

    @property
    def defect(self) -> float:
        return abs(self.level - self.total) / max(1.0, abs(self.level))


class ReducedEnergy:
    """J and J^T for one (grid, params) pair

    Potentials are cached by the content hash of u, so a value and a
    gradient at the same u share one solve. Each new solve is warm-started
    from the last potential.
    """

    def __init__(
        self,
        grid: RadialGrid,
        params: ModelParams,
        phi_options: Optional[PhiSolverOptions] = None,
        cache_size: int = 64,
    ):
        self.grid = grid
        self.params = params
        self.phi_options = phi_options or PhiSolverOptions()
        self.cache_size = cache_size
        self.logger = logging.getLogger("qsp_lab.energy.ReducedEnergy")
        self._cache: "OrderedDict[str, PhiSolution]" = OrderedDict()
        self._last_phi: Optional[Field] = None
        self.solves = 0

    def with_params(self, params: ModelParams) -> "ReducedEnergy":
        return ReducedEnergy(self.grid, params, self.phi_options, self.cache_size)

    def phi(self, u: Field) -> PhiSolution:
        """phi_eps(u) solving -Lap phi - eps^4 Lap_4 phi = u^2"""
        key = u.content_hash()
        cached = self._cache.get(key)
        if cached is not None:
            self._cache.move_to_end(key)
            return cached
        sol = solve_phi(
            self.grid,
            u.values * u.values,
            self.params.eps,
            self.phi_options,
            phi0=self._last_phi,
            raise_on_failure=True,
        )
        self.solves += 1
        self._last_phi = sol.phi
        self._cache[key] = sol
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return sol

    def I_eps(self, u: Field) -> float:
        sol = self.phi(u)
        return 0.25 * sol.dirichlet2 + 0.375 * self.params.eps**4 * sol.dirichlet4

    def _local_terms(self, u: Field) -> Tuple[float, float]:
        g = self.grid
        m = self.params
        r = g.nodes
        f_term = m.lam * float(np.dot(g.vol_weights, F_eval(m, r, u.values)))
        crit_term = float(np.dot(g.vol_weights, m.power_part(r, u.values)))
        return f_term, crit_term

    def _breakdown(self, u: Field, h_t: float) -> EnergyBreakdown:
        u_sq = inner_h1(self.grid, u, u)
        f_term, crit_term = self._local_terms(u)
        if h_t > 0.0:
            sol = self.phi(u)
            d2 = 0.25 * sol.dirichlet2
            d4 = 0.375 * self.params.eps**4 * sol.dirichlet4
        else:
            d2 = d4 = 0.0
        i_eps = d2 + d4
        total = 0.5 * u_sq + h_t * i_eps - f_term - crit_term
        return EnergyBreakdown(0.5 * u_sq, i_eps, d2, d4, f_term, crit_term, total, h_t)

    def J(self, u: Field) -> EnergyBreakdown:
        return self._breakdown(u, 1.0)

    def J_trunc(self, u: Field) -> EnergyBreakdown:
        return self._breakdown(u, h_T(self.params, inner_h1(self.grid, u, u)))

    def value(self, u: Field) -> float:
        return self.J_trunc(u).total

    def _nonlocal_density(self, u: Field) -> np.ndarray:
        return self.phi(u).phi.values * u.values

    def grad_J(self, u: Field) -> Field:
        """H^1 Riesz representative of J'(u)"""
        density = self._nonlocal_density(u) - self.params.source(self.grid.nodes, u.values)
        return u + solve_helmholtz(self.grid, density)

    def grad_J_trunc(self, u: Field) -> Field:
        """H^1 Riesz representative of (J^T)'(u)

        (1 + (2/T^2) psi'(|u|^2/T^2) I(u)) u + solve_helmholtz(h_T phi u - source(u))
        """
        u_sq = inner_h1(self.grid, u, u)
        h = h_T(self.params, u_sq)
        hp = h_T_prime(self.params, u_sq)
        density = -self.params.source(self.grid.nodes, u.values)
        scale = 1.0
        if h > 0.0:
            density = density + h * self._nonlocal_density(u)
        if hp != 0.0:
            scale += hp * self.I_eps(u)
        return scale * u + solve_helmholtz(self.grid, density)

    def directional_derivative(self, u: Field, v: Field, truncated: bool = True) -> float:
        """J^T'(u)[v] (or J'(u)[v]) without a Helmholtz solve"""
        g = self.grid
        u_sq = inner_h1(g, u, u)
        h, hp = (h_T(self.params, u_sq), h_T_prime(self.params, u_sq)) if truncated else (1.0, 0.0)
        scale = 1.0 + (hp * self.I_eps(u) if hp != 0.0 else 0.0)
        density = -self.params.source(g.nodes, u.values)
        if h > 0.0:
            density = density + h * self._nonlocal_density(u)
        return scale * inner_h1(g, u, v) + float(np.dot(g.vol_weights, density * v.values))

    def fiber_value(self, v: Field, t: float) -> float:
        return self.value(t * v)

    def fiber_derivative(self, v: Field, t: float) -> float:
        """d/dt J^T(t v)"""
        return self.directional_derivative(t * v, v)

    def find_t_max(self, v: Field) -> Tuple[float, float]:
        """Global maximiser of t -> J^T(t v) on a log-spaced bracket, refined by golden section"""
        if not np.any(v.values):
            raise BracketError("Fiber maximiser needs a nonzero direction")
        ts = np.logspace(math.log10(T_SCAN_RANGE[0]), math.log10(T_SCAN_RANGE[1]), T_SCAN_SAMPLES)
        values = np.array([self.fiber_value(v, t) for t in ts])
        k = int(np.argmax(values))
        if k == 0 or k == len(ts) - 1 or values[k] <= 0.0:
            raise BracketError(
                f"Fiber maximum not bracketed (index {k}, value {values[k]:.3e}); "
                "check theta and the nonlinearity"
            )

        def objective(t):
            return -self.fiber_value(v, t)

        try:
            res = minimize_scalar(
                objective,
                bracket=(ts[k - 1], ts[k], ts[k + 1]),
                method="golden",
                options={"xtol": T_SCAN_XTOL},
            )
        except (ValueError, RuntimeError):
            res = minimize_scalar(
                objective,
                bounds=(ts[k - 1], ts[k + 1]),
                method="bounded",
                options={"xatol": T_SCAN_XTOL * ts[k]},
            )
        t_star, level = float(res.x), float(-res.fun)
        if level < values[k]:
            t_star, level = float(ts[k]), float(values[k])
        self.logger.debug(f"Fiber maximum t*={t_star:.6g}, J^T={level:.6g}")
        return t_star, level

    def find_e_T(self) -> Field:
        """Endpoint t v0 with J^T(t v0) < 0 from a doubling scan started at 2 sqrt(2) T

        Every scanned point has |t v0|^2 >= 8 T^2, where the cutoff kills the
        nonlocal term, so the result does not depend on eps. The scan tests the
        lam-free bound |tv0|^2/2 - int P(tv0) >= J^T(tv0) when the power part
        is present, which also makes it independent of lam.
        """
        return self.find_endpoint(default_profile(self.grid))

    def find_endpoint(self, direction: Field) -> Field:
        """Same scan as find_e_T along an arbitrary nonzero direction"""
        g = self.grid
        m = self.params
        scale = norm_h1(g, direction)
        if scale == 0.0:
            raise BracketError("Endpoint scan needs a nonzero direction")
        v0 = direction / scale
        r = g.nodes
        lam_free = np.any(m.power_part(r, v0.values) > 0.0)
        t = 2.0 * math.sqrt(2.0) * m.T
        for _ in range(MAX_DOUBLINGS + 1):
            u = t * v0
            if lam_free:
                bound = 0.5 * t * t - float(np.dot(g.vol_weights, m.power_part(r, u.values)))
            else:
                bound = self.value(u)
            if bound < 0.0:
                self.logger.debug(f"e_T found at t={t:.6g}")
                return u
            t *= 2.0
        raise BracketError(
            f"No negative-energy endpoint after {MAX_DOUBLINGS} doublings; theta may be misconfigured"
        )

    def identity_decomposition(self, u: Field) -> IdentityDecomposition:
        """J(u) - (1/theta) J'(u)[u] written term by term (equals J(u) at a critical point)"""
        g = self.grid
        m = self.params
        th = m.theta
        r = g.nodes
        sol = self.phi(u)
        u_sq = inner_h1(g, u, u)
        w = g.vol_weights
        f_term = m.lam * float(
            np.dot(w, f_eval(m, r, u.values) * u.values / th - F_eval(m, r, u.values))
        )
        crit_term = float(
            np.dot(w, m.power_density(r, u.values) * u.values / th - m.power_part(r, u.values))
        )
        h1_term = (th - 2.0) / (2.0 * th) * u_sq
        d2_term = (th - 4.0) / (4.0 * th) * sol.dirichlet2
        d4_term = (3.0 * th - 8.0) / (8.0 * th) * m.eps**4 * sol.dirichlet4
        total = h1_term + d2_term + d4_term + f_term + crit_term
        return IdentityDecomposition(
            h1_term, d2_term, d4_term, f_term, crit_term, total, self.J(u).total
        )


def default_profile(g: RadialGrid) -> Field:
    """exp(-r^2/2) scaled to unit H^1 norm"""
    v = g.sample(lambda r: np.exp(-0.5 * r * r))
    return v / norm_h1(g, v)


def I_eps(g: RadialGrid, u: Field, m: ModelParams) -> float:
    return ReducedEnergy(g, m).I_eps(u)


def J(g: RadialGrid, u: Field, m: ModelParams) -> EnergyBreakdown:
    return ReducedEnergy(g, m).J(u)


def J_trunc(g: RadialGrid, u: Field, m: ModelParams) -> EnergyBreakdown:
    return ReducedEnergy(g, m).J_trunc(u)


def grad_J(g: RadialGrid, u: Field, m: ModelParams) -> Field:
    return ReducedEnergy(g, m).grad_J(u)


def grad_J_trunc(g: RadialGrid, u: Field, m: ModelParams) -> Field:
    return ReducedEnergy(g, m).grad_J_trunc(u)


def find_t_max(g: RadialGrid, v: Field, m: ModelParams) -> Tuple[float, float]:
    return ReducedEnergy(g, m).find_t_max(v)


def find_e_T(g: RadialGrid, m: ModelParams) -> Field:
    return ReducedEnergy(g, m).find_e_T()


# -- thresholds -----------------------------------------------------------

SOBOLEV_EXACT = 3.0 * (math.pi / 2.0) ** (4.0 / 3.0)


@dataclass
class ThresholdReport:
    """Best Sobolev constant and the two level bounds of the compactness argument"""

    S: float
    S_exact: float
    sobolev_bound: float
    truncation_bound: float

    @property
    def S_rel_error(self) -> float:
        return abs(self.S - self.S_exact) / self.S_exact

    def violations(self, level: float) -> List[str]:
        out = []
        if level >= self.sobolev_bound:
            out.append(f"level {level:.6g} >= Sobolev bound {self.sobolev_bound:.6g}")
        if level >= self.truncation_bound:
            out.append(f"level {level:.6g} >= truncation bound {self.truncation_bound:.6g}")
        return out

    def as_dict(self) -> Dict[str, float]:
        return {
            "S": self.S,
            "S_exact": self.S_exact,
            "S_rel_error": self.S_rel_error,
            "sobolev_bound": self.sobolev_bound,
            "truncation_bound": self.truncation_bound,
        }


def sobolev_constant(R: float = 40.0, N: int = 4000) -> float:
    """Rayleigh quotient |grad U|_2^2 / |U|_6^2 of U = (1+r^2)^(-1/2), with the analytic tail beyond R"""
    g = build_uniform(R, N)
    r = g.nodes
    bubble = 1.0 / np.sqrt(1.0 + r * r)
    grad_sq = seminorm_grad_lp(g, bubble, 2) ** 2 + 4.0 * math.pi * (1.0 / R - 1.0 / R**3)
    six = norm_lp(g, bubble, 6) ** 6 + 4.0 * math.pi / (3.0 * R**3)
    return grad_sq / six ** (1.0 / 3.0)


def critical_coefficient(m: ModelParams) -> float:
    if m.supercritical and m.p is not None and m.K is not None:
        return m.K ** (m.p - CRIT)
    return m.crit_coeff


def thresholds(m: ModelParams, R: float = 40.0, N: int = 4000) -> ThresholdReport:
    """S and the admissible level bounds ((6-theta)/(6 theta)) S^(3/2) and ((theta-2)/(2 theta)) T^2

    The Sobolev bound is divided by sqrt(kappa) for a critical coefficient
    kappa != 1 and is infinite when kappa = 0.
    """
    S = sobolev_constant(R, N)
    th = m.theta
    kappa = critical_coefficient(m)
    bound = (CRIT - th) / (CRIT * th) * S**1.5
    sobolev_bound = bound / math.sqrt(kappa) if kappa > 0 else math.inf
    truncation_bound = (th - 2.0) / (2.0 * th) * m.T**2
    return ThresholdReport(S, SOBOLEV_EXACT, sobolev_bound, truncation_bound)
