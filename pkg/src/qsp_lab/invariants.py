"""
Executable property suite covering every module at a small fixed scale
"""
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .energy import ReducedEnergy, default_profile, thresholds
from .model import (
    CUTOFF,
    F_eval,
    GK_eval,
    ModelParams,
    f_eval,
    gk_eval,
    validate,
)
from .mountain_pass import MountainPassOptions, MountainPassSolver
from .phi_solver import (
    PhiSolverOptions,
    check_identity,
    green_potential,
    phi_energy,
    phi_energy_gradient,
    solve_phi,
)
from .radial_grid import (
    Field,
    RadialGrid,
    apply_helmholtz,
    build_uniform,
    inner_h1,
    norm_h1,
    solve_helmholtz,
    stiffness_form,
    stiffness_matvec,
    volume_integral,
)

logger = logging.getLogger("qsp_lab.invariants")

SUITE_R = 15.0
SUITE_N = 800
SEED = 20240917


@dataclass
class CheckResult:
    module: str
    prop: str
    observed: str
    required: str
    passed: bool


def _rel(a: float, b: float, floor: float = 1e-300) -> float:
    return abs(a - b) / max(abs(b), floor)


def smooth_random_field(g: RadialGrid, rng: np.random.Generator, bumps: int = 4) -> Field:
    """Sum of Gaussian bumps with random centres, widths and signs"""
    centres = rng.uniform(0.0, 4.0, bumps)
    widths = rng.uniform(0.6, 1.5, bumps)
    amps = rng.normal(size=bumps)
    return g.sample(
        lambda r: sum(a * np.exp(-(((r - c) / w) ** 2)) for a, c, w in zip(amps, centres, widths))
    )


class InvariantSuite:
    """Runs the property checks and collects one CheckResult per property"""

    def __init__(
        self,
        params: Optional[ModelParams] = None,
        R: float = SUITE_R,
        N: int = SUITE_N,
        quick: bool = False,
        grid_hook: Optional[Callable[[RadialGrid], None]] = None,
    ):
        self.params = params or ModelParams()
        self.grid = build_uniform(R, N)
        if grid_hook is not None:
            grid_hook(self.grid)
        self.quick = quick
        self.rng = np.random.default_rng(SEED)
        self.phi_opts = PhiSolverOptions()
        self.results: List[CheckResult] = []
        self.logger = logging.getLogger("qsp_lab.invariants.InvariantSuite")

    def record(self, module: str, prop: str, observed: float, required: str, passed: bool):
        text = f"{observed:.3e}" if isinstance(observed, float) else str(observed)
        self.results.append(CheckResult(module, prop, text, required, bool(passed)))
        level = logging.DEBUG if passed else logging.WARNING
        self.logger.log(level, f"{module}.{prop}: {text} (required {required})")

    def _guard(self, module: str, prop: str, fn: Callable[[], None]):
        try:
            fn()
        except Exception as e:  # any failure is itemised, never fatal to the suite
            self.results.append(CheckResult(module, prop, f"{type(e).__name__}: {e}", "no error", False))
            self.logger.warning(f"{module}.{prop} raised {type(e).__name__}: {e}")

    # -- radial_grid ------------------------------------------------------

    def check_grid(self):
        g = self.grid

        def constants():
            err = _rel(float(np.sum(g.vol_weights)), g.ball_volume)
            self.record("radial_grid", "quadrature exact on constants", err, "<= 1e-12", err <= 1e-12)

        def order():
            exact = math.pi**1.5
            errs = []
            for n in (g.N, 2 * g.N):
                h = build_uniform(g.R, n)
                errs.append(abs(volume_integral(h, np.exp(-h.nodes**2)) - exact))
            rate = math.log2(errs[0] / errs[1])
            self.record("radial_grid", "quadrature order", rate, "in [1.8, 2.2]", 1.8 <= rate <= 2.2)

        def by_parts():
            h = smooth_random_field(g, self.rng)
            v = smooth_random_field(g, self.rng)
            lhs = stiffness_form(g, h, v)
            rhs = float(np.dot(v.values, stiffness_matvec(g, h)))
            err = _rel(rhs, lhs)
            self.record("radial_grid", "discrete integration by parts", err, "<= 1e-12", err <= 1e-12)

        def inverse():
            h = smooth_random_field(g, self.rng)
            back = solve_helmholtz(g, apply_helmholtz(g, h))
            err = float(np.max(np.abs(back.values - h.values)) / h.sup())
            self.record("radial_grid", "Helmholtz solve inverts the operator", err, "<= 1e-10",
                        err <= 1e-10)

        def symmetric():
            s1 = smooth_random_field(g, self.rng)
            s2 = smooth_random_field(g, self.rng)
            a = volume_integral(g, solve_helmholtz(g, s1) * s2)
            b = volume_integral(g, solve_helmholtz(g, s2) * s1)
            err = _rel(a, b)
            self.record("radial_grid", "Helmholtz self-adjointness", err, "<= 1e-10", err <= 1e-10)

        for name, fn in (("constants", constants), ("order", order), ("by_parts", by_parts),
                         ("inverse", inverse), ("symmetric", symmetric)):
            self._guard("radial_grid", name, fn)

    # -- model ------------------------------------------------------------

    def check_model(self):
        m = self.params
        capped = m.with_(p=7.0, K=1.0, lam=1.0)

        def primitives():
            r = self.rng.uniform(0.0, 5.0, 50)
            t = self.rng.uniform(0.05, 3.0, 50)
            h = 1e-5 * t
            worst = 0.0
            for P, p in ((F_eval, f_eval), (GK_eval, gk_eval)):
                fd = (P(capped, r, t + h) - P(capped, r, t - h)) / (2 * h)
                exact = p(capped, r, t)
                worst = max(worst, float(np.max(np.abs(fd - exact) / np.abs(exact))))
            self.record("model", "primitives differentiate to densities", worst, "<= 1e-6",
                        worst <= 1e-6)

        def ar_condition():
            t = np.linspace(1e-3, 50.0, 500)
            tf = t * f_eval(m, 0.0, t)
            slack = float(np.min((tf - m.theta * F_eval(m, 0.0, t)) / tf))
            self.record("model", "theta F <= t f", slack, ">= -1e-12 relative", slack >= -1e-12)

        def cutoff():
            t = np.linspace(0.0, 3.0, 3001)
            dpsi = CUTOFF.psi_prime(t)
            ok = bool(np.all(dpsi <= 0.0)) and float(np.max(np.abs(dpsi))) <= 2.0
            ok = ok and CUTOFF.psi(0.5) == 1.0 and CUTOFF.psi(3.0) == 0.0
            self.record("model", "cutoff monotone with |psi'| <= 2",
                        float(np.max(np.abs(dpsi))), "<= 2, psi' <= 0", ok)

        def hypotheses():
            report = validate(m)
            self.record("model", "conditions f0-f3", "pass" if report.passed else
                        "; ".join(c.name for c in report.failures()), "all pass", report.passed)

        for name, fn in (("primitives", primitives), ("ar", ar_condition), ("cutoff", cutoff),
                         ("hypotheses", hypotheses)):
            self._guard("model", name, fn)

    # -- phi_solver -------------------------------------------------------

    def check_phi(self):
        g = self.grid
        u = g.sample(lambda r: np.exp(-0.5 * r * r))
        rho = u * u
        tol = self.phi_opts.tol

        def oracle():
            sol = solve_phi(g, rho, 0.0, self.phi_opts)
            ref = green_potential(g, rho)
            gap = float(np.max(np.abs(sol.phi.values - ref.values)) / ref.sup())
            self.record("phi_solver", "eps = 0 Green oracle", gap, "<= 1e-2", gap <= 1e-2)

        def identity():
            sol = solve_phi(g, rho, 0.5, self.phi_opts)
            res = check_identity(sol)
            self.record("phi_solver", "energy identity", res, "<= 1e-8", sol.converged and res <= 1e-8)

        def positivity():
            sol = solve_phi(g, rho, 1.0, self.phi_opts)
            ratio = sol.min_value / sol.sup
            self.record("phi_solver", "positivity", ratio, ">= -1e-10", ratio >= -1e-10)

        def uniqueness():
            a = solve_phi(g, rho, 1.0, self.phi_opts)
            start = Field(g, np.abs(smooth_random_field(g, self.rng).values))
            b = solve_phi(g, rho, 1.0, self.phi_opts, phi0=start)
            gap = float(np.max(np.abs(a.phi.values - b.phi.values)))
            self.record("phi_solver", "uniqueness from two starts", gap, "<= 100 tol",
                        gap <= 100 * tol * max(1.0, a.sup))

        def minimality():
            sol_eps = solve_phi(g, rho, 1.0, self.phi_opts)
            phi0 = green_potential(g, rho)
            first = phi_energy(g, sol_eps.phi, rho, 1.0) <= phi_energy(g, phi0, rho, 1.0)
            second = phi_energy(g, phi0, rho, 0.0) <= phi_energy(g, sol_eps.phi, rho, 0.0)
            self.record("phi_solver", "energy minimality", f"{first}/{second}", "True/True",
                        first and second)

        def continuity():
            base = solve_phi(g, rho, 1.0, self.phi_opts)
            bump = g.sample(lambda r: np.exp(-((r - 1.0) ** 2)))
            gaps = []
            for n in range(1, 6):
                sol = solve_phi(g, rho + 2.0**-n * bump, 1.0, self.phi_opts)
                gaps.append(abs(sol.dirichlet2 - base.dirichlet2) + abs(sol.dirichlet4 - base.dirichlet4))
            ok = all(b < a for a, b in zip(gaps, gaps[1:])) and gaps[-1] < 0.1 * gaps[0]
            self.record("phi_solver", "continuity of the solution map", gaps[-1] / gaps[0],
                        "decreasing, last/first < 0.1", ok)

        def gradient():
            phi = smooth_random_field(g, self.rng)
            worst = 0.0
            for _ in range(5):
                v = smooth_random_field(g, self.rng)
                h = 1e-4
                fd = (phi_energy(g, phi + h * v, rho, 1.0) - phi_energy(g, phi - h * v, rho, 1.0)) / (2 * h)
                exact = float(np.dot(phi_energy_gradient(g, phi, rho, 1.0), v.values))
                worst = max(worst, _rel(fd, exact))
            self.record("phi_solver", "energy gradient vs finite differences", worst, "<= 1e-5",
                        worst <= 1e-5)

        for name, fn in (("oracle", oracle), ("identity", identity), ("positivity", positivity),
                         ("uniqueness", uniqueness), ("minimality", minimality),
                         ("continuity", continuity), ("gradient", gradient)):
            self._guard("phi_solver", name, fn)

    # -- energy -----------------------------------------------------------

    def check_energy(self):
        g = self.grid
        m = self.params
        u = g.sample(lambda r: 0.6 * np.exp(-0.5 * r * r))

        def homogeneity():
            e0 = ReducedEnergy(g, m.with_(eps=0.0))
            e1 = ReducedEnergy(g, m.with_(eps=1.0))
            t = 2.0
            p1, pt = e0.phi(u).phi, e0.phi(t * u).phi
            dev0 = float(np.max(np.abs(pt.values - t * t * p1.values)) / (t * t * p1.sup()))
            q1, qt = e1.phi(u).phi, e1.phi(t * u).phi
            dev1 = float(np.max(np.abs(qt.values - t * t * q1.values)) / (t * t * q1.sup()))
            self.record("energy", "eps = 0 homogeneity", dev0, "<= 1e-8", dev0 <= 1e-8)
            self.record("energy", "eps = 1 breaks homogeneity", dev1, "> 1e-3", dev1 > 1e-3)

        def fiber_derivative():
            energy = ReducedEnergy(g, m)
            v = default_profile(g)
            h = 1e-4
            fd = (energy.I_eps((1 + h) * v) - energy.I_eps((1 - h) * v)) / (2 * h)
            sol = energy.phi(v)
            exact = volume_integral(g, sol.phi * v * v)
            err = _rel(fd, exact)
            self.record("energy", "I_eps fiber derivative", err, "<= 1e-4", err <= 1e-4)

        def gradients():
            energy = ReducedEnergy(g, m)
            norm_sq = inner_h1(g, u, u)
            trunc = ReducedEnergy(g, m.with_(T=math.sqrt(norm_sq / 1.5)))
            worst = 0.0
            for value, grad in (
                (lambda x: energy.J(x).total, energy.grad_J),
                (trunc.value, trunc.grad_J_trunc),
            ):
                w = grad(u)
                for _ in range(10):
                    v = smooth_random_field(g, self.rng)
                    h = 1e-4
                    fd = (value(u + h * v) - value(u - h * v)) / (2 * h)
                    worst = max(worst, _rel(fd, inner_h1(g, w, v)))
            self.record("energy", "gradients vs finite differences", worst, "<= 1e-4", worst <= 1e-4)

        def truncation():
            energy = ReducedEnergy(g, m.with_(T=2.0 * norm_h1(g, u)))
            gap = abs(energy.J(u).total - energy.J_trunc(u).total)
            self.record("energy", "J_trunc = J inside the ball", gap, "== 0", gap == 0.0)

        def sobolev():
            report = thresholds(m)
            self.record("energy", "best Sobolev constant", report.S_rel_error, "<= 1e-2",
                        report.S_rel_error <= 1e-2)

        def endpoint():
            energy = ReducedEnergy(g, m)
            e = energy.find_e_T()
            value = energy.value(e)
            ok = value < 0.0 and inner_h1(g, e, e) >= 8 * m.T**2 * (1 - 1e-12)
            self.record("energy", "negative endpoint", value, "< 0", ok)

        for name, fn in (("homogeneity", homogeneity), ("fiber", fiber_derivative),
                         ("gradients", gradients), ("truncation", truncation),
                         ("sobolev", sobolev), ("endpoint", endpoint)):
            self._guard("energy", name, fn)

    # -- mountain_pass ----------------------------------------------------

    def check_mountain_pass(self):
        g = self.grid
        m = self.params
        opts = MountainPassOptions()

        def critical_point():
            cp = MountainPassSolver(g, m, opts, self.phi_opts).run()
            energy = ReducedEnergy(g, m.with_(T=cp.T))
            tol = opts.tol
            self.record("mountain_pass", "converged with positive level", cp.grad_norm,
                        f"<= {tol:g} max(1,|u|), level > 0", cp.converged and cp.level > 0)
            ratio = cp.min_u / cp.u.max()
            self.record("mountain_pass", "approximate nonnegativity", ratio, ">= -1e-6",
                        ratio >= -1e-6)
            self.record("mountain_pass", "level below the initial path", cp.level,
                        f"<= {cp.path_level:.6g}",
                        cp.level <= cp.path_level + 1e-8 * max(1.0, abs(cp.path_level)))
            w = energy.grad_J_trunc(cp.u)
            worst = 0.0
            for _ in range(20):
                v = smooth_random_field(g, self.rng)
                worst = max(worst, abs(inner_h1(g, w, v)) / norm_h1(g, v))
            self.record("mountain_pass", "criticality in random directions", worst,
                        f"<= {tol:g} max(1,|u|)", worst <= tol * max(1.0, cp.h1_norm))
            self.record("mountain_pass", "norm within the truncation radius", cp.h1_norm,
                        f"<= T = {cp.T:g}", cp.promoted)
            if cp.promoted:
                self.record("mountain_pass", "untruncated gradient", cp.untruncated_grad_norm,
                            f"<= {2 * tol:g} max(1,|u|)",
                            cp.untruncated_grad_norm <= 2 * tol * max(1.0, cp.h1_norm))
                dec = energy.identity_decomposition(cp.u)
                self.record("mountain_pass", "theta decomposition", dec.defect, "<= 1e-6",
                            dec.defect <= 1e-6)
            res = check_identity(cp.phi)
            pos = cp.phi.min_value / cp.phi.sup
            self.record("mountain_pass", "phi identity and positivity", res, "<= 1e-8, min >= 0",
                        res <= 1e-8 and pos >= -1e-10)

        self._guard("mountain_pass", "critical_point", critical_point)

    def run(self) -> List[CheckResult]:
        start = time.perf_counter()
        self.check_grid()
        self.check_model()
        self.check_phi()
        self.check_energy()
        if not self.quick:
            self.check_mountain_pass()
        failed = sum(not r.passed for r in self.results)
        self.logger.info(
            f"Invariant suite: {len(self.results) - failed}/{len(self.results)} passed "
            f"in {time.perf_counter() - start:.1f}s"
        )
        return self.results


def invariant_suite(
    params: Optional[ModelParams] = None,
    quick: bool = False,
    grid_hook: Optional[Callable[[RadialGrid], None]] = None,
) -> List[CheckResult]:
    """Run every property check at R = 15, N = 800; ``quick`` skips the mountain-pass run"""
    return InvariantSuite(params, quick=quick, grid_hook=grid_hook).run()


def corrupt_quadrature(g: RadialGrid, index: int = 5, factor: float = 1.01):
    """Fault injection: perturb one volume weight of an otherwise valid grid"""
    weights = g.vol_weights.copy()
    weights[index] *= factor
    weights.flags.writeable = False
    object.__setattr__(g, "vol_weights", weights)
