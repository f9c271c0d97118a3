"""
Convex solver for the quasilinear Poisson equation -Lap phi - eps^4 Lap_4 phi = rho
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import GridError, MaxIterExceeded, NonFiniteEncountered
from .radial_grid import (
    Field,
    FieldLike,
    RadialGrid,
    _values,
    radial_derivative,
    seminorm_grad_lp,
    solve_tridiagonal,
    tridiagonal_from_fluxes,
)

logger = logging.getLogger("qsp_lab.phi_solver")


@dataclass(frozen=True)
class PhiSolverOptions:
    tol: float = 1e-10
    max_iter: int = 100
    armijo: float = 1e-4
    max_halvings: int = 40


@dataclass
class PhiSolution:
    """Solved potential plus the diagnostics of the solve"""

    phi: Field
    iterations: int
    residual: float
    dirichlet2: float
    dirichlet4: float
    x_norm: float
    coupling: float
    min_value: float
    eps: float
    converged: bool = True
    energy_history: List[float] = field(default_factory=list, repr=False)

    @property
    def sup(self) -> float:
        return self.phi.sup()


def _fluxes(g: RadialGrid, d: np.ndarray, eps: float) -> np.ndarray:
    return g.half_weights * (1.0 + eps**4 * d * d) * d / g.dr


def _gradient(g: RadialGrid, phi: np.ndarray, rho: np.ndarray, eps: float) -> np.ndarray:
    q = _fluxes(g, np.diff(phi) / g.dr, eps)
    grad = -g.vol_weights * rho
    grad[:-1] -= q
    grad[1:] += q
    grad[-1] = 0.0
    return grad


def phi_energy(g: RadialGrid, phi: FieldLike, rho: FieldLike, eps: float) -> float:
    """E(phi) = 1/2 int |grad phi|^2 + eps^4/4 int |grad phi|^4 - int rho phi"""
    d = radial_derivative(g, phi)
    d2 = d * d
    quad = np.dot(g.half_weights, 0.5 * d2 + 0.25 * eps**4 * d2 * d2)
    return float(quad - np.dot(g.vol_weights, _values(g, rho) * _values(g, phi)))


def phi_energy_gradient(g: RadialGrid, phi: FieldLike, rho: FieldLike, eps: float) -> np.ndarray:
    """Nodal gradient of phi_energy; the Dirichlet entry is zero"""
    return _gradient(g, _values(g, phi), _values(g, rho), eps)


def _energy_change(
    g: RadialGrid, d: np.ndarray, step: np.ndarray, rho: np.ndarray, eps: float
):
    """E(phi + step) - E(phi) without cancellation, plus a roundoff scale for it"""
    delta = np.diff(step) / g.dr
    e4 = eps**4
    quad = g.half_weights * delta * (d + 0.5 * delta)
    quart = 0.25 * e4 * g.half_weights * delta * (2.0 * d + delta) * ((d + delta) ** 2 + d * d)
    lin = g.vol_weights * rho * step
    change = float(np.sum(quad) + np.sum(quart) - np.sum(lin))
    scale = float(np.sum(np.abs(quad)) + np.sum(np.abs(quart)) + np.sum(np.abs(lin)))
    return change, scale


class PhiSolver:
    """Damped Newton minimiser of the discrete potential energy"""

    def __init__(self, grid: RadialGrid, options: Optional[PhiSolverOptions] = None):
        self.grid = grid
        self.options = options or PhiSolverOptions()
        self.logger = logging.getLogger("qsp_lab.phi_solver.PhiSolver")

    def _converged(self, grad: np.ndarray, phi: np.ndarray, rho: np.ndarray) -> bool:
        tol = self.options.tol
        coupling = float(np.dot(self.grid.vol_weights, rho * phi))
        return (
            float(np.max(np.abs(grad))) <= tol
            and abs(float(np.dot(grad, phi))) <= tol * max(1.0, abs(coupling))
        )

    def solve(
        self,
        rho: FieldLike,
        eps: float,
        phi0: Optional[FieldLike] = None,
        raise_on_failure: bool = False,
    ) -> PhiSolution:
        g = self.grid
        opts = self.options
        rho_v = np.array(_values(g, rho), dtype=float)
        if not np.all(np.isfinite(rho_v)):
            raise NonFiniteEncountered("Source density contains non-finite values")
        rho_v[-1] = 0.0
        phi = np.zeros(g.N + 1) if phi0 is None else np.array(_values(g, phi0), dtype=float)
        phi[-1] = 0.0
        e4 = eps**4

        grad = _gradient(g, phi, rho_v, eps)
        history = [phi_energy(g, phi, rho_v, eps)]
        iterations = 0
        converged = self._converged(grad, phi, rho_v)

        while not converged and iterations < opts.max_iter:
            iterations += 1
            d = np.diff(phi) / g.dr
            hess = g.half_weights * (1.0 + 3.0 * e4 * d * d) / g.dr**2
            main, off = tridiagonal_from_fluxes(g, hess)
            try:
                step = np.zeros(g.N + 1)
                step[:-1] = solve_tridiagonal(main, off, -grad[:-1])
            except GridError as e:
                raise NonFiniteEncountered(
                    f"Newton system failed at iteration {iterations}: {e}"
                ) from e
            slope = float(np.dot(grad, step))
            if not slope < 0.0:
                self.logger.debug(f"Newton direction not a descent at iteration {iterations}")
                step = np.zeros(g.N + 1)
                step[:-1] = -grad[:-1] / main
                slope = float(np.dot(grad, step))

            alpha = 1.0
            accepted = False
            for _ in range(opts.max_halvings + 1):
                change, scale = _energy_change(g, d, alpha * step, rho_v, eps)
                if not np.isfinite(change):
                    raise NonFiniteEncountered(f"Energy became non-finite at iteration {iterations}")
                if change <= opts.armijo * alpha * slope or abs(change) <= 64 * np.finfo(float).eps * scale:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                self.logger.debug(f"Armijo backtracking exhausted at iteration {iterations}")
                break

            phi = phi + alpha * step
            grad = _gradient(g, phi, rho_v, eps)
            if not np.all(np.isfinite(grad)):
                raise NonFiniteEncountered(f"Gradient became non-finite at iteration {iterations}")
            history.append(history[-1] + change)
            self.logger.debug(
                f"Newton {iterations}: alpha={alpha:.3g}, |g|_inf={np.max(np.abs(grad)):.3e}"
            )
            converged = self._converged(grad, phi, rho_v)

        solution = self._assemble(phi, rho_v, grad, eps, iterations, converged, history)
        if not converged:
            message = (
                f"phi solve stopped after {iterations} iterations with residual "
                f"{solution.residual:.3e} (tol {opts.tol:.1e})"
            )
            if raise_on_failure:
                raise MaxIterExceeded(message, solution=solution)
            self.logger.warning(message)
        return solution

    def _assemble(self, phi, rho, grad, eps, iterations, converged, history) -> PhiSolution:
        g = self.grid
        phi_field = Field(g, phi)
        d = radial_derivative(g, phi_field)
        dirichlet2 = float(np.dot(g.half_weights, d * d))
        dirichlet4 = float(np.dot(g.half_weights, d**4))
        return PhiSolution(
            phi=phi_field,
            iterations=iterations,
            residual=float(np.max(np.abs(grad))),
            dirichlet2=dirichlet2,
            dirichlet4=dirichlet4,
            x_norm=seminorm_grad_lp(g, phi_field, 2) + seminorm_grad_lp(g, phi_field, 4),
            coupling=float(np.dot(g.vol_weights, rho * phi)),
            min_value=float(np.min(phi)),
            eps=float(eps),
            converged=converged,
            energy_history=history,
        )


def solve_phi(
    g: RadialGrid,
    rho: FieldLike,
    eps: float,
    opts: Optional[PhiSolverOptions] = None,
    phi0: Optional[FieldLike] = None,
    raise_on_failure: bool = False,
) -> PhiSolution:
    """Unique minimiser of phi_energy with phi(R) = 0

    Non-convergence returns the best iterate flagged ``converged=False``
    unless ``raise_on_failure`` is set, in which case MaxIterExceeded
    carries it.
    """
    return PhiSolver(g, opts).solve(rho, eps, phi0=phi0, raise_on_failure=raise_on_failure)


def green_potential(g: RadialGrid, rho: FieldLike) -> Field:
    """eps = 0 potential from the radial Green formula, shifted so that phi(R) = 0

    phi(r) = (1/r) int_0^r s^2 rho ds + int_r^R s rho ds, minus its value at R.
    """
    r = g.nodes
    values = _values(g, rho)
    inner = cumulative_trapezoid(r * r * values, r, initial=0.0)
    outer = cumulative_trapezoid(r * values, r, initial=0.0)
    phi = np.zeros(g.N + 1)
    phi[1:] = inner[1:] / r[1:]
    phi += outer[-1] - outer
    phi -= inner[-1] / g.R
    phi[-1] = 0.0
    return Field(g, phi)


def check_identity(sol: PhiSolution, eps: Optional[float] = None) -> float:
    """Relative defect of int |grad phi|^2 + eps^4 int |grad phi|^4 = int phi rho"""
    eps = sol.eps if eps is None else eps
    defect = abs(sol.dirichlet2 + eps**4 * sol.dirichlet4 - sol.coupling)
    residual = defect / max(1.0, abs(sol.coupling))
    if not sol.converged:
        logger.warning(f"Identity residual {residual:.3e} reported for a non-converged solve")
    return residual
