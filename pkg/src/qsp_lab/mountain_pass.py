"""
Mountain-pass solver: path deformation on the highest node, then a local minimax refinement on rays
"""
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .energy import ReducedEnergy, ThresholdReport, thresholds
from .errors import BracketError, NonConvergence, StepCollapse, ThresholdViolation
from .model import ModelParams
from .phi_solver import PhiSolution, PhiSolverOptions
from .radial_grid import Field, RadialGrid, norm_h1

logger = logging.getLogger("qsp_lab.mountain_pass")

LEVEL_SLACK = 1e-12
LEVEL_FLOOR = 1e-10
CEILING_SLACK = 1e-8
NONNEG_FRACTION = 1e-6


@dataclass(frozen=True)
class MountainPassOptions:
    n_path: int = 31
    tol: float = 1e-6
    max_iter: int = 5000
    armijo: float = 1e-4
    max_halvings: int = 30
    initial_step: float = 1.0
    max_step: float = 4.0
    path_iter: int = 200
    stall_window: int = 25
    max_restarts: int = 3
    refine: bool = True
    clip_fraction: float = 1e-6


@dataclass
class PathState:
    """Discrete path from 0 to e_T with J^T at each node"""

    nodes: List[Field]
    values: np.ndarray
    step: float = 1.0
    iterations: int = 0
    grad_norm: float = math.inf

    @property
    def max_index(self) -> int:
        return int(np.argmax(self.values))

    @property
    def level_estimate(self) -> float:
        return float(self.values[self.max_index])


@dataclass
class CriticalPoint:
    u: Field
    level: float
    grad_norm: float
    h1_norm: float
    min_u: float
    phi: PhiSolution
    converged: bool
    iterations: int
    T: float
    restarts: int = 0
    untruncated_grad_norm: Optional[float] = None
    path_level: float = math.inf
    violations: List[str] = field(default_factory=list)
    history: List[Tuple[float, float]] = field(default_factory=list, repr=False)
    seconds: float = 0.0

    @property
    def promoted(self) -> bool:
        """True when |u| <= T, so u is critical for the untruncated J as well"""
        return self.h1_norm <= self.T

    @property
    def below_thresholds(self) -> bool:
        return not self.violations

    @property
    def u_inf(self) -> float:
        return self.u.sup()


def init_path(energy: ReducedEnergy, n_path: int, direction: Optional[Field] = None) -> PathState:
    """Straight segment t -> t e_T sampled at n_path + 1 equally spaced nodes

    With ``direction`` the endpoint is taken on the ray through it (a warm start
    from an earlier solution) instead of the default profile.
    """
    if n_path < 2:
        raise ValueError(f"Path needs at least 2 segments, got {n_path}")
    e_T = energy.find_e_T() if direction is None else energy.find_endpoint(direction)
    nodes = [(k / n_path) * e_T for k in range(n_path + 1)]
    nodes[0] = energy.grid.zeros()
    nodes[-1] = e_T
    values = np.array([energy.value(u) for u in nodes])
    state = PathState(nodes, values)
    k = state.max_index
    if k == 0 or k == n_path or state.level_estimate <= LEVEL_FLOOR:
        raise BracketError(
            f"Initial path maximum is not interior (node {k}, level {state.level_estimate:.3e})"
        )
    logger.debug(f"Initial path: max node {k}, level {state.level_estimate:.6g}")
    return state


def ray_level(energy: ReducedEnergy, state: PathState) -> float:
    """Maximum of J^T along the straight initial path, refined between the nodes around its top"""
    n = len(state.nodes) - 1
    k = state.max_index
    e_T = state.nodes[-1]
    res = minimize_scalar(
        lambda s: -energy.value(s * e_T),
        bounds=((k - 1) / n, (k + 1) / n),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return max(state.level_estimate, float(-res.fun))


def _arclength_midpoint(a: Field, b: Field, c: Field) -> Field:
    g = a.grid
    la = norm_h1(g, b - a)
    lb = norm_h1(g, c - b)
    total = la + lb
    if total == 0.0:
        return b
    s = 0.5 * total
    if s <= la:
        return a + (s / la) * (b - a)
    return b + ((s - la) / lb) * (c - b)


def _respace(
    energy: ReducedEnergy, nodes: List[Field], values: np.ndarray, k: int, level: float
) -> None:
    n = len(nodes) - 1
    for j in (k - 1, k + 1):
        if j <= 0 or j >= n:
            continue
        moved = _arclength_midpoint(nodes[j - 1], nodes[j], nodes[j + 1])
        moved_value = energy.value(moved)
        if moved_value <= level + LEVEL_SLACK:
            nodes[j] = moved
            values[j] = moved_value


def mpa_step(state: PathState, energy: ReducedEnergy, opts: MountainPassOptions) -> PathState:
    """Move the highest node by Armijo steepest descent and respace its neighbours

    The move is projected onto u >= 0 and never longer than the distance from
    the node to its nearest neighbour, so the node cannot jump across the ridge
    between two samples. A trial that leaves no positive node on the path is
    rejected like an Armijo failure.
    """
    g = energy.grid
    k = state.max_index
    u = state.nodes[k]
    level = state.level_estimate
    w = energy.grad_J_trunc(u)
    gn = norm_h1(g, w)
    if gn == 0.0:
        return PathState(state.nodes, state.values, state.step, state.iterations + 1, 0.0)

    gaps = [norm_h1(g, u - state.nodes[j]) for j in (k - 1, k + 1)]
    reach = min((d for d in gaps if d > 0.0), default=math.inf)
    alpha = min(state.step, reach / gn)

    for halvings in range(opts.max_halvings + 1):
        trial = (u - alpha * w).positive_part()
        moved = norm_h1(g, trial - u)
        if 0.0 < moved <= reach * (1 + LEVEL_SLACK):
            trial_value = energy.value(trial)
            if trial_value <= level - opts.armijo * moved * moved / alpha:
                nodes = list(state.nodes)
                values = state.values.copy()
                nodes[k] = trial
                values[k] = trial_value
                _respace(energy, nodes, values, k, level)
                if np.max(values) > LEVEL_FLOOR:
                    break
        alpha *= 0.5
    else:
        raise StepCollapse(
            f"Armijo backtracking exhausted at node {k} (level {level:.6g}, |grad| {gn:.3e})"
        )

    step = min(2.0 * alpha, opts.max_step) if halvings == 0 else alpha
    return PathState(nodes, values, step, state.iterations + 1, gn)


class MountainPassSolver:
    """Approximates the mountain-pass level of J^T and a critical point at it"""

    def __init__(
        self,
        grid: RadialGrid,
        params: ModelParams,
        options: Optional[MountainPassOptions] = None,
        phi_options: Optional[PhiSolverOptions] = None,
    ):
        self.grid = grid
        self.params = params
        self.options = options or MountainPassOptions()
        self.phi_options = phi_options or PhiSolverOptions()
        self.logger = logging.getLogger("qsp_lab.mountain_pass.MountainPassSolver")

    def _target(self, u: Field) -> float:
        return self.options.tol * max(1.0, norm_h1(self.grid, u))

    def _fiber_max(self, energy: ReducedEnergy, direction: Field, t0: float) -> Field:
        """Local maximiser of t -> J^T(t v) near t0 for the unit direction v"""
        v = direction / norm_h1(self.grid, direction)
        d0 = energy.fiber_derivative(v, t0)
        if d0 == 0.0:
            return t0 * v
        lo = hi = t0
        factor = 1.2
        for _ in range(200):
            if d0 > 0.0:
                lo, hi = hi, hi * factor
                if energy.fiber_derivative(v, hi) < 0.0:
                    break
            else:
                hi, lo = lo, lo / factor
                if energy.fiber_derivative(v, lo) > 0.0:
                    break
        else:
            raise BracketError(f"Fiber derivative keeps its sign around t={t0:.6g}")
        t = brentq(lambda s: energy.fiber_derivative(v, s), lo, hi, xtol=1e-14, rtol=1e-13)
        return t * v

    def _path_stage(
        self, energy: ReducedEnergy, history, direction: Optional[Field] = None
    ) -> Tuple[Field, int, float]:
        """Deform the initial path; returns its top node, the iterations and the initial ray maximum"""
        opts = self.options
        state = init_path(energy, opts.n_path, direction)
        ceiling = ray_level(energy, state)
        state.step = opts.initial_step
        levels = [state.level_estimate]
        while state.iterations < min(opts.path_iter, opts.max_iter):
            try:
                state = mpa_step(state, energy, opts)
            except StepCollapse as e:
                self.logger.debug(f"Path stage stalled: {e}")
                break
            levels.append(state.level_estimate)
            history.append((state.level_estimate, state.grad_norm))
            u = state.nodes[state.max_index]
            if state.grad_norm <= self._target(u):
                break
            w = opts.stall_window
            if len(levels) > w and levels[-w - 1] - levels[-1] <= 1e-10 * abs(levels[-1]):
                self.logger.debug(f"Path stage stalled after {state.iterations} iterations")
                break
        self.logger.debug(
            f"Path stage: {state.iterations} iterations, level {state.level_estimate:.8g} "
            f"(initial ray maximum {ceiling:.8g})"
        )
        return state.nodes[state.max_index], state.iterations, ceiling

    def _refine(
        self, energy: ReducedEnergy, start: Field, iterations: int, history
    ) -> Tuple[Field, float, int, bool]:
        """Steepest descent over nonnegative directions, each iterate moved to its fiber maximum"""
        opts = self.options
        g = self.grid
        u = self._fiber_max(energy, start, norm_h1(g, start))
        level = energy.value(u)
        step = opts.initial_step
        while True:
            w = energy.grad_J_trunc(u)
            gn = norm_h1(g, w)
            history.append((level, gn))
            if gn <= self._target(u):
                return u, gn, iterations, True
            if iterations >= opts.max_iter:
                return u, gn, iterations, False
            iterations += 1
            t = norm_h1(g, u)
            alpha = step
            for halvings in range(opts.max_halvings + 1):
                candidate = (u - alpha * w).positive_part()
                moved = norm_h1(g, candidate - u)
                trial = None
                if moved > 0.0 and np.any(candidate.values):
                    try:
                        trial = self._fiber_max(energy, candidate, t)
                    except BracketError:
                        trial = None
                if trial is not None:
                    trial_level = energy.value(trial)
                    if trial_level <= level - opts.armijo * moved * moved / alpha:
                        break
                alpha *= 0.5
            else:
                self.logger.debug(f"Refinement stalled at |grad| {gn:.3e}")
                return u, gn, iterations, False
            step = min(2.0 * alpha, opts.max_step) if halvings == 0 else alpha
            u, level = trial, trial_level
            self.logger.debug(f"Refine {iterations}: level {level:.12g}, |grad| {gn:.3e}")

    def _clip(self, energy: ReducedEnergy, u: Field, gn: float) -> Tuple[Field, float]:
        top = u.max()
        if top <= 0.0:
            return u, gn
        values = u.values.copy()
        tiny = (values < 0.0) & (values >= -self.options.clip_fraction * top)
        if not np.any(tiny):
            return u, gn
        values[tiny] = 0.0
        clipped = Field(self.grid, values)
        clipped_gn = norm_h1(self.grid, energy.grad_J_trunc(clipped))
        if clipped_gn <= self._target(clipped):
            return clipped, clipped_gn
        return u, gn

    def _certify(self, u: Field, level: float, ceiling: float) -> List[str]:
        """Reasons a small-gradient point is not the mountain-pass solution"""
        problems = []
        top = u.max()
        if level <= 0.0:
            problems.append(f"level {level:.6g} is not positive")
        if top <= 0.0 or u.min() < -NONNEG_FRACTION * top:
            problems.append(f"u is not nonnegative (min {u.min():.3e}, max {top:.3e})")
        if level > ceiling + CEILING_SLACK * max(1.0, abs(ceiling)):
            problems.append(f"level {level:.8g} lies above the initial path maximum {ceiling:.8g}")
        return problems

    def _attempt(
        self, energy: ReducedEnergy, initial_guess: Optional[Field]
    ) -> CriticalPoint:
        history: List[Tuple[float, float]] = []
        direction = None
        if initial_guess is not None and initial_guess.max() > 0.0:
            direction = initial_guess.positive_part()
        start, iterations, ceiling = self._path_stage(energy, history, direction)
        if self.options.refine:
            u, gn, iterations, converged = self._refine(energy, start, iterations, history)
        else:
            u = start
            gn = norm_h1(self.grid, energy.grad_J_trunc(u))
            converged = gn <= self._target(u)
        if converged:
            u, gn = self._clip(energy, u, gn)
        level = energy.value(u)
        if converged:
            for problem in self._certify(u, level, ceiling):
                self.logger.warning(f"Rejecting critical point: {problem}")
                converged = False
        h1 = norm_h1(self.grid, u)
        untruncated = None
        if h1 <= energy.params.T:
            untruncated = norm_h1(self.grid, energy.grad_J(u))
        return CriticalPoint(
            u=u,
            level=level,
            grad_norm=gn,
            h1_norm=h1,
            min_u=u.min(),
            phi=energy.phi(u),
            converged=converged,
            iterations=iterations,
            T=energy.params.T,
            untruncated_grad_norm=untruncated,
            path_level=ceiling,
            history=history,
        )

    def run(
        self, initial_guess: Optional[Field] = None, raise_on_failure: bool = False
    ) -> CriticalPoint:
        start = time.perf_counter()
        params = self.params
        restarts = 0
        while True:
            energy = ReducedEnergy(self.grid, params, self.phi_options)
            cp = self._attempt(energy, initial_guess)
            cp.restarts = restarts
            if cp.h1_norm <= params.T or restarts >= self.options.max_restarts:
                break
            restarts += 1
            self.logger.warning(
                f"Critical point norm {cp.h1_norm:.4g} exceeds T={params.T:.4g}; "
                f"restarting with T={2 * params.T:.4g}"
            )
            params = params.with_(T=2.0 * params.T)
            initial_guess = cp.u if cp.converged else initial_guess

        report = thresholds(params)
        cp.violations = report.violations(cp.level)
        self._warn_thresholds(cp, report)
        cp.seconds = time.perf_counter() - start

        if cp.converged:
            self.logger.info(
                f"Mountain pass converged: level={cp.level:.8g}, |u|={cp.h1_norm:.6g}, "
                f"|grad|={cp.grad_norm:.2e}, iterations={cp.iterations}"
            )
        else:
            message = (
                f"Mountain pass did not converge: |grad|={cp.grad_norm:.3e} after "
                f"{cp.iterations} iterations"
            )
            if raise_on_failure:
                raise NonConvergence(message, critical_point=cp)
            self.logger.warning(message)
        return cp

    def _warn_thresholds(self, cp: CriticalPoint, report: ThresholdReport):
        for violation in cp.violations:
            message = f"Compactness regime not certified: {violation}"
            self.logger.warning(message)
            warnings.warn(message, ThresholdViolation, stacklevel=3)


def run(
    g: RadialGrid,
    m: ModelParams,
    opts: Optional[MountainPassOptions] = None,
    phi_options: Optional[PhiSolverOptions] = None,
    initial_guess: Optional[Field] = None,
    raise_on_failure: bool = False,
) -> CriticalPoint:
    """Mountain-pass critical point of J^T for (g, m)"""
    solver = MountainPassSolver(g, m, opts, phi_options)
    return solver.run(initial_guess=initial_guess, raise_on_failure=raise_on_failure)
