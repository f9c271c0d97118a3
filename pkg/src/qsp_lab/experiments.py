"""
Experiment drivers: lambda sweep, epsilon sweep and supercritical certification
"""
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .config import RunConfig
from .energy import ReducedEnergy
from .errors import ConfigError, QSPError
from .model import ModelParams, f_eval
from .mountain_pass import CriticalPoint, MountainPassSolver
from .output import (
    SweepRecord,
    dump_field,
    emit_csv,
    emit_svg,
    emit_table_csv,
    format_value,
    load_field,
    read_csv,
)
from .phi_solver import solve_phi
from .radial_grid import (
    Field,
    RadialGrid,
    norm_h1,
    seminorm_grad_lp,
    solve_helmholtz,
)

logger = logging.getLogger("qsp_lab.experiments")

REVERIFY_RTOL = 1e-8
LEVEL_COLUMNS = ("param", "sup_level", "argmax_eps", "all_converged")
LIMIT_COLUMNS = ("param", "du_h1", "dphi_grad", "eps_grad4", "level", "level_gap")
SUPERCRITICAL_COLUMNS = (
    "param",
    "u_inf",
    "h1_norm",
    "moser_ratio",
    "residual",
    "converged",
    "certified",
)


@dataclass
class SweepOutcome:
    """Result of one sweep point: the CSV row plus the critical point behind it"""

    record: SweepRecord
    critical_point: Optional[CriticalPoint]
    params: ModelParams
    error: Optional[str] = None


@dataclass
class LambdaSweepResult:
    records: List[SweepRecord]
    outcomes: List[SweepOutcome]
    level_rows: List[Dict[str, Any]] = field(default_factory=list)


@dataclass
class EpsilonSweepResult:
    records: List[SweepRecord]
    baseline: SweepRecord
    outcomes: List[SweepOutcome]
    limit_rows: List[Dict[str, Any]] = field(default_factory=list)


@dataclass
class SupercriticalReport:
    records: List[SweepRecord]
    rows: List[Dict[str, Any]]
    certified_lambda: Optional[float]
    moser_spread: float
    outcomes: List[SweepOutcome] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.certified_lambda is not None


def record_from(param: float, cp: CriticalPoint) -> SweepRecord:
    return SweepRecord(
        param=float(param),
        level=cp.level,
        h1_norm=cp.h1_norm,
        x_norm=cp.phi.x_norm,
        phi_inf=cp.phi.sup,
        u_inf=cp.u_inf,
        grad_norm=cp.grad_norm,
        converged=cp.converged,
        seconds=cp.seconds,
    )


def failed_record(param: float, seconds: float) -> SweepRecord:
    nan = math.nan
    return SweepRecord(float(param), nan, nan, nan, nan, nan, nan, False, seconds)


def solve_point(
    cfg: RunConfig,
    params: ModelParams,
    param: float,
    initial_guess: Optional[Field] = None,
    grid: Optional[RadialGrid] = None,
) -> SweepOutcome:
    """One mountain-pass run; numerical failures become a flagged row"""
    grid = grid or cfg.build_grid()
    start = time.perf_counter()
    solver = MountainPassSolver(grid, params, cfg.mp_options(), cfg.phi_options())
    try:
        cp = solver.run(initial_guess=initial_guess)
    except QSPError as e:
        logger.warning(f"Run at param={param:g} failed: {e}")
        return SweepOutcome(failed_record(param, time.perf_counter() - start), None, params, str(e))
    return SweepOutcome(record_from(param, cp), cp, params)


def _solve_task(args: Tuple[RunConfig, ModelParams, float]) -> SweepOutcome:
    cfg, params, param = args
    return solve_point(cfg, params, param)


def _run_points(
    cfg: RunConfig,
    points: Sequence[Tuple[float, ModelParams]],
    desc: str,
    initial_guess: Optional[Field] = None,
    on_row=None,
) -> List[SweepOutcome]:
    """Run the points in order with warm starts, or in a process pool without them"""
    workers = cfg.experiment.workers
    if workers > 1 and len(points) > 1:
        tasks = [(cfg, params, param) for param, params in points]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(tqdm(pool.map(_solve_task, tasks), total=len(tasks), desc=desc))
        outcomes.sort(key=lambda o: o.record.param)
        return outcomes

    grid = cfg.build_grid()
    outcomes = []
    guess = initial_guess
    for param, params in tqdm(points, desc=desc):
        outcome = solve_point(cfg, params, param, initial_guess=guess, grid=grid)
        outcomes.append(outcome)
        if outcome.critical_point is not None and outcome.critical_point.converged:
            guess = outcome.critical_point.u
        if on_row is not None:
            on_row(outcomes)
    return outcomes


def _field_tag(prefix: str, value: float) -> str:
    return f"{prefix}_{format_value(float(value)).replace('-', 'm')}"


def dump_outcomes(outcomes: Sequence[SweepOutcome], directory: Path, prefix: str) -> Path:
    """Write u and phi of every solved row plus a manifest used by reverify_record"""
    directory = Path(directory) / "fields"
    manifest = []
    for o in outcomes:
        cp = o.critical_point
        if cp is None:
            continue
        tag = _field_tag(prefix, o.record.param)
        dump_field(cp.u, directory / f"{tag}_u.txt")
        dump_field(cp.phi.phi, directory / f"{tag}_phi.txt")
        manifest.append(
            {
                "param": o.record.param,
                "u": f"{tag}_u.txt",
                "phi": f"{tag}_phi.txt",
                "lam": o.params.lam,
                "eps": o.params.eps,
                "T": cp.T,
                "supercritical": o.params.supercritical,
            }
        )
    path = directory / f"{prefix}_manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def reverify_record(
    record: SweepRecord,
    u: Field,
    params: ModelParams,
    cfg: RunConfig,
    rtol: float = REVERIFY_RTOL,
) -> Dict[str, bool]:
    """Recompute a row's diagnostics from its stored u; returns pass/fail per column"""
    grid = u.grid
    energy = ReducedEnergy(grid, params, cfg.phi_options())
    sol = energy.phi(u)
    recomputed = {
        "level": energy.value(u),
        "h1_norm": norm_h1(grid, u),
        "x_norm": sol.x_norm,
        "phi_inf": sol.sup,
        "u_inf": u.sup(),
    }
    checks = {}
    for name, value in recomputed.items():
        stored = getattr(record, name)
        checks[name] = bool(abs(value - stored) <= rtol * max(abs(stored), 1e-300))
    return checks


def reverify_directory(directory: Path, prefix: str, cfg: RunConfig) -> Dict[float, Dict[str, bool]]:
    """Re-check every row of ``<prefix>.csv`` against the dumped fields next to it"""
    directory = Path(directory)
    records = {r.param: r for r in read_csv(directory / f"{prefix}.csv")}
    manifest = json.loads((directory / "fields" / f"{prefix}_manifest.json").read_text())
    grid = cfg.build_grid()
    results = {}
    for entry in manifest:
        u = load_field(directory / "fields" / entry["u"], grid)
        params = cfg.model.with_(
            lam=entry["lam"], eps=entry["eps"], T=entry["T"], supercritical=entry["supercritical"]
        )
        results[entry["param"]] = reverify_record(records[entry["param"]], u, params, cfg)
    return results


def _finish(
    cfg: RunConfig,
    records: Sequence[SweepRecord],
    outcomes: Sequence[SweepOutcome],
    prefix: str,
    plot_cols: Sequence[str],
    title: str,
) -> Path:
    out = Path(cfg.output.out_dir)
    cfg.write_resolved(out)
    csv_path = emit_csv(records, out / f"{prefix}.csv")
    dump_outcomes(outcomes, out, prefix)
    if cfg.output.plot:
        emit_svg(records, out / f"{prefix}.svg", "param", plot_cols, title=title)
    return csv_path


def sweep_lambda(cfg: RunConfig) -> LambdaSweepResult:
    """Mountain-pass solutions along the lambda grid at fixed eps, plus the sup over level_epsilons"""
    base = cfg.model
    out = Path(cfg.output.out_dir)
    lambdas = cfg.experiment.lambdas
    logger.info(f"Lambda sweep over {list(lambdas)} at eps={base.eps}")

    def persist(partial):
        emit_csv([o.record for o in partial], out / "sweep_lambda.csv")

    points = [(lam, base.with_(lam=lam)) for lam in lambdas]
    outcomes = _run_points(cfg, points, "lambda sweep", on_row=persist)
    records = [o.record for o in outcomes]

    per_eps: Dict[float, List[SweepOutcome]] = {}
    for eps in cfg.experiment.level_epsilons:
        if eps == base.eps:
            per_eps[eps] = outcomes
            continue
        eps_points = [(lam, base.with_(lam=lam, eps=eps)) for lam in lambdas]
        per_eps[eps] = _run_points(cfg, eps_points, f"levels eps={eps:g}")

    level_rows = []
    for i, lam in enumerate(lambdas):
        levels = {eps: runs[i].record.level for eps, runs in per_eps.items()}
        finite = {e: v for e, v in levels.items() if math.isfinite(v)}
        arg = max(finite, key=finite.get) if finite else math.nan
        level_rows.append(
            {
                "param": float(lam),
                "sup_level": finite[arg] if finite else math.nan,
                "argmax_eps": float(arg),
                "all_converged": all(runs[i].record.converged for runs in per_eps.values()),
            }
        )

    _finish(cfg, records, outcomes, "sweep_lambda", ("h1_norm", "x_norm", "phi_inf", "level"),
            f"lambda sweep, eps={base.eps:g}")
    if level_rows:
        emit_table_csv(level_rows, out / "sweep_lambda_levels.csv", LEVEL_COLUMNS)
    _log_trend(records, ("h1_norm", "x_norm", "phi_inf", "level"), "lambda")
    return LambdaSweepResult(records, outcomes, level_rows)


def sweep_epsilon(cfg: RunConfig) -> EpsilonSweepResult:
    """Solutions at lambda_bar for the eps grid, compared with the eps = 0 baseline"""
    base = cfg.model.with_(lam=cfg.experiment.lambda_bar)
    out = Path(cfg.output.out_dir)
    grid = cfg.build_grid()
    logger.info(f"Epsilon sweep over {list(cfg.experiment.epsilons)} at lambda={base.lam}")

    baseline = solve_point(cfg, base.with_(eps=0.0), 0.0, grid=grid)
    if baseline.critical_point is None:
        raise QSPError(f"eps = 0 baseline failed: {baseline.error}")
    u0 = baseline.critical_point
    guess = u0.u if u0.converged else None

    def persist(partial):
        emit_csv([baseline.record] + [o.record for o in partial], out / "sweep_epsilon.csv")

    points = [(eps, base.with_(eps=eps)) for eps in cfg.experiment.epsilons]
    outcomes = _run_points(cfg, points, "eps sweep", initial_guess=guess, on_row=persist)
    outcomes.sort(key=lambda o: -o.record.param)

    limit_rows = []
    for o in outcomes:
        cp = o.critical_point
        if cp is None:
            continue
        limit_rows.append(
            {
                "param": o.record.param,
                "du_h1": norm_h1(grid, cp.u - u0.u),
                "dphi_grad": seminorm_grad_lp(grid, cp.phi.phi - u0.phi.phi, 2),
                "eps_grad4": o.record.param * cp.phi.dirichlet4**0.25,
                "level": cp.level,
                "level_gap": abs(cp.level - u0.level),
            }
        )

    records = [o.record for o in outcomes]
    all_outcomes = [baseline] + list(outcomes)
    _finish(cfg, [baseline.record] + records, all_outcomes, "sweep_epsilon",
            ("h1_norm", "x_norm", "level"), f"eps sweep, lambda={base.lam:g}")
    if limit_rows:
        emit_table_csv(limit_rows, out / "sweep_epsilon_limits.csv", LIMIT_COLUMNS)
        if cfg.output.plot:
            emit_svg(limit_rows, out / "sweep_epsilon_limits.svg", "param",
                     ("du_h1", "dphi_grad", "eps_grad4", "level_gap"), title="eps -> 0 limits")
    return EpsilonSweepResult(records, baseline.record, outcomes, limit_rows)


def supercritical_residual(grid: RadialGrid, cp: CriticalPoint, params: ModelParams) -> float:
    """H^1-dual norm of -Lap u + u + phi u - lam f(u) - |u|^(p-2) u, evaluated without the cap"""
    u = cp.u.values
    density = (
        cp.phi.phi.values * u
        - params.lam * f_eval(params, grid.nodes, u)
        - np.abs(u) ** (params.p - 2.0) * u
    )
    return norm_h1(grid, cp.u + solve_helmholtz(grid, density))


def run_supercritical(cfg: RunConfig) -> SupercriticalReport:
    """Capped problems along the lambda grid; a row is certified once |u|_inf <= K"""
    base = cfg.model
    if base.p is None or base.K is None:
        raise ConfigError("Supercritical runs need model.p and model.K")
    base = base.with_(supercritical=True)
    out = Path(cfg.output.out_dir)
    grid = cfg.build_grid()
    tol = cfg.solver.mp_tol
    logger.info(f"Supercritical run p={base.p}, K={base.K} over lambda={list(cfg.experiment.lambdas)}")

    def persist(partial):
        emit_csv([o.record for o in partial], out / "supercritical.csv")

    points = [(lam, base.with_(lam=lam)) for lam in cfg.experiment.lambdas]
    outcomes = _run_points(cfg, points, "supercritical", on_row=persist)

    rows = []
    certified_lambda = None
    ratios = []
    for o in outcomes:
        cp = o.critical_point
        if cp is None:
            continue
        residual = supercritical_residual(grid, cp, o.params)
        ratio = cp.u_inf / cp.h1_norm if cp.h1_norm > 0 else math.nan
        certified = (
            cp.converged and cp.u_inf <= base.K and residual <= 10.0 * tol * max(1.0, cp.h1_norm)
        )
        if math.isfinite(ratio):
            ratios.append(ratio)
        rows.append(
            {
                "param": o.record.param,
                "u_inf": cp.u_inf,
                "h1_norm": cp.h1_norm,
                "moser_ratio": ratio,
                "residual": residual,
                "converged": cp.converged,
                "certified": certified,
            }
        )
        if certified and certified_lambda is None:
            certified_lambda = o.record.param

    records = [o.record for o in outcomes]
    _finish(cfg, records, outcomes, "supercritical", ("h1_norm", "u_inf", "level"),
            f"supercritical p={base.p:g}, K={base.K:g}")
    if rows:
        emit_table_csv(rows, out / "supercritical_certificate.csv", SUPERCRITICAL_COLUMNS)
    spread = max(ratios) / min(ratios) if ratios else math.nan
    if certified_lambda is None:
        logger.warning("No lambda in the grid produced a certified supercritical solution")
    else:
        logger.info(f"First certified lambda: {certified_lambda:g} (Moser ratio spread {spread:.3g})")
    return SupercriticalReport(records, rows, certified_lambda, spread, list(outcomes))


def solve_single(cfg: RunConfig) -> SweepOutcome:
    """One mountain-pass run at the configured parameters, with its files written"""
    outcome = solve_point(cfg, cfg.model, cfg.model.lam)
    _finish(cfg, [outcome.record], [outcome], "solve", ("h1_norm", "level"), "single run")
    return outcome


def phi_source(cfg: RunConfig, grid: RadialGrid) -> Field:
    """Density for solve-phi from the [phi_source] section"""
    source = cfg.phi_source
    r = grid.nodes
    if source.kind == "ball":
        rho = np.where(r < source.width, source.amplitude, 0.0)
    else:
        rho = (source.amplitude * np.exp(-0.5 * (r / source.width) ** 2)) ** 2
    if source.background:
        rho = rho - np.where(r < source.background_radius, source.background, 0.0)
    rho = np.array(rho, dtype=float)
    rho[-1] = 0.0
    return Field(grid, rho)


def solve_phi_experiment(cfg: RunConfig, rho: Optional[Field] = None):
    grid = rho.grid if rho is not None else cfg.build_grid()
    rho = rho if rho is not None else phi_source(cfg, grid)
    sol = solve_phi(grid, rho, cfg.model.eps, cfg.phi_options())
    out = Path(cfg.output.out_dir)
    cfg.write_resolved(out)
    dump_field(sol.phi, out / "phi.txt")
    dump_field(rho, out / "rho.txt")
    return rho, sol


def _log_trend(records: Sequence[SweepRecord], columns: Sequence[str], name: str):
    rows = [r for r in records if r.converged]
    for c in columns:
        values = [getattr(r, c) for r in rows]
        decreasing = all(b < a for a, b in zip(values, values[1:]))
        logger.info(f"{c} along {name}: {'decreasing' if decreasing else 'NOT decreasing'}")
