"""
Command-line interface for qsp-lab
"""
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.logging import RichHandler

from .config import RunConfig, load_config
from .energy import thresholds as compute_thresholds
from .errors import ConfigError, QSPError
from .experiments import (
    LEVEL_COLUMNS,
    LIMIT_COLUMNS,
    SUPERCRITICAL_COLUMNS,
    run_supercritical,
    solve_phi_experiment,
    solve_single,
    sweep_epsilon,
    sweep_lambda,
)
from .invariants import corrupt_quadrature, invariant_suite
from .model import validate as validate_model
from .output import (
    display_dict_table,
    display_key_values,
    display_records_table,
    emit_table_csv,
    load_field,
)
from .phi_solver import check_identity

app = typer.Typer(
    name="qsp-lab",
    help="Numerical laboratory for the quasilinear Schrödinger-Poisson system",
    add_completion=False,
)
console = Console()

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format="%(message)s",
    datefmt="[%X]",
    handlers=[RichHandler(console=console, rich_tracebacks=True)],
)
logger = logging.getLogger("qsp_lab")

EXIT_FAILURE = 1
EXIT_CONFIG = 2
CHECK_COLUMNS = ("module", "prop", "observed", "required", "passed")

ConfigOption = typer.Option(None, "--config", "-c", help="TOML run configuration")
OutOption = typer.Option(None, "--out", "-o", help="Output directory (overrides the config)")
PlotOption = typer.Option(False, "--plot", help="Also write SVG charts")
VerboseOption = typer.Option(False, "--verbose", "-v", help="Enable verbose logging")


def _prepare(config: Optional[Path], out: Optional[Path], plot: bool, verbose: bool,
             validate: bool = True) -> RunConfig:
    if verbose:
        logging.getLogger("qsp_lab").setLevel(logging.DEBUG)
    try:
        cfg = load_config(config, validate=validate)
    except ConfigError as e:
        console.print(f"[red]Error: {e}[/red]")
        raise typer.Exit(EXIT_CONFIG)
    return cfg.with_output(str(out) if out is not None else None, True if plot else None)


def _fail(what: str, e: Exception):
    if isinstance(e, ConfigError):
        console.print(f"[red]Error: {e}[/red]")
        raise typer.Exit(EXIT_CONFIG)
    if isinstance(e, QSPError):
        console.print(f"[red]Error during {what}: {e}[/red]")
        raise typer.Exit(EXIT_FAILURE)
    logger.exception(f"{what} failed")
    console.print(f"[red]Error during {what}: {e}[/red]")
    raise typer.Exit(EXIT_FAILURE)


@app.command("solve-phi")
def solve_phi_command(
    config: Optional[Path] = ConfigOption,
    rho: Optional[Path] = typer.Option(None, "--rho", help="Field dump with the source density"),
    out: Optional[Path] = OutOption,
    plot: bool = PlotOption,
    verbose: bool = VerboseOption,
):
    """Solve -Lap phi - eps^4 Lap_4 phi = rho for one source"""
    cfg = _prepare(config, out, plot, verbose)
    try:
        source = load_field(rho) if rho is not None else None
        if source is not None:
            logger.info(f"Loaded source from {rho} (R={source.grid.R}, N={source.grid.N})")
        source, sol = solve_phi_experiment(cfg, source)
    except Exception as e:
        _fail("phi solve", e)

    display_key_values(
        {
            "eps": cfg.model.eps,
            "iterations": sol.iterations,
            "residual": sol.residual,
            "dirichlet2": sol.dirichlet2,
            "dirichlet4": sol.dirichlet4,
            "x_norm": sol.x_norm,
            "coupling": sol.coupling,
            "min_value": sol.min_value,
            "identity residual": check_identity(sol),
            "converged": sol.converged,
        },
        "Potential solve",
    )
    if not sol.converged:
        console.print("[red]Error: phi solve did not converge[/red]")
        raise typer.Exit(EXIT_FAILURE)
    console.print(f"[green]SUCCESS: potential written to {Path(cfg.output.out_dir) / 'phi.txt'}[/green]")


@app.command()
def solve(
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    plot: bool = PlotOption,
    verbose: bool = VerboseOption,
):
    """Compute the mountain-pass critical point for the configured parameters"""
    cfg = _prepare(config, out, plot, verbose)
    logger.info(f"Mountain pass at lambda={cfg.model.lam}, eps={cfg.model.eps}, T={cfg.model.T}")
    try:
        outcome = solve_single(cfg)
    except Exception as e:
        _fail("mountain pass", e)

    cp = outcome.critical_point
    if cp is None:
        console.print(f"[red]Error: mountain pass failed: {outcome.error}[/red]")
        raise typer.Exit(EXIT_FAILURE)
    display_key_values(
        {
            "level": cp.level,
            "h1_norm": cp.h1_norm,
            "grad_norm": cp.grad_norm,
            "u_inf": cp.u_inf,
            "min_u": cp.min_u,
            "x_norm": cp.phi.x_norm,
            "phi_inf": cp.phi.sup,
            "T": cp.T,
            "restarts": cp.restarts,
            "|u| <= T": cp.promoted,
            "below thresholds": cp.below_thresholds,
            "iterations": cp.iterations,
            "converged": cp.converged,
        },
        "Critical point",
    )
    if not cp.converged:
        console.print("[red]Error: mountain pass did not converge[/red]")
        raise typer.Exit(EXIT_FAILURE)
    console.print(f"[green]SUCCESS: results written to {cfg.output.out_dir}[/green]")


@app.command("sweep-lambda")
def sweep_lambda_command(
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    plot: bool = PlotOption,
    verbose: bool = VerboseOption,
):
    """Sweep lambda at fixed eps and record the vanishing of the solutions"""
    cfg = _prepare(config, out, plot, verbose)
    try:
        result = sweep_lambda(cfg)
    except Exception as e:
        _fail("lambda sweep", e)

    display_records_table(result.records, f"Lambda sweep (eps={cfg.model.eps:g})", "lambda")
    if result.level_rows:
        display_dict_table(result.level_rows, "Sup of the level over eps",
                           LEVEL_COLUMNS)
    if not all(r.converged for r in result.records):
        console.print("[red]Error: some sweep rows did not converge[/red]")
        raise typer.Exit(EXIT_FAILURE)
    console.print(f"[green]SUCCESS: sweep written to {cfg.output.out_dir}[/green]")


@app.command("sweep-epsilon")
def sweep_epsilon_command(
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    plot: bool = PlotOption,
    verbose: bool = VerboseOption,
):
    """Sweep eps toward 0 at fixed lambda and compare with the eps = 0 solution"""
    cfg = _prepare(config, out, plot, verbose)
    try:
        result = sweep_epsilon(cfg)
    except Exception as e:
        _fail("eps sweep", e)

    display_records_table([result.baseline] + result.records,
                          f"Epsilon sweep (lambda={cfg.experiment.lambda_bar:g})", "eps")
    if result.limit_rows:
        display_dict_table(result.limit_rows, "Limits as eps -> 0",
                           LIMIT_COLUMNS)
    if not (result.baseline.converged and all(r.converged for r in result.records)):
        console.print("[red]Error: some sweep rows did not converge[/red]")
        raise typer.Exit(EXIT_FAILURE)
    console.print(f"[green]SUCCESS: sweep written to {cfg.output.out_dir}[/green]")


@app.command()
def supercritical(
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    plot: bool = PlotOption,
    verbose: bool = VerboseOption,
):
    """Solve the capped supercritical problems and certify the first lambda with |u|_inf <= K"""
    cfg = _prepare(config, out, plot, verbose)
    try:
        report = run_supercritical(cfg)
    except Exception as e:
        _fail("supercritical run", e)

    if report.rows:
        display_dict_table(report.rows, f"Supercritical p={cfg.model.p:g}, K={cfg.model.K:g}",
                           SUPERCRITICAL_COLUMNS)
    if not report.certified:
        console.print("[red]Error: no lambda in the grid was certified[/red]")
        raise typer.Exit(EXIT_FAILURE)
    console.print(f"[green]SUCCESS: certified at lambda={report.certified_lambda:g}[/green]")


@app.command()
def check(
    quick: bool = typer.Option(False, "--quick", help="Skip the mountain-pass run"),
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    verbose: bool = VerboseOption,
    corrupt_weights: bool = typer.Option(False, "--corrupt-weights", hidden=True),
):
    """Run the invariant suite (R = 15, N = 800); exits nonzero on any failure"""
    cfg = _prepare(config, out, False, verbose)
    hook = corrupt_quadrature if corrupt_weights else None
    try:
        results = invariant_suite(cfg.model, quick=quick, grid_hook=hook)
    except Exception as e:
        _fail("invariant suite", e)

    rows = [asdict(r) for r in results]
    display_dict_table(rows, "Invariant suite", CHECK_COLUMNS)
    if out is not None:
        emit_table_csv(rows, Path(cfg.output.out_dir) / "checks.csv",
                       CHECK_COLUMNS)
    failed = [r for r in results if not r.passed]
    if failed:
        console.print(f"[red]Error: {len(failed)} of {len(results)} checks failed[/red]")
        raise typer.Exit(EXIT_FAILURE)
    console.print(f"[green]SUCCESS: all {len(results)} checks passed[/green]")


@app.command()
def thresholds(
    config: Optional[Path] = ConfigOption,
    verbose: bool = VerboseOption,
):
    """Show the best Sobolev constant and the two admissible level bounds"""
    cfg = _prepare(config, None, False, verbose)
    report = compute_thresholds(cfg.model)
    display_key_values(report.as_dict(), f"Thresholds (theta={cfg.model.theta:g}, T={cfg.model.T:g})")


@app.command()
def validate(
    config: Optional[Path] = ConfigOption,
    verbose: bool = VerboseOption,
):
    """Check the model parameters and the structural conditions on f"""
    cfg = _prepare(config, None, False, verbose, validate=False)
    report = validate_model(cfg.model)
    display_dict_table([asdict(c) for c in report.checks], "Hypotheses", ("name", "passed", "detail"))
    if not report.passed:
        console.print("[red]Error: model parameters are invalid[/red]")
        raise typer.Exit(EXIT_CONFIG)
    console.print("[green]SUCCESS: all hypotheses hold[/green]")


if __name__ == "__main__":
    app()
