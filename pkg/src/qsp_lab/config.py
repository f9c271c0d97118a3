"""
Run configuration: TOML files parsed into frozen dataclasses
"""
import json
import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .errors import ConfigError, GridError
from .model import ModelParams, PowerTerm, require_valid
from .mountain_pass import MountainPassOptions
from .phi_solver import PhiSolverOptions
from .radial_grid import RadialGrid, build_uniform

logger = logging.getLogger("qsp_lab.config")

EXPERIMENTS = ("solve", "solve-phi", "sweep-lambda", "sweep-epsilon", "supercritical")
PHI_SOURCES = ("gaussian", "ball")


@dataclass(frozen=True)
class GridConfig:
    R: float = 20.0
    N: int = 1200


@dataclass(frozen=True)
class SolverConfig:
    phi_tol: float = 1e-10
    phi_max_iter: int = 100
    mp_tol: float = 1e-6
    mp_max_iter: int = 5000
    n_path: int = 31
    path_iter: int = 200
    max_restarts: int = 3


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "solve"
    lambdas: Tuple[float, ...] = (30.0, 60.0, 120.0, 240.0, 480.0)
    epsilons: Tuple[float, ...] = (1.0, 0.5, 0.25, 0.1)
    level_epsilons: Tuple[float, ...] = (0.0, 0.5, 1.0)
    lambda_bar: float = 30.0
    workers: int = 1


@dataclass(frozen=True)
class PhiSourceConfig:
    """Source for solve-phi: u^2 for a Gaussian u, or a ball indicator, minus an optional background"""

    kind: str = "gaussian"
    amplitude: float = 1.0
    width: float = 1.0
    background: float = 0.0
    background_radius: float = 0.0


@dataclass(frozen=True)
class OutputConfig:
    out_dir: str = "results"
    plot: bool = False


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    model: ModelParams = field(default_factory=ModelParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    phi_source: PhiSourceConfig = field(default_factory=PhiSourceConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def build_grid(self) -> RadialGrid:
        return build_uniform(self.grid.R, self.grid.N)

    def phi_options(self) -> PhiSolverOptions:
        return PhiSolverOptions(tol=self.solver.phi_tol, max_iter=self.solver.phi_max_iter)

    def mp_options(self) -> MountainPassOptions:
        return MountainPassOptions(
            n_path=self.solver.n_path,
            tol=self.solver.mp_tol,
            max_iter=self.solver.mp_max_iter,
            path_iter=self.solver.path_iter,
            max_restarts=self.solver.max_restarts,
        )

    def with_output(self, out_dir: Optional[str] = None, plot: Optional[bool] = None) -> "RunConfig":
        output = self.output
        if out_dir is not None:
            output = replace(output, out_dir=str(out_dir))
        if plot is not None:
            output = replace(output, plot=plot)
        return replace(self, output=output)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        model = data.pop("model")
        model["lambda"] = model.pop("lam")
        data["model"] = model
        return data

    def write_resolved(self, directory: Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "resolved_config.json"
        try:
            path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        except OSError as e:
            raise ConfigError(f"Cannot write {path}: {e}") from e
        return path


def _take(section: Dict[str, Any], name: str, allowed: Dict[str, type]) -> Dict[str, Any]:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"Unknown key(s) in [{name}]: {', '.join(unknown)}")
    out = {}
    for key, value in section.items():
        kind = allowed[key]
        out[key] = _coerce(f"{name}.{key}", value, kind)
    return out


def _coerce(where: str, value: Any, kind: type) -> Any:
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{where} must be finite, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if kind is tuple:
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{where} must be a nonempty list of numbers")
        return tuple(_coerce(where, v, float) for v in value)
    raise ConfigError(f"Unsupported type for {where}")


GRID_KEYS = {"R": float, "N": int}
MODEL_KEYS = {
    "lambda": float,
    "eps": float,
    "T": float,
    "theta": float,
    "crit_coeff": float,
    "p": float,
    "K": float,
}
TERM_KEYS = {"C": float, "q": float, "profile": str, "amplitude": float, "width": float}
SOLVER_KEYS = {f: type(getattr(SolverConfig(), f)) for f in SolverConfig.__dataclass_fields__}
EXPERIMENT_KEYS = {
    "kind": str,
    "lambdas": tuple,
    "epsilons": tuple,
    "level_epsilons": tuple,
    "lambda_bar": float,
    "workers": int,
}
PHI_SOURCE_KEYS = {
    "kind": str,
    "amplitude": float,
    "width": float,
    "background": float,
    "background_radius": float,
}
OUTPUT_KEYS = {"out_dir": str, "plot": bool}
SECTIONS = ("grid", "model", "solver", "experiment", "phi_source", "output")


def _parse_model(section: Dict[str, Any]) -> ModelParams:
    raw_terms = section.get("terms")
    scalars = _take({k: v for k, v in section.items() if k != "terms"}, "model", MODEL_KEYS)
    kwargs = {("lam" if k == "lambda" else k): v for k, v in scalars.items()}
    if raw_terms is not None:
        if not isinstance(raw_terms, list) or not raw_terms:
            raise ConfigError("[[model.terms]] must hold at least one table")
        terms = []
        for i, term in enumerate(raw_terms):
            if not isinstance(term, dict):
                raise ConfigError(f"model.terms[{i}] must be a table")
            terms.append(PowerTerm(**_take(term, f"model.terms[{i}]", TERM_KEYS)))
        kwargs["terms"] = tuple(terms)
    return ModelParams(**kwargs)


def _check_sweeps(exp: ExperimentConfig):
    if exp.kind not in EXPERIMENTS:
        raise ConfigError(f"experiment.kind must be one of {', '.join(EXPERIMENTS)}")
    if any(v <= 0 for v in exp.lambdas) or list(exp.lambdas) != sorted(set(exp.lambdas)):
        raise ConfigError("experiment.lambdas must be positive and strictly ascending")
    if any(v <= 0 for v in exp.epsilons) or list(exp.epsilons) != sorted(
        set(exp.epsilons), reverse=True
    ):
        raise ConfigError("experiment.epsilons must be positive and strictly descending")
    if any(v < 0 for v in exp.level_epsilons) or list(exp.level_epsilons) != sorted(
        set(exp.level_epsilons)
    ):
        raise ConfigError("experiment.level_epsilons must be nonnegative and strictly ascending")
    if exp.lambda_bar <= 0:
        raise ConfigError("experiment.lambda_bar must be positive")
    if exp.workers < 1:
        raise ConfigError("experiment.workers must be at least 1")


def parse_config(data: Dict[str, Any], validate: bool = True) -> RunConfig:
    """Build a RunConfig from parsed TOML; missing sections keep their defaults.

    With ``validate=False`` the model hypotheses are not enforced, so a caller can report them.
    """
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"Unknown section(s): {', '.join(unknown)}")
    for name in SECTIONS:
        if name in data and not isinstance(data[name], dict):
            raise ConfigError(f"[{name}] must be a table")

    grid = GridConfig(**_take(data.get("grid", {}), "grid", GRID_KEYS))
    model = _parse_model(data.get("model", {}))
    solver = SolverConfig(**_take(data.get("solver", {}), "solver", SOLVER_KEYS))
    experiment = ExperimentConfig(**_take(data.get("experiment", {}), "experiment", EXPERIMENT_KEYS))
    phi_source = PhiSourceConfig(**_take(data.get("phi_source", {}), "phi_source", PHI_SOURCE_KEYS))
    output = OutputConfig(**_take(data.get("output", {}), "output", OUTPUT_KEYS))

    try:
        build_uniform(grid.R, grid.N)
    except GridError as e:
        raise ConfigError(f"Invalid grid: {e}") from e
    if validate:
        require_valid(model)
    _check_sweeps(experiment)
    if phi_source.kind not in PHI_SOURCES:
        raise ConfigError(f"phi_source.kind must be one of {', '.join(PHI_SOURCES)}")
    if phi_source.width <= 0 or phi_source.background_radius < 0:
        raise ConfigError("phi_source.width must be > 0 and background_radius >= 0")
    if solver.phi_tol <= 0 or solver.mp_tol <= 0:
        raise ConfigError("Solver tolerances must be positive")
    if min(solver.phi_max_iter, solver.mp_max_iter, solver.path_iter) < 1 or solver.n_path < 2:
        raise ConfigError("Solver iteration budgets must be positive and n_path >= 2")
    if solver.max_restarts < 0:
        raise ConfigError("solver.max_restarts must be >= 0")
    if experiment.kind == "supercritical" and (model.p is None or model.K is None):
        raise ConfigError("Supercritical experiments need model.p and model.K")

    return RunConfig(grid, model, solver, experiment, phi_source, output)


def load_config(path: Optional[Path] = None, validate: bool = True) -> RunConfig:
    """Read a TOML config; ``None`` gives the built-in defaults"""
    if path is None:
        return parse_config({}, validate)
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Cannot parse {path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e}") from e
    try:
        cfg = parse_config(data, validate)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from e
    logger.debug(f"Loaded config from {path}")
    return cfg
