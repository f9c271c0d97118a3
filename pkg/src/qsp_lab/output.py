"""
Result files and console tables: sweep CSVs, SVG charts, plain-text field dumps
"""
import csv
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from rich.console import Console  # noqa: E402
from rich.table import Table  # noqa: E402

from .errors import GridError  # noqa: E402
from .radial_grid import Field, build_uniform  # noqa: E402

console = Console()
logger = logging.getLogger("qsp_lab.output")

CSV_COLUMNS = (
    "param",
    "level",
    "h1_norm",
    "x_norm",
    "phi_inf",
    "u_inf",
    "grad_norm",
    "converged",
    "seconds",
)


@dataclass
class SweepRecord:
    """One row of a sweep: the swept parameter and the diagnostics of its critical point"""

    param: float
    level: float
    h1_norm: float
    x_norm: float
    phi_inf: float
    u_inf: float
    grad_norm: float
    converged: bool
    seconds: float


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def parse_value(text: str) -> Any:
    if text == "true":
        return True
    if text == "false":
        return False
    return float(text)


def emit_table_csv(rows: Sequence[Dict[str, Any]], path: Path, columns: Sequence[str]) -> Path:
    """Write dict rows with a fixed header, 17 significant digits and LF line endings"""
    if not rows:
        raise ValueError(f"Refusing to write an empty table to {path}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_value(row[c]) for c in columns])
    except OSError as e:
        raise OSError(f"Cannot write CSV {path}: {e}") from e
    logger.debug(f"Wrote {len(rows)} rows to {path}")
    return path


def emit_csv(records: Sequence[SweepRecord], path: Path) -> Path:
    if not records:
        raise ValueError(f"No records to write to {path}")
    rows = [{c: getattr(r, c) for c in CSV_COLUMNS} for r in records]
    return emit_table_csv(rows, path, CSV_COLUMNS)


def read_table_csv(path: Path) -> List[Dict[str, Any]]:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            return [{k: parse_value(v) for k, v in row.items()} for row in reader]
    except OSError as e:
        raise OSError(f"Cannot read CSV {path}: {e}") from e


def read_csv(path: Path) -> List[SweepRecord]:
    rows = read_table_csv(path)
    names = [f.name for f in fields(SweepRecord)]
    return [SweepRecord(**{n: row[n] for n in names}) for row in rows]


def emit_svg(
    records: Sequence[Any],
    path: Path,
    x_col: str,
    y_cols: Sequence[str],
    log_x: bool = True,
    log_y: bool = True,
    title: Optional[str] = None,
) -> Path:
    """Polyline chart of y_cols against x_col, one series per column, as a standalone SVG"""
    if not records:
        raise ValueError(f"No records to plot into {path}")

    def column(name):
        return np.array(
            [float(r[name] if isinstance(r, dict) else getattr(r, name)) for r in records]
        )

    x = column(x_col)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    try:
        for name in y_cols:
            y = column(name)
            mask = np.isfinite(y) & (y > 0 if log_y else True) & (x > 0 if log_x else True)
            ax.plot(x[mask], y[mask], marker="o", label=name)
        ax.set_xscale("log" if log_x else "linear")
        ax.set_yscale("log" if log_y else "linear")
        ax.set_xlabel(x_col)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        if title:
            ax.set_title(title)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fig.savefig(path, format="svg")
        except OSError as e:
            raise OSError(f"Cannot write SVG {path}: {e}") from e
    finally:
        plt.close(fig)
    logger.debug(f"Wrote chart {path}")
    return path


def dump_field(field: Field, path: Path) -> Path:
    """One nodal value per line at 17 significant digits, with R and N in the header"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(
            path,
            field.values,
            fmt="%.17g",
            header=f"R = {format_value(field.grid.R)}\nN = {field.grid.N}",
        )
    except OSError as e:
        raise OSError(f"Cannot write field dump {path}: {e}") from e
    return path


def load_field(path: Path, grid=None) -> Field:
    """Read a dump written by dump_field; ``grid`` must match its header when given"""
    path = Path(path)
    header: Dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].partition("=")
                header[key.strip()] = value.strip()
        values = np.loadtxt(path, comments="#", ndmin=1)
    except OSError as e:
        raise OSError(f"Cannot read field dump {path}: {e}") from e
    except ValueError as e:
        raise GridError(f"Malformed field dump {path}: {e}") from e
    if "R" not in header or "N" not in header:
        raise GridError(f"Field dump {path} lacks the R/N header")
    R, N = float(header["R"]), int(header["N"])
    if grid is None:
        grid = build_uniform(R, N)
    elif grid.R != R or grid.N != N:
        raise GridError(f"Field dump {path} is for R={R}, N={N}, not R={grid.R}, N={grid.N}")
    return Field(grid, values)


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "[green]yes[/green]" if value else "[red]no[/red]"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.6g}"
    return str(value)


COLUMN_STYLES = ("cyan", "green", "yellow", "blue", "magenta")


def _style(i: int) -> str:
    return COLUMN_STYLES[i % len(COLUMN_STYLES)]


def display_records_table(records: Iterable[SweepRecord], title: str, param_name: str = "param"):
    table = Table(title=title, show_header=True)
    columns = (param_name,) + CSV_COLUMNS[1:]
    for i, c in enumerate(columns):
        table.add_column(c, style=_style(i), justify="right" if c != "converged" else "center")
    for r in records:
        table.add_row(*[_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    console.print(table)


def display_dict_table(rows: Sequence[Dict[str, Any]], title: str, columns: Sequence[str]):
    table = Table(title=title, show_header=True)
    for i, c in enumerate(columns):
        table.add_column(c, style=_style(i), justify="right")
    for row in rows:
        table.add_row(*[_fmt(row[c]) for c in columns])
    console.print(table)


def display_key_values(pairs: Dict[str, Any], title: str):
    table = Table(title=title, show_header=True)
    table.add_column("Property", style="cyan")
    table.add_column("Value", style="green")
    for key, value in pairs.items():
        table.add_row(key, _fmt(value))
    console.print(table)
