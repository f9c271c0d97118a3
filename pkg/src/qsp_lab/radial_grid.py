"""
Radial finite-volume grid for radially symmetric functions on R^3

Nodes sit at r_i = i*dr. Node i owns the spherical shell between the half
nodes r_{i-1/2} and r_{i+1/2} (node 0 owns the ball of radius dr/2, node N the
outer half shell), so the volume weights sum to the ball volume exactly.
Gradients live on half nodes and are integrated with the exact sphere area
4*pi*r_{i+1/2}^2 times dr.
"""
import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Tuple, Union

import numpy as np
from scipy.linalg import solve_banded

from .errors import GridError

logger = logging.getLogger("qsp_lab.radial_grid")

MIN_NODES = 16
FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform mesh on [0, R] with N cells; immutable once built"""

    R: float
    N: int
    dr: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False)
    half_nodes: np.ndarray = field(init=False, repr=False)
    vol_weights: np.ndarray = field(init=False, repr=False)
    half_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        R = float(self.R)
        N = int(self.N)
        dr = R / N
        nodes = dr * np.arange(N + 1, dtype=float)
        nodes[-1] = R
        half_nodes = dr * (np.arange(N, dtype=float) + 0.5)
        edges = np.concatenate(([0.0], half_nodes, [R]))
        vol_weights = (FOUR_PI / 3.0) * (edges[1:] ** 3 - edges[:-1] ** 3)
        half_weights = FOUR_PI * half_nodes**2 * dr

        for arr in (nodes, half_nodes, vol_weights, half_weights):
            arr.flags.writeable = False

        object.__setattr__(self, "R", R)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "dr", dr)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "half_nodes", half_nodes)
        object.__setattr__(self, "vol_weights", vol_weights)
        object.__setattr__(self, "half_weights", half_weights)

    @property
    def ball_volume(self) -> float:
        return FOUR_PI / 3.0 * self.R**3

    def same_as(self, other: "RadialGrid") -> bool:
        return other is self or (other.R == self.R and other.N == self.N)

    def sample(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Field":
        """Sample ``fn`` at the nodes, truncating the last value to zero"""
        return Field.from_function(self, fn)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.N + 1))


@dataclass(frozen=True, eq=False)
class Field:
    """Radial function sampled at the nodes of ``grid`` with a zero Dirichlet value at R"""

    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.N + 1,):
            raise GridError(
                f"Field needs {self.grid.N + 1} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise GridError("Field values must be finite")
        if values[-1] != 0.0:
            raise GridError(f"Field value at r=R must be 0, got {values[-1]!r}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: RadialGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "Field":
        values = np.array(np.broadcast_to(fn(grid.nodes), grid.nodes.shape), dtype=float)
        values[-1] = 0.0
        return cls(grid, values)

    def content_hash(self) -> str:
        return hashlib.sha1(self.values.tobytes()).hexdigest()

    def max(self) -> float:
        return float(np.max(self.values))

    def min(self) -> float:
        return float(np.min(self.values))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def positive_part(self) -> "Field":
        return Field(self.grid, np.maximum(self.values, 0.0))

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Field":
        """Pointwise map; ``fn`` must send 0 to 0"""
        return Field(self.grid, fn(self.values))

    def _other(self, other):
        if isinstance(other, Field):
            _check_grid(self.grid, other)
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return Field(self.grid, self.values / scalar)

    def __neg__(self):
        return Field(self.grid, -self.values)


FieldLike = Union[Field, np.ndarray]


def _check_grid(g: RadialGrid, h: Field):
    if not g.same_as(h.grid):
        raise GridError(
            f"Field lives on grid (R={h.grid.R}, N={h.grid.N}), "
            f"expected (R={g.R}, N={g.N})"
        )


def _values(g: RadialGrid, h: FieldLike) -> np.ndarray:
    """Node values of ``h``; plain arrays are accepted for analytic profiles"""
    if isinstance(h, Field):
        _check_grid(g, h)
        return h.values
    arr = np.asarray(h, dtype=float)
    if arr.shape != (g.N + 1,):
        raise GridError(f"Expected {g.N + 1} node values, got shape {arr.shape}")
    return arr


def build_uniform(R: float, N: int) -> RadialGrid:
    """Build the uniform radial grid with N cells on [0, R]"""
    try:
        R = float(R)
    except (TypeError, ValueError) as e:
        raise GridError(f"Grid radius must be a number: {e}") from e
    if not math.isfinite(R) or R <= 0.0:
        raise GridError(f"Grid radius must be finite and positive, got {R}")
    if int(N) != N or N < MIN_NODES:
        raise GridError(f"Grid needs an integer N >= {MIN_NODES}, got {N}")
    grid = RadialGrid(R, int(N))
    logger.debug(f"Built radial grid R={grid.R}, N={grid.N}, dr={grid.dr:.3e}")
    return grid


def volume_integral(g: RadialGrid, h: FieldLike) -> float:
    """Quadrature of the radial function h over the ball of radius R"""
    return float(np.dot(g.vol_weights, _values(g, h)))


def radial_derivative(g: RadialGrid, h: FieldLike) -> np.ndarray:
    """Difference quotients (h_{i+1} - h_i)/dr at the N half nodes"""
    return np.diff(_values(g, h)) / g.dr


def norm_lp(g: RadialGrid, h: FieldLike, p: float) -> float:
    if p < 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    values = _values(g, h)
    if math.isinf(p):
        return float(np.max(np.abs(values)))
    return float(np.dot(g.vol_weights, np.abs(values) ** p) ** (1.0 / p))


def seminorm_grad_lp(g: RadialGrid, h: FieldLike, p: float) -> float:
    if p < 1:
        raise ValueError(f"Gradient L^p seminorm needs p >= 1, got {p}")
    d = radial_derivative(g, h)
    if math.isinf(p):
        return float(np.max(np.abs(d)))
    return float(np.dot(g.half_weights, np.abs(d) ** p) ** (1.0 / p))


def inner_h1(g: RadialGrid, h: FieldLike, v: FieldLike) -> float:
    """<h, v>_{H^1} = int grad h . grad v + int h v"""
    dh = radial_derivative(g, h)
    dv = radial_derivative(g, v)
    return float(
        np.dot(g.half_weights, dh * dv) + np.dot(g.vol_weights, _values(g, h) * _values(g, v))
    )


def norm_h1(g: RadialGrid, h: FieldLike) -> float:
    return math.sqrt(max(inner_h1(g, h, h), 0.0))


def x_norm(g: RadialGrid, phi: FieldLike) -> float:
    """|grad phi|_2 + |grad phi|_4"""
    return seminorm_grad_lp(g, phi, 2) + seminorm_grad_lp(g, phi, 4)


def stiffness_form(g: RadialGrid, h: FieldLike, v: FieldLike) -> float:
    """Flux quadrature sum of w_{i+1/2} (Dh)(Dv)"""
    return float(np.dot(g.half_weights, radial_derivative(g, h) * radial_derivative(g, v)))


def stiffness_matvec(g: RadialGrid, h: FieldLike) -> np.ndarray:
    """Weak Laplacian A h at every node, so that v . (A h) == stiffness_form(h, v)"""
    flux = g.half_weights * radial_derivative(g, h) / g.dr
    out = np.zeros(g.N + 1)
    out[:-1] -= flux
    out[1:] += flux
    return out


def tridiagonal_from_fluxes(g: RadialGrid, coeffs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of sum_j c_j (e_{j+1} - e_j)(e_{j+1} - e_j)^T on nodes 0..N-1

    The Dirichlet node N is eliminated.
    """
    N = g.N
    main = np.array(coeffs, dtype=float)
    main[1:] += coeffs[: N - 1]
    off = -np.asarray(coeffs[: N - 1], dtype=float)
    return main, off


def solve_tridiagonal(main: np.ndarray, off: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve the symmetric tridiagonal system with scipy's banded solver"""
    n = main.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1, :] = main
    ab[2, :-1] = off
    try:
        x = solve_banded((1, 1), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise GridError(f"Tridiagonal solve failed: {e}") from e
    if not np.all(np.isfinite(x)):
        raise GridError("Tridiagonal solve produced non-finite values")
    return x


def _helmholtz_system(g: RadialGrid) -> Tuple[np.ndarray, np.ndarray]:
    main, off = tridiagonal_from_fluxes(g, g.half_weights / g.dr**2)
    main = main + g.vol_weights[: g.N]
    if not (np.all(np.isfinite(main)) and np.all(main > 0.0)):
        raise GridError("Helmholtz system is not positive definite; grid is corrupted")
    return main, off


def solve_helmholtz(g: RadialGrid, s: FieldLike) -> Field:
    """Weak solution of -Lap w + w = s with w(R) = 0

    The result satisfies <w, v>_{H^1} = volume_integral(s v) for every
    discrete v vanishing at R, so it is the H^1 Riesz representative of
    the functional v -> int s v.
    """
    source = _values(g, s)
    main, off = _helmholtz_system(g)
    rhs = g.vol_weights[: g.N] * source[: g.N]
    values = np.zeros(g.N + 1)
    if np.any(rhs):
        values[: g.N] = solve_tridiagonal(main, off, rhs)
    return Field(g, values)


def apply_helmholtz(g: RadialGrid, h: FieldLike) -> Field:
    """Discrete (-Lap + 1) h as a nodal density; inverse of solve_helmholtz"""
    values = _values(g, h)
    weak = stiffness_matvec(g, values) + g.vol_weights * values
    density = np.zeros(g.N + 1)
    density[: g.N] = weak[: g.N] / g.vol_weights[: g.N]
    return Field(g, density)
