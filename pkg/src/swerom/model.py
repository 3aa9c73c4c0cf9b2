"""Grid, constants, and the semi-discrete 2D shallow water model.

Prognostic fields are the velocities ``u``, ``v`` and the geopotential-like
variable ``phi = 2*sqrt(g*h)`` on a rectangular beta plane. Every field is a
flat length-``n`` vector in x-major order: node ``(i, j)`` maps to index
``i + j*nx`` with the x index varying fastest. Snapshot files and DEIM point
indices depend on this ordering, so it is fixed.

Boundary conditions: periodic in x (the grid carries both x = 0 and x = L,
which are the same physical point), ``v = 0`` on the y = 0 and y = D rows,
and a zero-gradient closure for ``u`` and ``phi`` in y.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

__all__ = [
    "PhysicalConstants",
    "DEFAULT_CONSTANTS",
    "Grid",
    "build_grid",
    "DifferenceOperators",
    "build_operators",
    "FieldState",
    "coriolis_field",
    "grammeltvedt_height",
    "geostrophic_wind",
    "geopotential_from_height",
    "initial_state",
    "eval_nonlinear",
    "all_nonlinear",
    "full_rhs",
    "boundary_row_indices",
    "cfl_indicator",
    "TERMS",
    "TERM_NAMES",
    "TERM_EQUATION",
    "X_TERMS",
    "Y_TERMS",
    "VARIABLES",
]

VARIABLES = ("u", "v", "phi")


@dataclass(frozen=True)
class PhysicalConstants:
    """Domain size and physical parameters (SI units)."""

    L: float = 6.0e6       # zonal extent [m]
    D: float = 4.4e6       # meridional extent [m]
    f_hat: float = 1.0e-4  # Coriolis parameter at mid-channel [1/s]
    beta: float = 1.5e-11  # meridional Coriolis gradient [1/(s m)]
    g: float = 10.0        # gravity [m/s^2]
    H0: float = 2000.0     # mean height [m]
    H1: float = 220.0      # shear amplitude [m]
    H2: float = 133.0      # perturbation amplitude [m]


DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class Grid:
    """Equidistant nx-by-ny mesh covering [0, L] x [0, D]."""

    nx: int
    ny: int
    L: float
    D: float
    dx: float
    dy: float
    n: int

    def node_index(self, i: int, j: int) -> int:
        return i + j * self.nx

    def x_coords(self) -> np.ndarray:
        """Flat x coordinate of every node."""
        x = np.arange(self.nx) * self.dx
        return np.tile(x, self.ny)

    def y_coords(self) -> np.ndarray:
        """Flat y coordinate of every node."""
        y = np.arange(self.ny) * self.dy
        return np.repeat(y, self.nx)


def build_grid(nx: int, ny: int, consts: PhysicalConstants = DEFAULT_CONSTANTS) -> Grid:
    """Build the mesh of n = nx*ny equidistant points.

    Both directions need at least 3 points for the difference stencils.
    """
    if nx < 3 or ny < 3:
        raise ValueError(f"grid needs nx >= 3 and ny >= 3, got {nx}x{ny}")
    dx = consts.L / (nx - 1)
    dy = consts.D / (ny - 1)
    return Grid(nx=nx, ny=ny, L=consts.L, D=consts.D, dx=dx, dy=dy, n=nx * ny)


@dataclass(frozen=True)
class DifferenceOperators:
    """Sparse first-derivative operators with boundary conditions baked in.

    ``Ax``: second-order central differences with periodic wrap in x. The
    wrap identifies columns 0 and nx-1, so their stencils are identical
    (left neighbour nx-2, right neighbour 1).

    ``Ay``: central differences on interior rows, first-order one-sided
    differences on the y = 0 and y = D rows. Every row annihilates
    constants, consistent with the zero-gradient closure for u and phi.
    """

    Ax: sp.csr_matrix
    Ay: sp.csr_matrix


def _stencil_x(nx: int, dx: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    c = 1.0 / (2.0 * dx)
    for i in range(nx):
        # columns 0 and nx-1 are the same physical point: wrap skips the
        # duplicate so both get the (1, nx-2) stencil
        right = i + 1 if i + 1 < nx else 1
        left = i - 1 if i - 1 >= 0 else nx - 2
        rows += [i, i]
        cols += [right, left]
        vals += [c, -c]
    return sp.csr_matrix((vals, (rows, cols)), shape=(nx, nx))


def _stencil_y(ny: int, dy: float) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    c = 1.0 / (2.0 * dy)
    for j in range(1, ny - 1):
        rows += [j, j]
        cols += [j + 1, j - 1]
        vals += [c, -c]
    # one-sided first-order rows at both walls
    rows += [0, 0, ny - 1, ny - 1]
    cols += [1, 0, ny - 1, ny - 2]
    vals += [1.0 / dy, -1.0 / dy, 1.0 / dy, -1.0 / dy]
    return sp.csr_matrix((vals, (rows, cols)), shape=(ny, ny))


def build_operators(grid: Grid) -> DifferenceOperators:
    """Assemble the n-by-n derivative operators for the flat x-major layout."""
    Tx = _stencil_x(grid.nx, grid.dx)
    Ty = _stencil_y(grid.ny, grid.dy)
    Ax = sp.kron(sp.identity(grid.ny, format="csr"), Tx, format="csr")
    Ay = sp.kron(Ty, sp.identity(grid.nx, format="csr"), format="csr")
    return DifferenceOperators(Ax=Ax, Ay=Ay)


def boundary_row_indices(grid: Grid) -> np.ndarray:
    """Flat indices of the y = 0 and y = D rows (where v is pinned to 0)."""
    south = np.arange(grid.nx)
    north = np.arange(grid.n - grid.nx, grid.n)
    return np.concatenate([south, north])


def coriolis_field(grid: Grid, consts: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Beta-plane Coriolis parameter f(y) = f_hat + beta*(y - D/2), flat."""
    return consts.f_hat + consts.beta * (grid.y_coords() - consts.D / 2.0)


def grammeltvedt_height(
    grid: Grid,
    consts: PhysicalConstants = DEFAULT_CONSTANTS,
    literal: bool = False,
) -> np.ndarray:
    """Initial height field (Grammeltvedt No. 1 zonal flow).

    h = H0 + H1*tanh(theta) + H2*sech^2(theta)*sin(2 pi x / L) with
    theta = 9*(D/2 - y)/(2 D). ``literal=True`` reproduces the variant
    H0 + H1 + tanh(theta) + ... for auditability; it is physically
    meaningless (the shear amplitude degenerates to an additive constant)
    and exists only so the two forms can be diffed.
    """
    x = grid.x_coords()
    y = grid.y_coords()
    theta = 9.0 * (consts.D / 2.0 - y) / (2.0 * consts.D)
    sech2 = 1.0 / np.cosh(theta) ** 2
    wave = consts.H2 * sech2 * np.sin(2.0 * np.pi * x / consts.L)
    if literal:
        return consts.H0 + consts.H1 + np.tanh(theta) + wave
    return consts.H0 + consts.H1 * np.tanh(theta) + wave


def geostrophic_wind(
    h: np.ndarray,
    ops: DifferenceOperators,
    f: np.ndarray,
    grid: Grid,
    consts: PhysicalConstants = DEFAULT_CONSTANTS,
) -> tuple[np.ndarray, np.ndarray]:
    """Wind field in geostrophic balance with the height field.

    u = -(g/f) dh/dy, v = (g/f) dh/dx, with the discrete operators; v is
    forced to 0 on the y-boundary rows afterwards.
    """
    if np.any(np.abs(f) < 1e-12):
        raise ValueError("geostrophic wind undefined: |f| < 1e-12 somewhere")
    u = -(consts.g / f) * (ops.Ay @ h)
    v = (consts.g / f) * (ops.Ax @ h)
    v[boundary_row_indices(grid)] = 0.0
    return u, v


def geopotential_from_height(h: np.ndarray, g: float = DEFAULT_CONSTANTS.g) -> np.ndarray:
    """phi = 2*sqrt(g*h), componentwise. Rejects nonpositive depths."""
    if np.any(h <= 0.0):
        raise ValueError("height field must be strictly positive")
    return 2.0 * np.sqrt(g * h)


@dataclass
class FieldState:
    """The three prognostic fields at one time instant, flat x-major."""

    u: np.ndarray
    v: np.ndarray
    phi: np.ndarray
    time: float = 0.0

    def __getitem__(self, var: str) -> np.ndarray:
        return getattr(self, var)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def copy(self) -> "FieldState":
        return replace(self, u=self.u.copy(), v=self.v.copy(), phi=self.phi.copy())


def initial_state(
    grid: Grid,
    ops: DifferenceOperators,
    consts: PhysicalConstants = DEFAULT_CONSTANTS,
    literal: bool = False,
) -> FieldState:
    """Grammeltvedt height with geostrophic winds, as a FieldState."""
    h = grammeltvedt_height(grid, consts, literal=literal)
    f = coriolis_field(grid, consts)
    u, v = geostrophic_wind(h, ops, f, grid, consts)
    phi = geopotential_from_height(h, consts.g)
    return FieldState(u=u, v=v, phi=phi, time=0.0)


# Each nonlinear term is a sum of products coef * a ⊙ (A_axis b). The
# equation a term feeds determines the test basis used when projecting it.
TERMS: dict[str, tuple[tuple[float, str, str, str], ...]] = {
    "F11": ((1.0, "u", "u", "x"), (0.5, "phi", "phi", "x")),
    "F12": ((1.0, "v", "u", "y"),),
    "F21": ((1.0, "u", "v", "x"),),
    "F22": ((1.0, "v", "v", "y"), (0.5, "phi", "phi", "y")),
    "F31": ((0.5, "phi", "u", "x"), (1.0, "u", "phi", "x")),
    "F32": ((0.5, "phi", "v", "y"), (1.0, "v", "phi", "y")),
}

TERM_NAMES = tuple(TERMS)
TERM_EQUATION = {"F11": "u", "F12": "u", "F21": "v", "F22": "v", "F31": "phi", "F32": "phi"}
X_TERMS = ("F11", "F21", "F31")
Y_TERMS = ("F12", "F22", "F32")


def _operator(ops: DifferenceOperators, axis: str) -> sp.csr_matrix:
    return ops.Ax if axis == "x" else ops.Ay


def eval_nonlinear(term: str, state: FieldState, ops: DifferenceOperators) -> np.ndarray:
    """Evaluate one of F11..F32 on the full state."""
    n = state.n
    out = np.zeros(n)
    for coef, avar, bvar, axis in TERMS[term]:
        a = state[avar]
        b = state[bvar]
        if a.shape[0] != n or b.shape[0] != n:
            raise ValueError(f"{term}: field length mismatch")
        out += coef * a * (_operator(ops, axis) @ b)
    return out


def all_nonlinear(state: FieldState, ops: DifferenceOperators) -> dict[str, np.ndarray]:
    return {name: eval_nonlinear(name, state, ops) for name in TERM_NAMES}


def full_rhs(
    state: FieldState,
    ops: DifferenceOperators,
    f: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Semi-discrete time derivatives (u', v', phi')."""
    du = -eval_nonlinear("F11", state, ops) - eval_nonlinear("F12", state, ops) + f * state.v
    dv = -eval_nonlinear("F21", state, ops) - eval_nonlinear("F22", state, ops) - f * state.u
    dphi = -eval_nonlinear("F31", state, ops) - eval_nonlinear("F32", state, ops)
    return du, dv, dphi


def cfl_indicator(state: FieldState, grid: Grid, dt: float, g: float = DEFAULT_CONSTANTS.g) -> float:
    """Wave-speed stability number sqrt(g*h_max)*dt/dx; stable up to 8.9301."""
    h_max = float(np.max(state.phi)) ** 2 / (4.0 * g)
    return np.sqrt(g * h_max) * dt / grid.dx
