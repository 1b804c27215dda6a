"""Spatial discretization: 1-D grids, the interface flux in a shared anchor,
Maxwell-type wall ghosts, per-cell residual assembly and the residual norms.

The steady finite-volume balance on cell i reads

    [F(f_i, f_{i+1}) - F(f_{i-1}, f_i)] / dx_i - G(f_i) - Q(f_i) = 0,

with every term expanded in the anchor of cell i.  Wall cells close the
stencil with ghost states rebuilt from the current boundary cell.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .basis import BasisAnchor, MomentCoeffs, hermite_extreme_root, maxwellian
from .closure import ExternalForce, GasModel
from .indexing import tables

__all__ = [
    "Grid1D", "WallSpec", "Field", "ProblemSpec",
    "uniform_grid", "asinh_grid", "hll_flux", "ghost_distribution",
    "cell_residual", "local_norm", "global_norm", "assemble_residual",
]


@dataclass(frozen=True)
class Grid1D:
    """Strictly increasing node coordinates; cells are the gaps between."""

    nodes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=np.float64).reshape(-1).copy()
        if x.size < 2:
            raise ValueError("a grid needs at least two nodes")
        if not np.all(np.diff(x) > 0.0):
            raise ValueError("grid nodes must be strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @property
    def ncells(self) -> int:
        return self.nodes.size - 1

    @property
    def dx(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])


def uniform_grid(a: float, b: float, n: int) -> Grid1D:
    """Equispaced grid with ``n`` cells on ``[a, b]``."""
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    if n < 1:
        raise ValueError(f"need at least one cell, got {n}")
    return Grid1D(np.linspace(a, b, n + 1))


def asinh_grid(a: float, n: int) -> Grid1D:
    """Boundary-refined unit-length grid built from the inverse hyperbolic
    sine map; cell widths grow from the walls toward the channel center."""
    if n < 2 or n % 2 != 0:
        raise ValueError(f"need an even cell count >= 2, got {n}")
    i = np.arange(n + 1, dtype=np.float64)
    lo = math.asinh(-5.0)
    hi = math.asinh(5.0)
    nodes = a + (np.arcsinh(-5.0 + 10.0 * i / n) - lo) / (hi - lo)
    nodes[0] = a
    nodes[-1] = a + 1.0
    return Grid1D(nodes)


@dataclass(frozen=True)
class WallSpec:
    """Isothermal wall: temperature, tangential velocity and accommodation
    (1 = fully diffuse, 0 = specular)."""

    temperature: float
    velocity: np.ndarray
    accommodation: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0.0:
            raise ValueError(f"wall temperature must be positive, got {self.temperature}")
        v = np.asarray(self.velocity, dtype=np.float64).reshape(3).copy()
        if v[0] != 0.0:
            raise ValueError("wall velocity must have zero normal component")
        v.setflags(write=False)
        object.__setattr__(self, "velocity", v)
        if not 0.0 <= self.accommodation <= 1.0:
            raise ValueError(f"accommodation must lie in [0, 1], got {self.accommodation}")

    @classmethod
    def stationary(cls, temperature: float = 1.0) -> "WallSpec":
        return cls(temperature, np.zeros(3))


@dataclass(frozen=True)
class ProblemSpec:
    """Gas model, body force, wall pair, moment order and spatial domain."""

    gas: GasModel
    force: ExternalForce
    walls: tuple[WallSpec, WallSpec]
    order: int
    domain: tuple[float, float]

    def __post_init__(self):
        if self.order <= 2:
            raise ValueError(f"moment order must exceed 2, got {self.order}")
        if not self.domain[0] < self.domain[1]:
            raise ValueError(f"empty domain {self.domain}")

    @property
    def wave_factor(self) -> float:
        return hermite_extreme_root(self.order + 1)

    def phys(self) -> tuple:
        g = self.gas
        a = self.force.accel
        return (g.prandtl, g.knudsen, g.law_id, g.visc_exponent,
                a[0], a[1], a[2], self.wave_factor)

    def walls_array(self) -> np.ndarray:
        lw, rw = self.walls
        return np.array([
            lw.temperature, lw.velocity[0], lw.velocity[1], lw.velocity[2],
            lw.accommodation,
            rw.temperature, rw.velocity[0], rw.velocity[1], rw.velocity[2],
            rw.accommodation,
        ])


class Field:
    """Per-cell compliant states over a grid, stored as packed arrays."""

    def __init__(self, grid: Grid1D, order: int, coeffs: np.ndarray,
                 us: np.ndarray, ths: np.ndarray,
                 walls: tuple[WallSpec, WallSpec]):
        n = tables(order).size
        if coeffs.shape != (grid.ncells, n):
            raise ValueError(f"coefficient array has shape {coeffs.shape}, "
                             f"expected {(grid.ncells, n)}")
        self.grid = grid
        self.order = order
        self.coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
        self.us = np.ascontiguousarray(us, dtype=np.float64)
        self.ths = np.ascontiguousarray(ths, dtype=np.float64)
        self.walls = walls

    @classmethod
    def equilibrium(cls, grid: Grid1D, order: int,
                    walls: tuple[WallSpec, WallSpec],
                    rho: float = 1.0, u=(0.0, 0.0, 0.0),
                    theta: float = 1.0) -> "Field":
        n = tables(order).size
        ncells = grid.ncells
        coeffs = np.zeros((ncells, n))
        coeffs[:, 0] = rho
        us = np.tile(np.asarray(u, dtype=np.float64), (ncells, 1))
        ths = np.full(ncells, float(theta))
        return cls(grid, order, coeffs, us, ths, walls)

    @property
    def ncells(self) -> int:
        return self.grid.ncells

    def cell(self, i: int) -> MomentCoeffs:
        anchor = BasisAnchor(self.us[i].copy(), float(self.ths[i]), self.order)
        return MomentCoeffs(anchor, self.coeffs[i].copy(), compliant=True)

    def set_cell(self, i: int, f: MomentCoeffs) -> None:
        if f.order != self.order:
            raise ValueError("moment order mismatch")
        self.coeffs[i] = f.coeffs
        self.us[i] = f.anchor.u
        self.ths[i] = f.anchor.theta

    def copy(self) -> "Field":
        return Field(self.grid, self.order, self.coeffs.copy(),
                     self.us.copy(), self.ths.copy(), self.walls)

    def total_mass(self) -> float:
        return float(self.coeffs[:, 0] @ self.grid.dx)

    def scale(self, factor: float) -> None:
        """Uniform coefficient scaling (keeps compliance, anchors untouched)."""
        self.coeffs *= factor

    def macro_table(self) -> np.ndarray:
        """Columns x, rho, u1, u2, u3, theta, sigma11, sigma12, q1, q2."""
        tab = tables(self.order)
        off = tab.offset
        i2 = off((2, 0, 0))
        i12 = off((1, 1, 0))
        i3 = off((3, 0, 0))
        i120 = off((1, 2, 0))
        i102 = off((1, 0, 2))
        i210 = off((2, 1, 0))
        i030 = off((0, 3, 0))
        i012 = off((0, 1, 2))
        c = self.coeffs
        out = np.empty((self.ncells, 10))
        out[:, 0] = self.grid.centers
        out[:, 1] = c[:, 0]
        out[:, 2:5] = self.us
        out[:, 5] = self.ths
        out[:, 6] = 2.0 * c[:, i2]
        out[:, 7] = c[:, i12]
        out[:, 8] = 3.0 * c[:, i3] + c[:, i120] + c[:, i102]
        out[:, 9] = 3.0 * c[:, i030] + c[:, i210] + c[:, i012]
        return out


# ---------------------------------------------------------------------------
# interface flux and wall ghosts
# ---------------------------------------------------------------------------

def _state_macro(f: MomentCoeffs) -> tuple[float, float]:
    """Normal velocity and temperature of a (possibly raw) state."""
    tab = tables(f.order)
    rho, v1, v2, v3, th = K.raw_macro(f.coeffs, f.anchor.u[0], f.anchor.u[1],
                                      f.anchor.u[2], f.anchor.theta, tab.special)
    if not th > 0.0:
        raise ValueError(f"state temperature must be positive, got {th}")
    return v1, th


def hll_flux(f_l: MomentCoeffs, f_r: MomentCoeffs,
             anchor: BasisAnchor) -> MomentCoeffs:
    """Two-wave interface flux of the truncated transport operator, computed
    after re-expanding both states in ``anchor``.

    Wave bounds are the extreme characteristic speeds of the two states; the
    flux degenerates to pure upwinding when all waves share one sign.
    """
    if f_l.order != anchor.order or f_r.order != anchor.order:
        raise ValueError("flux states and anchor must share one moment order")
    tab = tables(anchor.order)
    cmax = hermite_extreme_root(anchor.order + 1)
    ul1, thl = _state_macro(f_l)
    ur1, thr = _state_macro(f_r)
    gl = K.project_coeffs(f_l.coeffs, f_l.anchor.u[0], f_l.anchor.u[1],
                          f_l.anchor.u[2], f_l.anchor.theta,
                          anchor.u[0], anchor.u[1], anchor.u[2], anchor.theta,
                          anchor.order, tab.alphas)
    gr = K.project_coeffs(f_r.coeffs, f_r.anchor.u[0], f_r.anchor.u[1],
                          f_r.anchor.u[2], f_r.anchor.theta,
                          anchor.u[0], anchor.u[1], anchor.u[2], anchor.theta,
                          anchor.order, tab.alphas)
    sl = K.stream_apply(gl, anchor.u[0], anchor.theta, tab.alphas, tab.up, tab.down)
    sr = K.stream_apply(gr, anchor.u[0], anchor.theta, tab.alphas, tab.up, tab.down)
    lam_m = min(ul1 - cmax * math.sqrt(thl), ur1 - cmax * math.sqrt(thr))
    lam_p = max(ul1 + cmax * math.sqrt(thl), ur1 + cmax * math.sqrt(thr))
    out = K.hll_combine(sl, sr, gl, gr, lam_m, lam_p)
    return MomentCoeffs(anchor, out, compliant=False)


def ghost_distribution(f_b: MomentCoeffs, wall: WallSpec, side: str) -> MomentCoeffs:
    """Ghost state representing the wall kinetics next to a boundary cell.

    Specular part mirrors the boundary state; the diffuse part is a wall
    Maxwellian whose density cancels the incoming half-space mass flux, so
    the net normal mass flux of the interaction vanishes.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if not f_b.check_compliance():
        raise ValueError("ghost construction requires a compliant boundary state")
    tab = tables(f_b.order)
    tab_tuple = (tab.alphas, tab.degree, tab.factorial, tab.up, tab.down,
                 tab.parity, tab.axis1, tab.canon, tab.special)
    g, u1, u2, u3, th = K.make_ghost(
        f_b.coeffs, f_b.anchor.u[0], f_b.anchor.u[1], f_b.anchor.u[2],
        f_b.anchor.theta, side == "left",
        wall.temperature, wall.velocity[0], wall.velocity[1], wall.velocity[2],
        wall.accommodation, f_b.order, tab_tuple)
    anchor = BasisAnchor(np.array([u1, u2, u3]), float(th), f_b.order)
    return MomentCoeffs(anchor, g, compliant=True)


# ---------------------------------------------------------------------------
# residual assembly
# ---------------------------------------------------------------------------

def _tab_tuple(order: int) -> tuple:
    tab = tables(order)
    return (tab.alphas, tab.degree, tab.factorial, tab.up, tab.down,
            tab.parity, tab.axis1, tab.canon, tab.special)


def cell_residual(f_prev, f_c: MomentCoeffs, f_next, dx: float,
                  spec: ProblemSpec) -> MomentCoeffs:
    """Steady-state defect of one cell in its own anchor.

    ``None`` in place of a neighbor marks a wall on that side; the matching
    ghost is built from ``f_c`` itself.
    """
    order = spec.order
    tab = tables(order)
    tt = _tab_tuple(order)
    anchor = f_c.anchor
    t_eval = K.moment_matrix(anchor.u[0], anchor.u[1], anchor.u[2],
                             anchor.theta, order, tab.alphas)
    n = tab.size
    dummy = np.zeros(n)

    def prep(nbr):
        g = K.project_coeffs(nbr.coeffs, nbr.anchor.u[0], nbr.anchor.u[1],
                             nbr.anchor.u[2], nbr.anchor.theta,
                             anchor.u[0], anchor.u[1], anchor.u[2],
                             anchor.theta, order, tab.alphas)
        s = K.stream_apply(g, anchor.u[0], anchor.theta, tab.alphas,
                           tab.up, tab.down)
        v1, th = _state_macro(nbr)
        return g, s, v1, th

    left_wall = f_prev is None
    right_wall = f_next is None
    fl, sl, ul1, thl = (dummy, dummy, 0.0, 1.0) if left_wall else prep(f_prev)
    fr, sr, ur1, thr = (dummy, dummy, 0.0, 1.0) if right_wall else prep(f_next)
    rt, status = K.cell_residual(
        f_c.coeffs, anchor.u[0], anchor.u[1], anchor.u[2], anchor.theta,
        t_eval, left_wall, right_wall, fl, sl, ul1, thl, fr, sr, ur1, thr,
        float(dx), spec.phys(), spec.walls_array(), np.zeros(n), order, tt)
    if status != 0:
        raise ValueError("residual evaluation hit a nonpositive state")
    return MomentCoeffs(anchor, -rt, compliant=False)


def local_norm(r: MomentCoeffs) -> float:
    """Weighted L2 norm of a coefficient vector in its own anchor."""
    tab = tables(r.order)
    return math.sqrt(K.local_norm_sq(r.coeffs, r.anchor.theta,
                                     tab.degree, tab.factorial))


def global_norm(residuals, grid: Grid1D) -> float:
    """Width-weighted root-sum-square of per-cell residual norms."""
    dx = grid.dx
    if len(residuals) != grid.ncells:
        raise ValueError("residual count does not match cell count")
    acc = 0.0
    for i, r in enumerate(residuals):
        if isinstance(r, MomentCoeffs):
            nrm = local_norm(r)
        else:
            nrm = float(r)
        acc += nrm * nrm * dx[i]
    return math.sqrt(acc)


def rhs_to_moments(rhs, order: int, ncells: int) -> tuple[np.ndarray, bool]:
    """Raw-moment storage of a per-cell right-hand side (anchor free)."""
    n = tables(order).size
    if rhs is None:
        return np.zeros((ncells, n)), False
    tab = tables(order)
    out = np.empty((ncells, n))
    for i, r in enumerate(rhs):
        t = K.moment_matrix(r.anchor.u[0], r.anchor.u[1], r.anchor.u[2],
                            r.anchor.theta, order, tab.alphas)
        out[i] = t @ r.coeffs
    return out, True


def assemble_arrays(field: Field, spec: ProblemSpec, rhs_m: np.ndarray,
                    has_rhs: bool) -> tuple[np.ndarray, np.ndarray]:
    """Array-level residual assembly used by the solvers."""
    rt, norms, status = K.assemble_kernel(
        field.coeffs, field.us, field.ths, field.grid.dx, has_rhs, rhs_m,
        spec.phys(), spec.walls_array(), spec.order, _tab_tuple(spec.order))
    if status != 0:
        raise ValueError("residual assembly hit a nonpositive state")
    return rt, norms


def assemble_residual(field: Field, spec: ProblemSpec,
                      rhs=None) -> list[MomentCoeffs]:
    """Per-cell defects ``rhs - R`` in each cell's own anchor (zero rhs on
    the finest level)."""
    rhs_m, has_rhs = rhs_to_moments(rhs, spec.order, field.ncells)
    rt, _ = assemble_arrays(field, spec, rhs_m, has_rhs)
    out = []
    for i in range(field.ncells):
        anchor = BasisAnchor(field.us[i].copy(), float(field.ths[i]), spec.order)
        out.append(MomentCoeffs(anchor, rt[i].copy(), compliant=False))
    return out
