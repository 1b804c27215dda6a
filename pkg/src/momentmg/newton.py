"""Single-grid nonlinear solver: cell-local Newton iteration with a
numerically differentiated, residual-regularized Jacobian, the symmetric
Gauss-Seidel sweep, the outer driver, the positivity relaxation bound, the
global mass correction, and an explicit pseudo-time baseline."""

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .basis import BasisAnchor, MomentCoeffs
from .discretization import (Field, ProblemSpec, assemble_arrays,
                             rhs_to_moments)
from .history import SolveHistory, WorkCounter
from .indexing import tables

__all__ = [
    "NewtonConfig", "SweepStats", "DivergenceError", "SingularMatrixError",
    "numerical_jacobian", "regularized_solve", "max_relaxation",
    "local_newton", "sgs_sweep", "single_grid_solve", "solve_moments",
    "mass_correction", "pseudo_time_step", "pseudo_time_solve",
]

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e6


class DivergenceError(RuntimeError):
    """Raised when the outer iteration blows up or hits a non-finite state."""


class SingularMatrixError(RuntimeError):
    """Raised when the regularized local system cannot be factorized."""


@dataclass(frozen=True)
class NewtonConfig:
    """Knobs of the local Newton iteration.

    ``tol`` is the local stopping tolerance (conventionally set to the global
    one); ``fd_floor`` scales the perturbation floor for zero coefficients;
    the floors keep density and temperature strictly positive through the
    damped updates.
    """

    reg_weight: float = 1.0
    tol: float = 1e-8
    max_steps: int = 5
    halving_stop: bool = True
    fd_floor: float = 1e-4
    rho_floor: float = 1e-6
    theta_floor: float = 1e-6

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be at least 1, got {self.max_steps}")
        if not (self.rho_floor > 0.0 and self.theta_floor > 0.0):
            raise ValueError("positivity floors must be positive")
        if self.reg_weight < 0.0:
            raise ValueError(f"regularization weight must be >= 0, got {self.reg_weight}")

    def packed(self) -> tuple:
        return (self.reg_weight, self.tol, float(self.max_steps),
                1.0 if self.halving_stop else 0.0, self.fd_floor,
                self.rho_floor, self.theta_floor)


@dataclass
class SweepStats:
    """Counters of one SGS sweep."""

    newton_steps: int = 0
    tau_clips: int = 0
    singular_cells: int = 0
    wall_seconds: float = 0.0


def _tab_tuple(order: int) -> tuple:
    tab = tables(order)
    return (tab.alphas, tab.degree, tab.factorial, tab.up, tab.down,
            tab.parity, tab.axis1, tab.canon, tab.special)


def _embed(f_c: MomentCoeffs, neighbors) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Pack a cell and its (possibly wall) neighbors into a minimal field."""
    left, right = neighbors
    states = [s for s in (left, f_c, right) if s is not None]
    order = f_c.order
    n = tables(order).size
    ncells = len(states)
    coeffs = np.empty((ncells, n))
    us = np.empty((ncells, 3))
    ths = np.empty(ncells)
    for k, s in enumerate(states):
        if s.order != order:
            raise ValueError("neighbor moment order mismatch")
        coeffs[k] = s.coeffs
        us[k] = s.anchor.u
        ths[k] = s.anchor.theta
    return coeffs, us, ths, (0 if left is None else 1)


def numerical_jacobian(f_c: MomentCoeffs, neighbors, dx: float,
                       spec: ProblemSpec, cfg: NewtonConfig,
                       rhs: MomentCoeffs | None = None) -> np.ndarray:
    """Finite-difference Jacobian of the cell residual with respect to the
    coefficients in the cell's current anchor.

    ``neighbors`` is ``(left, right)`` with ``None`` marking a wall side; the
    wall ghost is rebuilt per perturbed evaluation, so the returned matrix
    includes the boundary coupling.
    """
    order = spec.order
    tab = tables(order)
    tt = _tab_tuple(order)
    anchor = f_c.anchor
    left, right = neighbors
    n = tab.size
    t_eval = K.moment_matrix(anchor.u[0], anchor.u[1], anchor.u[2],
                             anchor.theta, order, tab.alphas)
    if rhs is None:
        rhs_a = np.zeros(n)
    else:
        t_r = K.moment_matrix(rhs.anchor.u[0], rhs.anchor.u[1],
                              rhs.anchor.u[2], rhs.anchor.theta, order,
                              tab.alphas)
        rhs_a = K.forward_sub(t_eval, t_r @ rhs.coeffs)
    dummy = np.zeros(n)

    def prep(nbr):
        g = K.project_coeffs(nbr.coeffs, nbr.anchor.u[0], nbr.anchor.u[1],
                             nbr.anchor.u[2], nbr.anchor.theta,
                             anchor.u[0], anchor.u[1], anchor.u[2],
                             anchor.theta, order, tab.alphas)
        s = K.stream_apply(g, anchor.u[0], anchor.theta, tab.alphas,
                           tab.up, tab.down)
        rho, v1, v2, v3, th = K.raw_macro(nbr.coeffs, nbr.anchor.u[0],
                                          nbr.anchor.u[1], nbr.anchor.u[2],
                                          nbr.anchor.theta, tab.special)
        return g, s, v1, th

    fl, sl, ul1, thl = (dummy, dummy, 0.0, 1.0) if left is None else prep(left)
    fr, sr, ur1, thr = (dummy, dummy, 0.0, 1.0) if right is None else prep(right)
    args = (anchor.u[0], anchor.u[1], anchor.u[2], anchor.theta, t_eval,
            left is None, right is None, fl, sl, ul1, thl, fr, sr, ur1, thr,
            float(dx), spec.phys(), spec.walls_array(), rhs_a)
    r0, status = K.cell_residual(f_c.coeffs, *args, order, tt)
    if status != 0:
        raise ValueError("residual evaluation hit a nonpositive state")
    jac, status = K.fd_jacobian(f_c.coeffs, *args, r0, cfg.fd_floor, order, tt)
    if status != 0:
        raise ValueError("Jacobian perturbation hit a degenerate state")
    return jac


def regularized_solve(jac: np.ndarray, defect: np.ndarray, weight: float,
                      norm: float) -> np.ndarray:
    """Solve ``(weight*norm*I + J) x = defect`` by dense LU with partial
    pivoting; a singular factorization raises ``SingularMatrixError``."""
    a = np.array(jac, dtype=np.float64, copy=True)
    b = np.ascontiguousarray(defect, dtype=np.float64)
    shift = weight * norm
    for d in range(a.shape[0]):
        a[d, d] += shift
    x, flag = K.lu_solve(a, b)
    if flag != 0:
        raise SingularMatrixError("regularized local system is singular")
    return x


def max_relaxation(f: MomentCoeffs, delta: np.ndarray, rho_floor: float,
                   theta_floor: float) -> float:
    """Largest update fraction in (0, 1] keeping density and temperature at
    or above their floors along ``f + tau*delta``."""
    if not f.check_compliance():
        raise ValueError("relaxation bound requires a compliant state")
    sp = tables(f.order).special
    f0 = f.coeffs[0]
    if f0 <= rho_floor:
        raise ValueError(f"density {f0} already at or below the floor {rho_floor}")
    if f.anchor.theta < theta_floor:
        raise ValueError(f"temperature {f.anchor.theta} below the floor {theta_floor}")
    d = np.asarray(delta, dtype=np.float64).reshape(-1)
    s1 = d[sp[0]] ** 2 + d[sp[1]] ** 2 + d[sp[2]] ** 2
    s2 = d[sp[3]] + d[sp[4]] + d[sp[5]]
    return float(K.relaxation_tau(f0, d[0], s1, s2,
                                  f.anchor.theta - theta_floor, rho_floor))


def local_newton(f_c: MomentCoeffs, neighbors, dx: float,
                 rhs: MomentCoeffs | None, spec: ProblemSpec,
                 cfg: NewtonConfig) -> tuple[MomentCoeffs, int]:
    """Damped Newton iteration for one cell with frozen neighbors.

    Stops when the local defect norm reaches ``cfg.tol``, when it has at
    least halved, or after ``cfg.max_steps`` updates.
    """
    coeffs, us, ths, i = _embed(f_c, neighbors)
    order = spec.order
    n = coeffs.shape[1]
    if rhs is None:
        rhs_m = np.zeros(n)
        has_rhs = False
    else:
        tab = tables(order)
        t_r = K.moment_matrix(rhs.anchor.u[0], rhs.anchor.u[1],
                              rhs.anchor.u[2], rhs.anchor.theta, order,
                              tab.alphas)
        rhs_m = t_r @ rhs.coeffs
        has_rhs = True
    steps, clips, singular, status = K.newton_cell(
        coeffs, us, ths, i, coeffs.shape[0], float(dx), has_rhs, rhs_m,
        spec.phys(), spec.walls_array(), cfg.packed(), order,
        _tab_tuple(order))
    if status != 0:
        raise DivergenceError("local Newton iteration hit a non-finite or "
                              "nonpositive state")
    anchor = BasisAnchor(us[i].copy(), float(ths[i]), order)
    return MomentCoeffs(anchor, coeffs[i].copy(), compliant=True), steps


def sgs_sweep(field: Field, rhs, spec: ProblemSpec,
              cfg: NewtonConfig) -> tuple[Field, SweepStats]:
    """One symmetric Gauss-Seidel pass over the field (forward then
    backward), each cell solved by the local Newton iteration."""
    out = field.copy()
    rhs_m, has_rhs = rhs_to_moments(rhs, spec.order, field.ncells)
    start = time.perf_counter()
    steps, clips, singular, status = K.sgs_sweep_kernel(
        out.coeffs, out.us, out.ths, field.grid.dx, has_rhs, rhs_m,
        spec.phys(), spec.walls_array(), cfg.packed(), spec.order,
        _tab_tuple(spec.order))
    if status != 0:
        raise DivergenceError("SGS sweep hit a non-finite or nonpositive state")
    stats = SweepStats(newton_steps=int(steps), tau_clips=int(clips),
                       singular_cells=int(singular),
                       wall_seconds=time.perf_counter() - start)
    if singular:
        logger.debug("sweep skipped %d cells with singular local systems", singular)
    return out, stats


def mass_correction(field: Field, initial_mass: float) -> Field:
    """Uniform rescaling restoring the initial total mass exactly."""
    current = field.total_mass()
    if not current > 0.0:
        raise ValueError(f"total mass must be positive, got {current}")
    out = field.copy()
    out.scale(initial_mass / current)
    return out


def _global_norm_arrays(field: Field, spec: ProblemSpec, rhs_m, has_rhs) -> float:
    _, norms = assemble_arrays(field, spec, rhs_m, has_rhs)
    return float(math.sqrt(np.sum(norms * norms * field.grid.dx)))


def single_grid_solve(field: Field, rhs, spec: ProblemSpec, cfg: NewtonConfig,
                      tol: float, max_iters: int,
                      initial_mass: float | None = None
                      ) -> tuple[Field, SolveHistory]:
    """Outer driver: repeat sweep (+ optional mass correction) until the
    weighted global defect norm falls below ``tol``.

    ``initial_mass`` enables the mass correction after every iteration (it is
    applied on the finest level only; coarse problems carry artificial
    right-hand sides for which total mass has no meaning).
    """
    rhs_m, has_rhs = rhs_to_moments(rhs, spec.order, field.ncells)
    return solve_moments(field, rhs_m, has_rhs, spec, cfg, tol, max_iters,
                         initial_mass=initial_mass)


def solve_moments(field: Field, rhs_m: np.ndarray, has_rhs: bool,
                  spec: ProblemSpec, cfg: NewtonConfig, tol: float,
                  max_iters: int, initial_mass: float | None = None,
                  work: WorkCounter | None = None,
                  sweep_weight: float = 1.0,
                  history: SolveHistory | None = None
                  ) -> tuple[Field, SolveHistory]:
    """Array-level variant of :func:`single_grid_solve` with the right-hand
    side given as raw moments; ``work``/``sweep_weight`` hook the shared
    accounting when this runs as the coarsest-level solver."""
    field = field.copy()
    if work is None:
        work = WorkCounter()
    if history is None:
        history = SolveHistory()
    norm = _global_norm_arrays(field, spec, rhs_m, has_rhs)
    norm0 = norm
    history.append(work.record(0, norm))
    if norm <= tol:
        history.converged = True
        return field, history
    for it in range(1, max_iters + 1):
        _, stats = _sweep_inplace(field, spec, cfg, rhs_m, has_rhs)
        work.sweeps += sweep_weight
        work.newton_steps += stats.newton_steps
        if initial_mass is not None:
            current = field.total_mass()
            if not current > 0.0:
                raise DivergenceError("total mass became nonpositive")
            field.scale(initial_mass / current)
        norm = _global_norm_arrays(field, spec, rhs_m, has_rhs)
        history.append(work.record(it, norm))
        if not math.isfinite(norm):
            raise DivergenceError(f"defect norm became non-finite at iteration {it}")
        if norm <= tol:
            history.converged = True
            return field, history
        if norm > DIVERGENCE_FACTOR * max(norm0, tol):
            raise DivergenceError(
                f"defect norm grew {norm / max(norm0, tol):.2e}-fold by iteration {it}")
    return field, history


def _sweep_inplace(field: Field, spec: ProblemSpec, cfg: NewtonConfig,
                   rhs_m, has_rhs) -> tuple[Field, SweepStats]:
    steps, clips, singular, status = K.sgs_sweep_kernel(
        field.coeffs, field.us, field.ths, field.grid.dx, has_rhs, rhs_m,
        spec.phys(), spec.walls_array(), cfg.packed(), spec.order,
        _tab_tuple(spec.order))
    if status != 0:
        raise DivergenceError("SGS sweep hit a non-finite or nonpositive state")
    return field, SweepStats(newton_steps=int(steps), tau_clips=int(clips),
                             singular_cells=int(singular))


def pseudo_time_step(field: Field, spec: ProblemSpec, cfl: float) -> Field:
    """One explicit relaxation step with per-cell time steps bounded by the
    fastest characteristic speed."""
    if not 0.0 < cfl <= 1.0:
        raise ValueError(f"cfl must lie in (0, 1], got {cfl}")
    out = field.copy()
    status = K.pseudo_step_kernel(out.coeffs, out.us, out.ths, field.grid.dx,
                                  float(cfl), spec.phys(), spec.walls_array(),
                                  spec.order, _tab_tuple(spec.order))
    if status != 0:
        raise DivergenceError("explicit step produced a nonpositive state; "
                              "reduce the CFL number")
    return out


def pseudo_time_solve(field: Field, spec: ProblemSpec, tol: float,
                      max_steps: int, cfl: float = 0.9,
                      initial_mass: float | None = None,
                      record_every: int = 1) -> tuple[Field, SolveHistory]:
    """March the explicit scheme to steady state (comparison baseline).

    One step counts as half a smoother sweep in the work accounting (a sweep
    visits every cell twice).
    """
    field = field.copy()
    n = field.coeffs.shape[1]
    rhs_m = np.zeros((field.ncells, n))
    work = WorkCounter()
    history = SolveHistory()
    norm = _global_norm_arrays(field, spec, rhs_m, False)
    norm0 = norm
    history.append(work.record(0, norm))
    if norm <= tol:
        history.converged = True
        return field, history
    tt = _tab_tuple(spec.order)
    phys = spec.phys()
    walls = spec.walls_array()
    dx = field.grid.dx
    for it in range(1, max_steps + 1):
        status = K.pseudo_step_kernel(field.coeffs, field.us, field.ths, dx,
                                      float(cfl), phys, walls, spec.order, tt)
        if status != 0:
            raise DivergenceError("explicit step produced a nonpositive state")
        work.sweeps += 0.5
        if initial_mass is not None:
            field.scale(initial_mass / field.total_mass())
        if it % record_every == 0 or it == max_steps:
            norm = _global_norm_arrays(field, spec, rhs_m, False)
            history.append(work.record(it, norm))
            if not math.isfinite(norm):
                raise DivergenceError("defect norm became non-finite")
            if norm <= tol:
                history.converged = True
                return field, history
            if norm > DIVERGENCE_FACTOR * max(norm0, tol):
                raise DivergenceError("explicit marching diverged")
    return field, history
