"""Full-approximation-scheme nonlinear multigrid on nested 1-D grids.

Each coarse cell is the union of two adjacent fine cells; restriction merges
states conservatively (anchors from the mass/momentum/energy balances,
coefficients by width-weighted averaging in the merged anchor), prolongation
is the identity plus the additive coarse change.  The smoother is the
SGS-Newton sweep from :mod:`momentmg.newton`.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .basis import BasisAnchor, MomentCoeffs
from .discretization import (Field, Grid1D, ProblemSpec, assemble_arrays,
                             rhs_to_moments)
from .history import SolveHistory, WorkCounter
from .indexing import tables
from .newton import (DivergenceError, NewtonConfig, _sweep_inplace,
                     _tab_tuple, solve_moments)

__all__ = [
    "CycleConfig", "LevelHierarchy", "build_hierarchy", "restrict_field",
    "restrict_residual", "coarse_rhs", "prolong_correct", "nmg_cycle",
    "nmg_solve",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CycleConfig:
    """Cycle shape: gamma=1 gives a V-cycle, gamma=2 a W-cycle."""

    gamma: int = 1
    nu_pre: int = 2
    nu_post: int = 2
    coarsest_cells: int = 4
    coarsest_max_sweeps: int = 100
    coarsest_tol_ratio: float = 0.01

    def __post_init__(self):
        if self.gamma not in (1, 2):
            raise ValueError(f"cycle index must be 1 or 2, got {self.gamma}")
        if self.nu_pre + self.nu_post < 1:
            raise ValueError("need at least one smoothing step per cycle")
        if self.coarsest_cells < 1:
            raise ValueError("coarsest grid needs at least one cell")


@dataclass(frozen=True)
class LevelHierarchy:
    """Nested grids, index 0 coarsest; every coarse node is a fine node."""

    grids: tuple[Grid1D, ...]

    @property
    def levels(self) -> int:
        return len(self.grids)

    @property
    def finest(self) -> int:
        return len(self.grids) - 1

    def weight(self, level: int) -> float:
        """Cost of one sweep on ``level`` in units of finest-grid sweeps."""
        return self.grids[level].ncells / self.grids[self.finest].ncells


def build_hierarchy(grid: Grid1D, coarsest_cells: int = 4) -> LevelHierarchy:
    """Coarsen by merging adjacent cell pairs down to ``coarsest_cells``."""
    n = grid.ncells
    if n < coarsest_cells:
        raise ValueError(f"grid has {n} cells, fewer than the coarsest target "
                         f"{coarsest_cells}")
    levels = [grid]
    while levels[-1].ncells > coarsest_cells:
        cur = levels[-1]
        if cur.ncells % 2 != 0:
            raise ValueError(f"cannot halve a grid with {cur.ncells} cells")
        levels.append(Grid1D(cur.nodes[::2]))
    if levels[-1].ncells != coarsest_cells:
        raise ValueError(f"cell count {n} is not a power-of-two multiple of "
                         f"{coarsest_cells}")
    return LevelHierarchy(tuple(reversed(levels)))


def restrict_field(field: Field, hierarchy: LevelHierarchy,
                   level: int) -> Field:
    """Conservative merge of the level-``level`` field onto level-1 cells."""
    if level < 1:
        raise ValueError("cannot restrict below the coarsest level")
    if field.ncells != hierarchy.grids[level].ncells:
        raise ValueError("field does not live on the stated level")
    cc, cu, cth, status = K.restrict_field_kernel(
        field.coeffs, field.us, field.ths, field.grid.dx, field.order,
        _tab_tuple(field.order))
    if status != 0:
        raise ValueError("restriction produced a nonpositive coarse temperature")
    return Field(hierarchy.grids[level - 1], field.order, cc, cu, cth,
                 field.walls)


def restrict_residual(residuals, coarse_field: Field,
                      hierarchy: LevelHierarchy, level: int) -> list[MomentCoeffs]:
    """Width-weighted transfer of per-cell raw vectors into the coarse
    anchors fixed by the restricted solution."""
    fine_grid = hierarchy.grids[level]
    if len(residuals) != fine_grid.ncells:
        raise ValueError("residual count does not match the fine level")
    order = coarse_field.order
    tab = tables(order)
    n = tab.size
    rfine = np.empty((fine_grid.ncells, n))
    fus = np.empty((fine_grid.ncells, 3))
    fths = np.empty(fine_grid.ncells)
    for i, r in enumerate(residuals):
        rfine[i] = r.coeffs
        fus[i] = r.anchor.u
        fths[i] = r.anchor.theta
    rc = K.restrict_raw_kernel(rfine, fus, fths, fine_grid.dx,
                               coarse_field.us, coarse_field.ths, order,
                               tab.alphas)
    out = []
    for i in range(coarse_field.ncells):
        anchor = BasisAnchor(coarse_field.us[i].copy(),
                             float(coarse_field.ths[i]), order)
        out.append(MomentCoeffs(anchor, rc[i].copy(), compliant=False))
    return out


def coarse_rhs(coarse_field: Field, restricted_residuals,
               spec: ProblemSpec) -> list[MomentCoeffs]:
    """Right-hand side of the coarse problem: the coarse operator applied to
    the restricted solution plus the transferred fine defect.

    With a zero fine defect the restricted solution already solves the coarse
    problem, so the cycle is a fixed point of exact fine solutions.
    """
    n = tables(spec.order).size
    rhs_m = np.zeros((coarse_field.ncells, n))
    rt, _ = assemble_arrays(coarse_field, spec, rhs_m, False)
    out = []
    for i, rbar in enumerate(restricted_residuals):
        coeffs = rbar.coeffs - rt[i]     # rt holds -R_H(coarse field)
        out.append(MomentCoeffs(rbar.anchor, coeffs, compliant=False))
    return out


def prolong_correct(fine_field: Field, coarse_base: Field,
                    coarse_solved: Field, cfg: NewtonConfig) -> Field:
    """Add the coarse change to each fine cell (identity prolongation), with
    per-cell halving of the change whenever it would break positivity."""
    if coarse_base.ncells * 2 != fine_field.ncells:
        raise ValueError("coarse and fine levels are not nested")
    out = fine_field.copy()
    K.prolong_correct_kernel(
        out.coeffs, out.us, out.ths,
        coarse_base.coeffs, coarse_base.us, coarse_base.ths,
        coarse_solved.coeffs, coarse_solved.us, coarse_solved.ths,
        cfg.rho_floor, cfg.theta_floor, fine_field.order,
        _tab_tuple(fine_field.order))
    return out


def _level_norm(field: Field, spec: ProblemSpec, rhs_m, has_rhs) -> float:
    _, norms = assemble_arrays(field, spec, rhs_m, has_rhs)
    return float(math.sqrt(np.sum(norms * norms * field.grid.dx)))


def _cycle(field: Field, rhs_m: np.ndarray, has_rhs: bool, level: int,
           hierarchy: LevelHierarchy, spec: ProblemSpec, cfg: NewtonConfig,
           ccfg: CycleConfig, tol: float, work: WorkCounter) -> Field:
    """One multigrid iteration on ``level`` (arrays-level recursion)."""
    if level == 0:
        norm_in = _level_norm(field, spec, rhs_m, has_rhs)
        coarse_tol = max(tol, ccfg.coarsest_tol_ratio * norm_in)
        field, hist = solve_moments(
            field, rhs_m, has_rhs, spec, cfg, coarse_tol,
            ccfg.coarsest_max_sweeps, initial_mass=None, work=work,
            sweep_weight=hierarchy.weight(0))
        if not hist.converged:
            logger.debug("coarsest solve stopped at defect %.3e after %d sweeps",
                         hist.final_residual, hist.iterations)
        return field

    weight = hierarchy.weight(level)
    for _ in range(ccfg.nu_pre):
        _, stats = _sweep_inplace(field, spec, cfg, rhs_m, has_rhs)
        work.sweeps += weight
        work.newton_steps += stats.newton_steps

    rt, _ = assemble_arrays(field, spec, rhs_m, has_rhs)
    cc, cu, cth, status = K.restrict_field_kernel(
        field.coeffs, field.us, field.ths, field.grid.dx, field.order,
        _tab_tuple(field.order))
    if status != 0:
        logger.warning("restriction failed on level %d; smoothing only", level)
        for _ in range(ccfg.nu_post):
            _, stats = _sweep_inplace(field, spec, cfg, rhs_m, has_rhs)
            work.sweeps += weight
            work.newton_steps += stats.newton_steps
        return field
    coarse = Field(hierarchy.grids[level - 1], field.order, cc, cu, cth,
                   field.walls)
    rbar_c = K.restrict_raw_kernel(rt, field.us, field.ths, field.grid.dx,
                                   coarse.us, coarse.ths, field.order,
                                   tables(field.order).alphas)
    n = rt.shape[1]
    zeros = np.zeros((coarse.ncells, n))
    rt_c, _ = assemble_arrays(coarse, spec, zeros, False)
    rhs_coeff_c = rbar_c - rt_c          # I(rhs - R_h) + R_H(restricted)
    tab = tables(field.order)
    rhs_m_c = np.empty_like(rhs_coeff_c)
    for i in range(coarse.ncells):
        t = K.moment_matrix(coarse.us[i, 0], coarse.us[i, 1], coarse.us[i, 2],
                            coarse.ths[i], field.order, tab.alphas)
        rhs_m_c[i] = t @ rhs_coeff_c[i]

    solved = coarse.copy()
    try:
        for _ in range(ccfg.gamma):
            solved = _cycle(solved, rhs_m_c, True, level - 1, hierarchy, spec,
                            cfg, ccfg, tol, work)
        out = prolong_correct(field, coarse, solved, cfg)
    except DivergenceError:
        logger.warning("coarse solve diverged on level %d; skipping the "
                       "correction for this cycle", level - 1)
        out = field

    for _ in range(ccfg.nu_post):
        _, stats = _sweep_inplace(out, spec, cfg, rhs_m, has_rhs)
        work.sweeps += weight
        work.newton_steps += stats.newton_steps
    return out


def nmg_cycle(field: Field, rhs, level: int, hierarchy: LevelHierarchy,
              spec: ProblemSpec, cfg: NewtonConfig, ccfg: CycleConfig,
              tol: float = 1e-8,
              work: WorkCounter | None = None) -> Field:
    """One multigrid iteration on the given level (level 0 delegates to the
    single-grid driver)."""
    if field.ncells != hierarchy.grids[level].ncells:
        raise ValueError("field does not live on the stated level")
    rhs_m, has_rhs = rhs_to_moments(rhs, spec.order, field.ncells)
    if work is None:
        work = WorkCounter()
    return _cycle(field.copy(), rhs_m, has_rhs, level, hierarchy, spec, cfg,
                  ccfg, tol, work)


def nmg_solve(field: Field, spec: ProblemSpec, cfg: NewtonConfig,
              ccfg: CycleConfig, tol: float = 1e-8, max_cycles: int = 1000,
              initial_mass: float | None = None
              ) -> tuple[Field, SolveHistory]:
    """Outer driver: repeat cycles (plus the mass correction on the finest
    level) until the weighted global defect norm reaches ``tol``."""
    hierarchy = build_hierarchy(field.grid, ccfg.coarsest_cells)
    level = hierarchy.finest
    field = field.copy()
    n = tables(spec.order).size
    rhs_m = np.zeros((field.ncells, n))
    work = WorkCounter()
    history = SolveHistory()
    if initial_mass is None:
        initial_mass = field.total_mass()
    norm = _level_norm(field, spec, rhs_m, False)
    norm0 = norm
    history.append(work.record(0, norm))
    if norm <= tol:
        history.converged = True
        return field, history
    for it in range(1, max_cycles + 1):
        field = _cycle(field, rhs_m, False, level, hierarchy, spec, cfg, ccfg,
                       tol, work)
        current = field.total_mass()
        if not current > 0.0:
            raise DivergenceError("total mass became nonpositive")
        field.scale(initial_mass / current)
        norm = _level_norm(field, spec, rhs_m, False)
        history.append(work.record(it, norm))
        if not math.isfinite(norm):
            raise DivergenceError(f"defect norm became non-finite at cycle {it}")
        if norm <= tol:
            history.converged = True
            return field, history
        if norm > 1e6 * max(norm0, tol):
            raise DivergenceError(
                f"defect norm grew {norm / max(norm0, tol):.2e}-fold by cycle {it}")
    return field, history
