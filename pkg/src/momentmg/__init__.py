"""Steady-state Hermite moment solver for rarefied channel microflows.

The package solves the order-M moment system of the relaxation-model kinetic
equation in one space dimension.  A cell-local Newton iteration nested in a
symmetric Gauss-Seidel sweep serves as the smoother of a full-approximation
nonlinear multigrid driver; an explicit pseudo-time marcher is kept as the
comparison baseline.  ``momentmg.bench`` and the ``momentmg`` command-line
tool reproduce the planar Couette and force-driven Poiseuille benchmarks.
"""

from .basis import (BasisAnchor, MacroState, MomentCoeffs, hermite_extreme_root,
                    hermite_value, macro_from_coeffs, maxwellian, project,
                    raw_moment, stream_coeffs)
from .closure import (ExternalForce, GasModel, collision_coeffs,
                      collision_frequency, es_expansion, force_coeffs)
from .discretization import (Field, Grid1D, ProblemSpec, WallSpec,
                             asinh_grid, assemble_residual, cell_residual,
                             ghost_distribution, global_norm, hll_flux,
                             local_norm, uniform_grid)
from .history import ConvergenceRecord, SolveHistory
from .indexing import enumerate_indices, space_size
from .multigrid import (CycleConfig, LevelHierarchy, build_hierarchy,
                        coarse_rhs, nmg_cycle, nmg_solve, prolong_correct,
                        restrict_field, restrict_residual)
from .newton import (DivergenceError, NewtonConfig, SingularMatrixError,
                     SweepStats, local_newton, mass_correction,
                     max_relaxation, numerical_jacobian, pseudo_time_solve,
                     pseudo_time_step, regularized_solve, sgs_sweep,
                     single_grid_solve)

__version__ = "0.1.0"
