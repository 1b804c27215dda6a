"""Convergence bookkeeping shared by all drivers.

Work is measured in units of one full fine-grid SGS sweep (two cell-update
passes).  A sweep on a coarser level counts as its cell fraction of the
reference grid; one explicit pseudo-time step visits every cell once and
counts as half a sweep.
"""

import time
from dataclasses import dataclass, field

__all__ = ["ConvergenceRecord", "SolveHistory", "WorkCounter"]


@dataclass(frozen=True)
class ConvergenceRecord:
    """State of a solve after one outer iteration (iteration 0 = initial)."""

    iteration: int
    residual: float
    sweeps: float
    newton_steps: int
    wall_ms: float


@dataclass
class SolveHistory:
    records: list = field(default_factory=list)
    converged: bool = False

    def append(self, record: ConvergenceRecord) -> None:
        self.records.append(record)

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration if self.records else 0

    @property
    def final_residual(self) -> float:
        return self.records[-1].residual if self.records else float("nan")

    @property
    def total_sweeps(self) -> float:
        return self.records[-1].sweeps if self.records else 0.0

    @property
    def wall_ms(self) -> float:
        return self.records[-1].wall_ms if self.records else 0.0

    def work_to_reach(self, target: float) -> float:
        """Smoother-equivalent work at the first record at or below target."""
        for rec in self.records:
            if rec.residual <= target:
                return rec.sweeps
        return float("inf")


@dataclass
class WorkCounter:
    sweeps: float = 0.0
    newton_steps: int = 0
    started: float = field(default_factory=time.perf_counter)

    def elapsed_ms(self) -> float:
        return 1e3 * (time.perf_counter() - self.started)

    def record(self, iteration: int, residual: float) -> ConvergenceRecord:
        return ConvergenceRecord(iteration=iteration, residual=residual,
                                 sweeps=self.sweeps,
                                 newton_steps=self.newton_steps,
                                 wall_ms=self.elapsed_ms())
