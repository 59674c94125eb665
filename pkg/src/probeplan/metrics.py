"""Per-run results and batch aggregation.

Conventions: completion-time statistics cover successful runs only (failed
runs have no completion time); the gap metric is the minimum center
distance seen during the run (the safety-relevant reading); reported
standard deviations are population (ddof=0) values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

SUCCESS = "success"
VIOLATION = "violation"
TIMEOUT = "timeout"
ERROR = "error"


@dataclass(frozen=True)
class RunResult:
    """Outcome of one simulation run."""

    success: bool
    completion_time: float
    min_gap: float
    mean_velocity: float
    mean_abs_long_jerk: float
    mean_abs_ang_jerk: float
    termination_reason: str

    def __post_init__(self) -> None:
        if self.termination_reason not in (SUCCESS, VIOLATION, TIMEOUT, ERROR):
            raise InvalidInputError(f"unknown termination {self.termination_reason!r}")
        if self.success != (self.termination_reason == SUCCESS):
            raise InvalidInputError("success flag must match the termination reason")
        if self.min_gap < 0.0:
            raise InvalidInputError("min_gap must be nonnegative")


def jerk_stats(controls: np.ndarray, dt: float) -> tuple[float, float]:
    """Mean absolute longitudinal and angular jerk of a control log.

    Longitudinal jerk is the first finite difference of commanded
    acceleration over dt; angular jerk is the second finite difference of
    the yaw rate over dt. Requires at least 3 samples.
    """
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 2 or controls.shape[1] != 2 or controls.shape[0] < 3:
        raise InvalidInputError("need a (>=3, 2) control log")
    if dt <= 0.0:
        raise InvalidInputError("dt must be positive")
    accel = controls[:, 0]
    yaw_rate = controls[:, 1]
    long_jerk = float(np.mean(np.abs(np.diff(accel)))) / dt
    ang_jerk = float(np.mean(np.abs(np.diff(yaw_rate, n=2)))) / (dt * dt)
    return long_jerk, ang_jerk


_METRICS = (
    ("completion_time", True),
    ("min_gap", False),
    ("mean_velocity", False),
    ("mean_abs_long_jerk", False),
    ("mean_abs_ang_jerk", False),
)


@dataclass(frozen=True)
class AggregateSummary:
    """Success rate plus mean/std rows for each metric of a result batch."""

    n_runs: int
    success_rate: float
    stats: dict[str, tuple[float, float]]
    termination_counts: dict[str, int]


def aggregate(results: list[RunResult]) -> AggregateSummary:
    """Batch summary. Success rate in percent; per-metric (mean, population
    std); time statistics over successful runs only."""
    if not results:
        raise InvalidInputError("results list is empty")
    n = len(results)
    successes = [r for r in results if r.success]
    stats: dict[str, tuple[float, float]] = {}
    for name, success_only in _METRICS:
        pool = successes if success_only else results
        values = np.array([getattr(r, name) for r in pool], dtype=float)
        values = values[np.isfinite(values)]
        if values.size:
            stats[name] = (float(values.mean()), float(values.std(ddof=0)))
        else:
            stats[name] = (math.nan, math.nan)
    counts: dict[str, int] = {}
    for r in results:
        counts[r.termination_reason] = counts.get(r.termination_reason, 0) + 1
    return AggregateSummary(
        n_runs=n,
        success_rate=100.0 * len(successes) / n,
        stats=stats,
        termination_counts=counts,
    )
