"""Result containers shared by the direct-search and iterative locators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .errors import ArgumentError

__all__ = [
    "TAGS",
    "SourceEstimate",
    "TrajectoryPoint",
    "CostReport",
    "LocationResult",
    "write_trajectory",
    "TRAJECTORY_COLUMNS",
]

TAGS = ("initial", "truth", "afm", "iterate")
TRAJECTORY_COLUMNS = ("stage", "iter", "xi_x", "xi_z", "tau", "misfit_sum", "error_km")


@dataclass(frozen=True)
class SourceEstimate:
    """Hypocentre ``xi = (x, z)`` in km and origin time ``tau`` in s."""

    xi: tuple
    tau: float
    tag: str = "initial"

    def __post_init__(self):
        xi = (float(self.xi[0]), float(self.xi[1]))
        if not all(math.isfinite(v) for v in (*xi, self.tau)):
            raise ArgumentError("source estimate must be finite")
        if self.tag not in TAGS:
            raise ArgumentError(f"unknown provenance tag {self.tag!r}")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "tau", float(self.tau))

    def retag(self, tag) -> "SourceEstimate":
        return SourceEstimate(self.xi, self.tau, tag)

    def distance(self, other: "SourceEstimate") -> float:
        return math.hypot(self.xi[0] - other.xi[0], self.xi[1] - other.xi[1])


@dataclass(frozen=True)
class TrajectoryPoint:
    stage: str
    iteration: int
    estimate: SourceEstimate
    misfit_sum: float


@dataclass
class CostReport:
    """PDE solve counts per stage, iteration count and wall time (s)."""

    stages: dict = field(default_factory=dict)
    iterations: int = 0
    wall_time: float = 0.0

    @property
    def solves(self) -> int:
        return sum(self.stages.values())

    def add(self, stage, n):
        self.stages[stage] = self.stages.get(stage, 0) + int(n)

    def merged(self, other: "CostReport") -> "CostReport":
        out = CostReport(dict(self.stages), self.iterations + other.iterations,
                         self.wall_time + other.wall_time)
        for k, v in other.stages.items():
            out.add(k, v)
        return out


@dataclass
class LocationResult:
    """Outcome of one location run.

    ``status`` is one of ``verified``, ``restart-needed`` (direct search),
    ``converged``, ``stalled``, ``max-iterations`` (iterative stage).
    """

    estimate: SourceEstimate
    trajectory: list
    status: str
    cost: CostReport
    misfit_sum: float
    verified: bool | None = None
    surface: object = None
    stage_results: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status in ("verified", "converged")


def write_trajectory(path, result: LocationResult, truth: SourceEstimate | None = None):
    """Trajectory CSV; ``error_km`` is the distance to ``truth`` (blank without it)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for p in result.trajectory:
            e = p.estimate
            err = "" if truth is None else repr(e.distance(truth))
            w.writerow([p.stage, p.iteration, repr(e.xi[0]), repr(e.xi[1]), repr(e.tau),
                        repr(p.misfit_sum), err])
