"""Batch location experiments with seeded truth and initial-guess samplers."""

from __future__ import annotations

import csv
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..afm_core import locate_afm
from ..errors import AfmError, ArgumentError
from ..propagator import Seismogram, forward_solve
from ..refine import CLASSES, classify, locate_afpm, locate_iterative
from ..results import LocationResult, SourceEstimate
from ..trace import NoiseSpec, TimeWindow, add_noise, select_window
from .presets import Setup

__all__ = [
    "METHODS",
    "ExperimentPlan",
    "ExperimentRecord",
    "observe",
    "pick_window",
    "run_location",
    "run_experiment",
    "summarize",
    "write_records",
    "read_records",
    "RECORD_COLUMNS",
]

METHODS = ("afm", "afpm", "iterative")

RECORD_COLUMNS = (
    "trial", "method", "truth_x", "truth_z", "truth_tau", "init_x", "init_z", "init_tau",
    "est_x", "est_z", "est_tau", "error_km", "error_s", "misfit_sum", "status",
    "classification", "solves", "solves_afm", "solves_iterate", "iterations", "note",
)


def _stream(master, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master), *keys])))


@dataclass(frozen=True)
class ExperimentPlan:
    """Trials of one locator on synthetic data.

    Truths and initial guesses are drawn uniformly from their boxes with a
    stream keyed by ``(seed, trial)``, so trial ``i`` is the same problem for
    every method.  Noise uses a per-trial seed derived the same way.
    """

    setup: Setup
    trials: int
    method: str
    seed: int
    truth_box: tuple
    truth_tau: tuple
    initial_box: tuple
    initial_tau: tuple
    noise_ratio: float = 0.0
    pos_tol: float = 1.0
    time_tol: float = 0.1

    def __post_init__(self):
        if self.trials < 1:
            raise ArgumentError("an experiment needs at least one trial")
        if self.method not in METHODS:
            raise ArgumentError(f"method must be one of {METHODS}")
        d = self.setup.cfg.domain
        for box in (self.truth_box, self.initial_box):
            if not (d.contains(box[0], box[2]) and d.contains(box[1], box[3])):
                raise ArgumentError(f"sampler box {box} is not inside the domain")
        for lo, hi in (self.truth_tau, self.initial_tau):
            if not 0 <= lo <= hi <= self.setup.cfg.T:
                raise ArgumentError("sampler time interval must lie inside [0, T]")

    @classmethod
    def from_setup(cls, setup: Setup, **overrides) -> "ExperimentPlan":
        c = setup.conf
        kw = dict(
            setup=setup,
            trials=c.int("experiment.trials"),
            method=c.str("experiment.method"),
            seed=c.int("experiment.seed"),
            truth_box=tuple(c.floats("experiment.truth_box", n=4)),
            truth_tau=tuple(c.floats("experiment.truth_tau", n=2)),
            initial_box=tuple(c.floats("experiment.initial_box", n=4)),
            initial_tau=tuple(c.floats("experiment.initial_tau", n=2)),
            noise_ratio=setup.noise.ratio,
            pos_tol=c.float("classify.pos_tol"),
            time_tol=c.float("classify.time_tol"),
        )
        kw.update(overrides)
        return cls(**kw)

    def draw(self, trial) -> tuple[SourceEstimate, SourceEstimate]:
        rng = _stream(self.seed, trial)
        u = rng.random(6)
        tb, ib = self.truth_box, self.initial_box

        def lerp(a, b, s):
            return a + (b - a) * s

        truth = SourceEstimate(
            (lerp(tb[0], tb[1], u[0]), lerp(tb[2], tb[3], u[1])),
            lerp(*self.truth_tau, u[2]), "truth")
        initial = SourceEstimate(
            (lerp(ib[0], ib[1], u[3]), lerp(ib[2], ib[3], u[4])),
            lerp(*self.initial_tau, u[5]), "initial")
        return truth, initial

    def noise_for(self, trial) -> NoiseSpec:
        seed = int(_stream(self.seed, trial, 1).integers(0, 2**62))
        return NoiseSpec(self.noise_ratio, seed)


@dataclass
class ExperimentRecord:
    trial: int
    method: str
    truth: SourceEstimate
    initial: SourceEstimate
    result: LocationResult | None
    classification: str
    note: str = ""
    wall_time: float = 0.0

    def row(self) -> dict:
        t, i, r = self.truth, self.initial, self.result
        row = {
            "trial": self.trial, "method": self.method,
            "truth_x": repr(t.xi[0]), "truth_z": repr(t.xi[1]), "truth_tau": repr(t.tau),
            "init_x": repr(i.xi[0]), "init_z": repr(i.xi[1]), "init_tau": repr(i.tau),
            "classification": self.classification, "note": self.note,
        }
        if r is None:
            row.update({k: "" for k in RECORD_COLUMNS if k not in row})
            row["status"] = "failed"
            return row
        e = r.estimate
        row.update({
            "est_x": repr(e.xi[0]), "est_z": repr(e.xi[1]), "est_tau": repr(e.tau),
            "error_km": repr(e.distance(t)), "error_s": repr(abs(e.tau - t.tau)),
            "misfit_sum": repr(r.misfit_sum), "status": r.status,
            "solves": r.cost.solves,
            "solves_afm": r.cost.stages.get("afm", 0),
            "solves_iterate": r.cost.stages.get("iterate", 0),
            "iterations": r.cost.iterations,
        })
        return row


def observe(setup: Setup, truth: SourceEstimate, noise: NoiseSpec | None = None) -> Seismogram:
    """Synthetic observed data for ``truth`` at every receiver (one solve)."""
    clean = forward_solve(setup.model, setup.src.at(truth.tau), truth.xi, setup.cfg, setup.recv)
    if noise is None or noise.ratio == 0:
        return clean
    return add_noise(clean, noise)


def pick_window(setup: Setup, observed: Seismogram) -> TimeWindow | None:
    """Window per the setup (computed from the observed trace), or ``None``."""
    w = setup.window
    if not w["enabled"] and not w["overrides"]:
        return None
    if w["enabled"]:
        win = select_window(observed, w["threshold"], w["pad"], setup.src.f0)
    else:
        win = TimeWindow.full(observed)
    for label, (t0, t1) in w["overrides"].items():
        win = win.with_override(label, t0, t1)
    return win


def run_location(setup: Setup, method: str, observed: Seismogram, initial: SourceEstimate,
                 window: TimeWindow | None = None, threads=None, grid=None) -> LocationResult:
    threads = setup.threads if threads is None else threads
    grid = setup.grid if grid is None else grid
    args = (observed, setup.model, setup.cfg, setup.recv)
    if method == "afm":
        return locate_afm(*args, grid, initial, setup.epsilon, setup.src, window,
                          stride=setup.stride, threads=threads)
    if method == "afpm":
        return locate_afpm(initial, grid, setup.iterate, *args, setup.src, setup.epsilon,
                           window, restarts=setup.restarts, stride=setup.stride,
                           threads=threads)
    if method == "iterative":
        return locate_iterative(initial, setup.iterate, *args, setup.src, window,
                                threads=threads)
    raise ArgumentError(f"unknown method {method!r}; choose from {METHODS}")


def _run_trial(plan: ExperimentPlan, trial: int) -> ExperimentRecord:
    truth, initial = plan.draw(trial)
    t0 = time.perf_counter()
    try:
        observed = observe(plan.setup, truth, plan.noise_for(trial))
        window = pick_window(plan.setup, observed)
        res = run_location(plan.setup, plan.method, observed, initial, window, threads=1)
        # surfaces are large and not part of the record
        res.surface = None
        res.stage_results = {}
        cls = classify(res, truth, plan.pos_tol, plan.time_tol)
        rec = ExperimentRecord(trial, plan.method, truth, initial, res, cls)
    except AfmError as exc:
        rec = ExperimentRecord(trial, plan.method, truth, initial, None, "diverge",
                               f"{type(exc).__name__}: {exc}")
    rec.wall_time = time.perf_counter() - t0
    return rec


def run_experiment(plan: ExperimentPlan, out_dir=None, threads=1, progress=None):
    """Run every trial; returns ``(records, summary)`` and optionally writes
    ``records.csv``, ``summary.csv`` and ``timing.csv`` into ``out_dir``.

    Trials may run concurrently; records are always ordered by trial index.
    """
    trials = range(plan.trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(lambda i: _run_trial(plan, i), trials))
    else:
        records = []
        for i in trials:
            records.append(_run_trial(plan, i))
            if progress is not None:
                progress(records[-1])
    rows = [r.row() for r in records]
    summary = summarize(rows)
    summary.update(_timing_stats(records))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_records(out / "records.csv", rows)
        _write_summary(out / "summary.csv", summarize(rows))
        with open(out / "timing.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "wall_time_s"])
            for r in records:
                w.writerow([r.trial, f"{r.wall_time:.3f}"])
    return records, summary


def write_records(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, RECORD_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)


def read_records(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _mean_sd(vals):
    if not vals:
        return math.nan, math.nan
    return statistics.fmean(vals), (statistics.pstdev(vals) if len(vals) > 1 else 0.0)


def summarize(rows) -> dict:
    """Counts per class and iteration/solve statistics, from record rows only."""
    out = {"trials": len(rows)}
    for c in CLASSES:
        out[c] = sum(1 for r in rows if r["classification"] == c)
    correct = [r for r in rows if r["classification"] == "correct"]
    for key, subset in (("correct", correct), ("all", rows)):
        its = [int(r["iterations"]) for r in subset if str(r["iterations"]) != ""]
        sol = [int(r["solves"]) for r in subset if str(r["solves"]) != ""]
        out[f"iterations_mean_{key}"], out[f"iterations_sd_{key}"] = _mean_sd(its)
        out[f"solves_mean_{key}"], out[f"solves_sd_{key}"] = _mean_sd(sol)
    errs = [float(r["error_km"]) for r in rows if str(r["error_km"]) != ""]
    out["error_km_mean"], out["error_km_sd"] = _mean_sd(errs)
    return out


def _timing_stats(records) -> dict:
    m, s = _mean_sd([r.wall_time for r in records])
    return {"wall_time_mean": m, "wall_time_sd": s}


def _write_summary(path, summary: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in summary.items():
            w.writerow([k, repr(v) if isinstance(v, float) else v])
