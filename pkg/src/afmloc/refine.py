"""Adjoint-gradient iterative location and the AFM-preprocessed pipeline."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .afm_core import SearchGrid, locate_afm
from .errors import ArgumentError
from .propagator import ReceiverArray, Seismogram, SimConfig, adjoint_solve, forward_solve
from .results import CostReport, LocationResult, SourceEstimate, TrajectoryPoint
from .source import RickerSource, ricker
from .trace import MisfitVector, TimeWindow, misfit, sum_abs_misfit

__all__ = [
    "IterateConfig",
    "Gradient",
    "location_gradient",
    "feasible_box",
    "locate_iterative",
    "locate_afpm",
    "classify",
    "CLASSES",
]

CLASSES = ("correct", "error", "diverge")


@dataclass(frozen=True)
class IterateConfig:
    """Quasi-Newton descent with Armijo backtracking in cell-scaled variables.

    Parameters
    ----------
    scale : tuple
        ``(km, km, s)`` sizes of one unit step along ``x``, ``z``, ``tau``
        (usually the search-grid cell).
    max_iterations : int
    initial_step : float
        Length of the first trial step, in scaled units.
    max_step : float
        Cap on any trial step length, in scaled units.
    backtrack : float
        Step reduction factor per backtrack, in ``(0, 1)``.
    armijo : float
        Sufficient-decrease constant.
    max_backtracks : int
    tol_km, tol_s : float
        Stop once an accepted update (or the smallest trial step) is below
        both tolerances.
    misfit_target : float
        Stop once the misfit sum falls to this value.
    """

    scale: tuple = (0.5, 0.5, 0.1)
    max_iterations: int = 30
    initial_step: float = 1.0
    max_step: float = 4.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 20
    tol_km: float = 0.005
    tol_s: float = 0.0005
    misfit_target: float = 1e-10

    def __post_init__(self):
        vals = (*self.scale, self.max_iterations, self.initial_step, self.max_step,
                self.armijo, self.max_backtracks, self.tol_km, self.tol_s, self.misfit_target)
        if len(self.scale) != 3 or not all(v > 0 for v in vals):
            raise ArgumentError("iteration parameters must all be positive")
        if not 0 < self.backtrack < 1:
            raise ArgumentError("backtracking factor must lie in (0, 1)")

    @classmethod
    def for_grid(cls, grid: SearchGrid, **kw) -> "IterateConfig":
        return cls(scale=(grid.hx, grid.hz, grid.sigma), **kw)


@dataclass(frozen=True)
class Gradient:
    """Derivatives of the misfit sum: ``g_xi`` in 1/km, ``g_tau`` in 1/s."""

    g_xi: tuple
    g_tau: float

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.g_xi[0], self.g_xi[1], self.g_tau])


def _gradient_from(m: MisfitVector, model, cfg, recv, est: SourceEstimate, src, threads=1):
    def one(i):
        k = m.labels[i]
        return adjoint_solve(model, m.residual[i], recv.position(k), cfg, xi=est.xi,
                             receiver=k)

    idx = range(len(m.labels))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            adj = list(ex.map(one, idx))
    else:
        adj = [one(i) for i in idx]
    t = cfg.t
    w_dt = np.full(cfg.nt, cfg.dt)
    w_dt[[0, -1]] *= 0.5
    f = ricker(src.at(est.tau), t) * w_dt
    # one-step centred difference: the exact derivative of the sampled
    # wavelet under a shift of the origin time
    dt = cfg.dt
    fp = (ricker(src.at(est.tau - dt), t) - ricker(src.at(est.tau + dt), t)) / (2 * dt) * w_dt
    g = np.zeros(3)
    for a in adj:
        g[0] -= f @ a.grad_xi[0]
        g[1] -= f @ a.grad_xi[1]
        g[2] += fp @ a.w_xi
    return Gradient((float(g[0]), float(g[1])), float(g[2]))


def location_gradient(model, observed: Seismogram, est: SourceEstimate, cfg: SimConfig,
                      recv: ReceiverArray, src: RickerSource,
                      window: TimeWindow | None = None, synthetic: Seismogram | None = None,
                      threads=1) -> Gradient:
    """Gradient of the misfit sum with respect to ``(xi, tau)``.

    Costs ``#R`` adjoint solves, plus one forward solve unless the synthetic
    seismogram at ``est`` is supplied.
    """
    if synthetic is None:
        synthetic = forward_solve(model, src.at(est.tau), est.xi, cfg, recv)
    m = misfit(observed, synthetic, window, labels=recv.active)
    return _gradient_from(m, model, cfg, recv, est, src, threads)


def feasible_box(cfg: SimConfig) -> np.ndarray:
    """Bounds ``[[x0, x1], [z0, z1], [t0, t1]]`` where a gradient can be evaluated.

    Keeps the source stencil and its one-cell difference probes off absorbing
    or reflecting edges, and the shallow probe below the free surface.
    """
    d = cfg.domain
    m = 4
    top = d.z_min + (d.dz if cfg.free_surface else m * d.dz)
    return np.array([
        [d.x_min + m * d.dx, d.x_max - m * d.dx],
        [top, d.z_max - m * d.dz],
        [0.0, cfg.T],
    ])


def locate_iterative(initial: SourceEstimate, it: IterateConfig, observed: Seismogram, model,
                     cfg: SimConfig, recv: ReceiverArray, src: RickerSource,
                     window: TimeWindow | None = None, synthetic: Seismogram | None = None,
                     stage="iterate", threads=1) -> LocationResult:
    """Projected BFGS descent on the misfit sum.

    The first step follows the negative gradient with length
    ``initial_step``; later steps use the BFGS inverse-Hessian estimate,
    falling back to the gradient whenever that is not a descent direction.

    Each iteration costs ``#R`` adjoint solves plus one forward solve per
    line-search trial; the accepted trial's forward solve is reused by the
    next iteration.  ``synthetic`` (the forward solve at ``initial``) can be
    passed in to save the first forward solve.
    """
    t_start = time.perf_counter()
    if not cfg.domain.contains(*initial.xi):
        raise ArgumentError("initial source lies outside the simulation domain")
    scale = np.asarray(it.scale, float)
    box = feasible_box(cfg)
    tol = np.array([it.tol_km, it.tol_km, it.tol_s]) / scale

    cost = CostReport()
    q0 = np.array([*initial.xi, initial.tau])
    q = np.clip(q0, box[:, 0], box[:, 1])
    est = SourceEstimate(tuple(q[:2]), q[2], "iterate")
    p = q / scale
    if synthetic is None or not np.array_equal(q, q0):
        synthetic = forward_solve(model, src.at(est.tau), est.xi, cfg, recv)
        cost.add(stage, 1)
    m = misfit(observed, synthetic, window, labels=recv.active)
    J = sum_abs_misfit(m)
    traj = [TrajectoryPoint(stage, 0, est, J)]

    status = "max-iterations"
    H = np.eye(3)
    prev_p = prev_g = None
    iterations = 0
    for k in range(1, it.max_iterations + 1):
        if J <= it.misfit_target:
            status = "converged"
            break
        grad = _gradient_from(m, model, cfg, recv, est, src, threads)
        cost.add(stage, len(m.labels))
        iterations = k
        gs = grad.vector * scale
        if not np.any(gs):
            status = "converged"
            break
        if prev_p is not None:
            H = _bfgs_update(H, p - prev_p, gs - prev_g)
        quasi = prev_p is not None and not np.array_equal(H, np.eye(3))
        while True:
            direction = -H @ gs if quasi else -gs
            if float(direction @ gs) >= 0:
                quasi, direction = False, -gs
            dnorm = float(np.linalg.norm(direction))
            if not quasi:
                direction *= it.initial_step / dnorm
            elif dnorm > it.max_step:
                direction *= it.max_step / dnorm
            trial_out = _line_search(p, direction, gs, J, it, scale, box, tol, observed,
                                     model, cfg, recv, src, window, cost, stage)
            if trial_out[0] or not quasi:
                break
            # the quasi-Newton step failed: retry along the gradient
            H, quasi = np.eye(3), False
        accepted, delta, trial, t_est, m_new, J_new = trial_out
        if not accepted:
            # a step shrunk below tolerance is convergence; running out of
            # backtracks is a stall
            status = "converged" if np.all(np.abs(delta) < tol) else "stalled"
            break
        prev_p, prev_g = p, gs
        p, est, m, J = trial, t_est, m_new, J_new
        traj.append(TrajectoryPoint(stage, k, est, J))
        if J <= it.misfit_target or np.all(np.abs(delta) < tol):
            status = "converged"
            break

    cost.iterations = iterations
    cost.wall_time = time.perf_counter() - t_start
    return LocationResult(est, traj, status, cost, J)


def _line_search(p, direction, gs, J, it, scale, box, tol, observed, model, cfg, recv, src,
                 window, cost, stage):
    """Armijo backtracking from ``p`` along ``direction`` (scaled units)."""
    step = 1.0
    for _ in range(it.max_backtracks + 1):
        tq = np.clip((p + step * direction) * scale, box[:, 0], box[:, 1])
        trial = tq / scale
        delta = trial - p
        if np.all(np.abs(delta) < tol):
            return False, delta, None, None, None, None
        t_est = SourceEstimate(tuple(tq[:2]), tq[2], "iterate")
        s_new = forward_solve(model, src.at(t_est.tau), t_est.xi, cfg, recv)
        cost.add(stage, 1)
        m_new = misfit(observed, s_new, window, labels=recv.active)
        J_new = sum_abs_misfit(m_new)
        if J_new <= J + it.armijo * float(gs @ delta):
            return True, delta, trial, t_est, m_new, J_new
        step *= it.backtrack
    return False, delta, None, None, None, None


def _bfgs_update(H, s, y):
    sy = float(s @ y)
    if sy <= 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
        return H
    if np.array_equal(H, np.eye(3)):
        H = np.eye(3) * (sy / float(y @ y))
    rho = 1.0 / sy
    V = np.eye(3) - rho * np.outer(s, y)
    return V @ H @ V.T + rho * np.outer(s, s)


def locate_afpm(initial: SourceEstimate, grid: SearchGrid, it: IterateConfig,
                observed: Seismogram, model, cfg: SimConfig, recv: ReceiverArray,
                src: RickerSource, epsilon, window: TimeWindow | None = None,
                restarts=0, stride=1, threads=1) -> LocationResult:
    """Direct search on ``grid``, verification, then iterative refinement.

    On a failed verification the direct search is repeated up to ``restarts``
    times with the search region widened to the whole usable domain and
    record, starting from the rejected estimate.
    """
    t_start = time.perf_counter()
    cost = CostReport()
    trajectory = []
    grids = [grid] + [_widened(grid, cfg)] * int(restarts)
    start = initial
    afm = None
    for g in grids:
        afm = locate_afm(observed, model, cfg, recv, g, start, epsilon, src, window,
                         stride=stride, threads=threads)
        cost = cost.merged(afm.cost)
        trajectory += afm.trajectory
        if afm.verified:
            break
        start = afm.estimate.retag("initial")
    if not afm.verified:
        cost.wall_time = time.perf_counter() - t_start
        return LocationResult(afm.estimate, trajectory, "restart-needed", cost,
                              afm.misfit_sum, False, afm.surface, {"afm": afm})

    synthetic = afm.stage_results["verification"].synthetic
    itr = locate_iterative(afm.estimate, it, observed, model, cfg, recv, src, window,
                           synthetic=synthetic, threads=threads)
    cost = cost.merged(itr.cost)
    cost.iterations = itr.cost.iterations
    cost.wall_time = time.perf_counter() - t_start
    return LocationResult(itr.estimate, trajectory + itr.trajectory, itr.status, cost,
                          itr.misfit_sum, True, afm.surface, {"afm": afm, "iterate": itr})


def _widened(grid: SearchGrid, cfg: SimConfig) -> SearchGrid:
    box = feasible_box(cfg)

    def snap(lo, hi, h, origin):
        a = origin + math.ceil((lo - origin) / h - 1e-9) * h
        b = origin + math.floor((hi - origin) / h + 1e-9) * h
        return a, b

    x0, x1 = snap(*box[0], grid.hx, grid.x_min)
    z0, z1 = snap(max(box[1][0], 3 * cfg.domain.dz), box[1][1], grid.hz, grid.z_min)
    t0, t1 = snap(0.0, cfg.T, grid.sigma, grid.t_min)
    return replace(grid, x_min=x0, x_max=x1, z_min=z0, z_max=z1, t_min=t0, t_max=t1)


def classify(result: LocationResult, truth: SourceEstimate, pos_tol=1.0, time_tol=0.1) -> str:
    """``correct`` if within ``pos_tol`` km and ``time_tol`` s of the truth,
    ``error`` if the run terminated by tolerance elsewhere, else ``diverge``."""
    close = (result.estimate.distance(truth) < pos_tol
             and abs(result.estimate.tau - truth.tau) < time_tol)
    if not result.converged:
        return "diverge"
    return "correct" if close else "error"
