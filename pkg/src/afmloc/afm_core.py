"""Auxiliary functions, the least-squares surface and direct-search location.

Given a trial source ``(xi, tau)``, one forward solve and one adjoint solve per
active receiver give, for every search point ``(zeta, nu)``::

    Xi_r(zeta, nu) = 2 chi_r(xi, tau)
                     - [ int f(t - nu) w_r(zeta, t) dt - int f(t - tau) w_r(xi, t) dt ]

which vanishes at the true source.  The location estimate minimizes
``Gamma = sum_r Xi_r**2`` over the search grid and is accepted only if the
misfit at the estimate falls below a tolerance.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConsistencyError
from .media import Domain2D
from .propagator import (
    AdjointSamples,
    ReceiverArray,
    Seismogram,
    SimConfig,
    adjoint_solve,
    forward_solve,
)
from .results import CostReport, LocationResult, SourceEstimate, TrajectoryPoint
from .source import RickerSource, ricker
from .trace import MisfitVector, TimeWindow, misfit, sum_abs_misfit

__all__ = [
    "SearchGrid",
    "AuxiliarySurface",
    "correlate_with_ricker",
    "correlation_matrix",
    "build_surface",
    "SurfaceBuilder",
    "argmin_surface",
    "verify",
    "Verification",
    "locate_afm",
    "default_epsilon",
    "write_gamma_csv",
    "gamma_slices",
    "local_minima_gap",
]

SUPPORT_PERIODS = 3.0  # Ricker support half-width in units of 1/f0


def _axis(lo, hi, h, name):
    if not (h > 0 and math.isfinite(h)):
        raise ArgumentError(f"{name} spacing must be positive")
    if not hi >= lo:
        raise ArgumentError(f"{name} bounds must satisfy min <= max")
    steps = (hi - lo) / h
    n = int(round(steps))
    if abs(steps - n) > 1e-6:
        raise ArgumentError(f"{name} range {hi - lo} is not a multiple of the spacing {h}")
    return lo + h * np.arange(n + 1)


@dataclass(frozen=True)
class SearchGrid:
    """Uniform search grid over ``Omega_s x I_s``, endpoints included.

    Nodes are ordered z-major: node ``j = iz * nx + ix``.  Surfaces have shape
    ``(n_nu, nz, nx)``.
    """

    x_min: float
    x_max: float
    z_min: float
    z_max: float
    hx: float
    hz: float
    t_min: float
    t_max: float
    sigma: float

    def __post_init__(self):
        if min(self.shape) < 1:
            raise ArgumentError("search grid is empty")

    @property
    def xs(self) -> np.ndarray:
        return _axis(self.x_min, self.x_max, self.hx, "x")

    @property
    def zs(self) -> np.ndarray:
        return _axis(self.z_min, self.z_max, self.hz, "z")

    @property
    def nus(self) -> np.ndarray:
        return _axis(self.t_min, self.t_max, self.sigma, "nu")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nus.size, self.zs.size, self.xs.size)

    @property
    def nodes(self) -> np.ndarray:
        zz, xx = np.meshgrid(self.zs, self.xs, indexing="ij")
        return np.column_stack([xx.ravel(), zz.ravel()])

    def check_inside(self, domain: Domain2D, T: float):
        tol = 1e-9
        if not (domain.contains(self.x_min, self.z_min, tol)
                and domain.contains(self.x_max, self.z_max, tol)):
            raise ArgumentError("search region must lie inside the simulation domain")
        if self.t_min < -tol or self.t_max > T + tol:
            raise ArgumentError("search time interval must lie inside [0, T]")

    def nearest(self, xi, tau) -> tuple[int, int, int]:
        """Index ``(inu, iz, ix)`` of the node nearest to ``(xi, tau)``."""
        ix = int(np.argmin(np.abs(self.xs - xi[0])))
        iz = int(np.argmin(np.abs(self.zs - xi[1])))
        inu = int(np.argmin(np.abs(self.nus - tau)))
        return inu, iz, ix

    def point(self, index) -> tuple[tuple[float, float], float]:
        inu, iz, ix = index
        return (float(self.xs[ix]), float(self.zs[iz])), float(self.nus[inu])

    def cell_offsets(self, xi, tau, ref_xi, ref_tau) -> tuple[float, float, float]:
        """Absolute offsets in units of ``(hx, hz, sigma)``."""
        return (abs(xi[0] - ref_xi[0]) / self.hx, abs(xi[1] - ref_xi[1]) / self.hz,
                abs(tau - ref_tau) / self.sigma)


def correlation_matrix(src: RickerSource, nus, dt, ns) -> np.ndarray:
    """Matrix ``F`` with ``(w @ F.T)[j, m] = int f(t - nu_m) w_j(t) dt``.

    Each row holds the trapezoidal weights on ``t_n = n dt`` over the wavelet
    support ``[nu - 3/f0, nu + 3/f0]`` (clipped to the record) times the
    wavelet.
    """
    t = dt * np.arange(ns)
    T = t[-1]
    half = SUPPORT_PERIODS / src.f0
    F = np.zeros((len(nus), ns))
    for m, nu in enumerate(nus):
        lo = max(0.0, nu - half)
        hi = min(T, nu + half)
        i0 = max(0, math.ceil(lo / dt - 1e-9))
        i1 = min(ns - 1, math.floor(hi / dt + 1e-9))
        if i1 <= i0:
            continue
        w = np.full(i1 - i0 + 1, dt)
        w[0] = w[-1] = 0.5 * dt
        F[m, i0 : i1 + 1] = w * ricker(src.at(nu), t[i0 : i1 + 1])
    return F


def correlate_with_ricker(w_trace, src: RickerSource, nus, dt) -> np.ndarray:
    """``int f(t - nu) w(t) dt`` for every ``nu`` (trapezoidal, wavelet support only).

    ``w_trace`` may be 1-D (one node) or 2-D (nodes x samples).
    """
    w = np.asarray(w_trace, dtype=float)
    F = correlation_matrix(src, np.atleast_1d(np.asarray(nus, float)), dt, w.shape[-1])
    return w @ F.T


@dataclass(frozen=True, eq=False)
class AuxiliarySurface:
    """Auxiliary functions on a search grid.

    Attributes
    ----------
    xi_r : ndarray, shape (n_receivers, n_nu, nz, nx)
    gamma : ndarray, shape (n_nu, nz, nx)
        ``sum_r xi_r**2``, accumulated in receiver order.
    const : ndarray
        ``int f(t - tau) w_r(xi, t) dt`` per receiver.
    two_chi : ndarray
        ``2 chi_r(xi, tau)`` per receiver.
    """

    grid: SearchGrid
    labels: tuple
    xi_r: np.ndarray
    gamma: np.ndarray
    const: np.ndarray
    two_chi: np.ndarray
    initial: SourceEstimate

    def value(self, xi, tau) -> float:
        return float(self.gamma[self.grid.nearest(xi, tau)])


class SurfaceBuilder:
    """Accumulates ``Xi_r`` and ``Gamma`` one receiver at a time.

    Lets a caller drop each receiver's adjoint samples as soon as they have
    been folded in.
    """

    def __init__(self, chi: MisfitVector, src: RickerSource, initial: SourceEstimate,
                 grid: SearchGrid):
        self.chi = chi
        self.src = src
        self.initial = initial
        self.grid = grid
        self._nodes = grid.nodes
        n = len(chi.labels)
        self.xi_r = np.empty((n, *grid.shape))
        self.const = np.empty(n)
        self._F = None
        self._axis = None
        self._next = 0

    def add(self, a: AdjointSamples):
        i = self._next
        labels = self.chi.labels
        if i >= len(labels) or a.receiver != labels[i]:
            raise ConsistencyError("adjoint samples must match the misfit receivers in order")
        if a.nodes.shape != self._nodes.shape or not np.array_equal(a.nodes, self._nodes):
            raise ConsistencyError(f"adjoint r{a.receiver}: nodes differ from the search grid")
        xi0 = self.initial.xi
        if a.w_xi is None or a.xi is None or (
            abs(a.xi[0] - xi0[0]) > 1e-12 or abs(a.xi[1] - xi0[1]) > 1e-12
        ):
            raise ConsistencyError(f"adjoint r{a.receiver} was not sampled at the trial source")
        if self._F is None:
            self._F = correlation_matrix(self.src, self.grid.nus, a.dt, a.nt)
            self._axis = (a.dt, a.nt)
        elif (a.dt, a.nt) != self._axis:
            raise ConsistencyError("adjoint samples have different time axes")
        corr = a.values @ self._F.T  # (nodes, n_nu)
        k = float(correlate_with_ricker(a.w_xi, self.src, [self.initial.tau], a.dt)[0])
        self.const[i] = k
        self.xi_r[i] = (2.0 * self.chi.chi[i] - (corr - k)).T.reshape(self.grid.shape)
        self._next += 1

    def finish(self) -> AuxiliarySurface:
        if self._next != len(self.chi.labels):
            raise ConsistencyError("not every receiver has been added")
        gamma = np.zeros(self.grid.shape)
        for i in range(self._next):
            gamma += self.xi_r[i] ** 2
        return AuxiliarySurface(self.grid, tuple(self.chi.labels), self.xi_r, gamma,
                                self.const, 2.0 * self.chi.chi.copy(), self.initial)


def build_surface(chi: MisfitVector, adjoints, src: RickerSource, initial: SourceEstimate,
                  grid: SearchGrid) -> AuxiliarySurface:
    """Assemble ``Xi_r`` and ``Gamma`` from adjoint samples (no PDE solves)."""
    adjoints = list(adjoints)
    if len(adjoints) != len(chi.labels):
        raise ConsistencyError("one adjoint per misfit receiver required")
    b = SurfaceBuilder(chi, src, initial, grid)
    for a in adjoints:
        b.add(a)
    return b.finish()


def argmin_surface(surface: AuxiliarySurface) -> SourceEstimate:
    """Grid node of smallest Gamma; ties go to the smallest nu, then z, then x."""
    flat = int(np.argmin(surface.gamma))
    idx = np.unravel_index(flat, surface.gamma.shape)
    xi, nu = surface.grid.point(idx)
    return SourceEstimate(xi, nu, "afm")


def local_minima_gap(gamma) -> float:
    """Gamma difference between the two lowest strict-or-flat local minima.

    Neighbours are the six face-adjacent grid nodes; returns ``inf`` when the
    surface has a single local minimum.
    """
    g = np.asarray(gamma, dtype=float)
    p = np.pad(g, 1, mode="constant", constant_values=np.inf)
    c = p[1:-1, 1:-1, 1:-1]
    is_min = np.ones(g.shape, bool)
    for ax in range(3):
        for sh in (-1, 1):
            nb = np.roll(p, sh, axis=ax)[1:-1, 1:-1, 1:-1]
            is_min &= c <= nb
    vals = np.sort(g[is_min])
    return float(vals[1] - vals[0]) if vals.size > 1 else math.inf


def default_epsilon(n_receivers, noisy=False, rate=0.1, noisy_rate=0.5) -> float:
    """Verification tolerance on the misfit sum: a per-receiver rate times ``#R``."""
    return (noisy_rate if noisy else rate) * n_receivers


@dataclass(frozen=True, eq=False)
class Verification:
    passed: bool
    misfit: MisfitVector
    synthetic: Seismogram

    @property
    def total(self) -> float:
        return sum_abs_misfit(self.misfit)


def verify(candidate: SourceEstimate, observed: Seismogram, model, cfg: SimConfig,
           recv: ReceiverArray, src: RickerSource, epsilon, window: TimeWindow | None = None
           ) -> Verification:
    """One forward solve at ``candidate``; passes iff the misfit sum is below ``epsilon``."""
    if not cfg.domain.contains(*candidate.xi):
        raise ArgumentError("candidate lies outside the simulation domain")
    s = forward_solve(model, src.at(candidate.tau), candidate.xi, cfg, recv)
    m = misfit(observed, s, window, labels=recv.active)
    return Verification(sum_abs_misfit(m) < epsilon, m, s)


def _fold_adjoints(builder: SurfaceBuilder, model, cfg, recv, m: MisfitVector, stride,
                  threads):
    nodes = builder.grid.nodes
    xi = builder.initial.xi

    def one(i):
        k = m.labels[i]
        return adjoint_solve(model, m.residual[i], recv.position(k), cfg,
                             search_nodes=nodes, xi=xi, stride=stride, receiver=k)

    idx = range(len(m.labels))
    if threads > 1:
        # bounded batches keep at most `threads` sample sets alive
        with ThreadPoolExecutor(max_workers=threads) as ex:
            for lo in range(0, len(idx), threads):
                for a in ex.map(one, idx[lo : lo + threads]):
                    builder.add(a)
    else:
        for i in idx:
            builder.add(one(i))


def locate_afm(observed: Seismogram, model, cfg: SimConfig, recv: ReceiverArray,
               grid: SearchGrid, initial: SourceEstimate, epsilon, src: RickerSource,
               window: TimeWindow | None = None, stride=1, threads=1) -> LocationResult:
    """Direct-search location from one trial source; costs ``#R + 2`` PDE solves.

    A failed verification is reported through ``status = 'restart-needed'``.
    """
    t_start = time.perf_counter()
    grid.check_inside(cfg.domain, cfg.T)
    initial = initial.retag("initial")
    cost = CostReport()

    s = forward_solve(model, src.at(initial.tau), initial.xi, cfg, recv)
    m = misfit(observed, s, window, labels=recv.active)
    builder = SurfaceBuilder(m, src, initial, grid)
    _fold_adjoints(builder, model, cfg, recv, m, stride, threads)
    cost.add("afm", 1 + len(m.labels))
    surface = builder.finish()
    est = argmin_surface(surface)
    ver = verify(est, observed, model, cfg, recv, src, epsilon, window)
    cost.add("afm", 1)
    cost.wall_time = time.perf_counter() - t_start

    traj = [
        TrajectoryPoint("afm", 0, initial, sum_abs_misfit(m)),
        TrajectoryPoint("afm", 1, est, ver.total),
    ]
    return LocationResult(
        estimate=est,
        trajectory=traj,
        status="verified" if ver.passed else "restart-needed",
        cost=cost,
        misfit_sum=ver.total,
        verified=ver.passed,
        surface=surface,
        stage_results={"verification": ver},
    )


def write_gamma_csv(path, surface: AuxiliarySurface):
    """Rows ``zeta_x,zeta_z,nu,gamma`` in scan order (nu, then z, then x)."""
    g = surface.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zeta_x", "zeta_z", "nu", "gamma"])
        for inu, nu in enumerate(g.nus):
            for iz, z in enumerate(g.zs):
                for ix, x in enumerate(g.xs):
                    w.writerow([f"{x:.17g}", f"{z:.17g}", f"{nu:.17g}",
                                f"{surface.gamma[inu, iz, ix]:.17g}"])


def gamma_slices(surface: AuxiliarySurface, xi=None, tau=None, half_width=None):
    """Three cross-sections of Gamma through the node nearest ``(xi, tau)``.

    Returns a dict with ``"xz"`` (rows z, columns x, at fixed nu), ``"nux"``
    (rows nu, columns x, at fixed z) and ``"nuz"`` (rows nu, columns z, at
    fixed x), each a dict holding ``values`` and the two axes.  The default
    point is the argmin.  With ``half_width`` (nodes) the slices are cropped
    to a zoom window around the point.
    """
    g = surface.grid
    if xi is None:
        inu, iz, ix = np.unravel_index(int(np.argmin(surface.gamma)), surface.gamma.shape)
    else:
        inu, iz, ix = g.nearest(xi, surface.initial.tau if tau is None else tau)
    G = surface.gamma
    xs, zs, nus = g.xs, g.zs, g.nus

    def crop(n, i):
        if half_width is None:
            return slice(0, n)
        return slice(max(0, i - half_width), min(n, i + half_width + 1))

    sx, sz, sn = crop(xs.size, ix), crop(zs.size, iz), crop(nus.size, inu)
    return {
        "xz": {"values": G[inu, sz, sx], "rows": zs[sz], "cols": xs[sx],
               "fixed": ("nu", float(nus[inu]))},
        "nux": {"values": G[sn, iz, sx], "rows": nus[sn], "cols": xs[sx],
                "fixed": ("zeta_z", float(zs[iz]))},
        "nuz": {"values": G[sn, sz, ix], "rows": nus[sn], "cols": zs[sz],
                "fixed": ("zeta_x", float(xs[ix]))},
    }
