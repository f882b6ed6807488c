"""Finite-difference time-domain solver for the 2-D acoustic wave equation.

The scheme is leapfrog in time and fourth order in space, written in flux
form ``div(c^2 grad u)`` with ``c^2`` averaged onto half nodes.  Neumann edges
(free surface or reflecting) use mirror ghost nodes; absorbing edges get a
complex-frequency-shifted convolutional PML in an extra pad of cells.

With mirror ghosts the spatial operator is symmetric in the trapezoidal inner
product, and point sampling uses the same quadrature weights, so the adjoint
solve (a forward solve of the time-reversed residual) is the exact transpose
of the forward solve when no PML is present.
"""

from __future__ import annotations

import functools
import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .errors import (
    ArgumentError,
    ConfigError,
    ConsistencyError,
    NumericalBlowupError,
)
from .media import Domain2D, rasterize
from .source import PointStencil, RickerSource, delta_weights_2d, ricker

__all__ = [
    "C_SCHEME",
    "EDGE_KINDS",
    "SimConfig",
    "ReceiverArray",
    "Seismogram",
    "AdjointSamples",
    "FieldSnapshot",
    "forward_solve",
    "adjoint_solve",
    "simulate",
    "energy",
    "solve_counter",
    "reset_solve_counter",
    "count_solves",
    "stable_dt",
]

# leapfrog + 4th-order staggered stencil: c dt sqrt(1/dx^2 + 1/dz^2) <= 6/7
C_SCHEME = 6.0 / 7.0
EDGE_KINDS = ("free_surface", "pml", "reflecting")
_G = K.GHOST


def stable_dt(domain: Domain2D, c_max, cfl_safety=0.8):
    """Largest time step allowed by ``cfl_safety`` for speeds up to ``c_max``."""
    return cfl_safety * C_SCHEME / (c_max * math.hypot(1 / domain.dx, 1 / domain.dz))


@dataclass(frozen=True)
class SimConfig:
    """Time axis, boundary treatment and PML parameters of a simulation.

    Parameters
    ----------
    domain : Domain2D
        Physical grid. PML cells are added outside it.
    dt : float
        Time step in s.
    nt : int
        Number of time samples; the record spans ``T = (nt - 1) * dt``.
    top, bottom, left, right : str
        Edge kinds, one of ``EDGE_KINDS``.  Only the top edge may be a
        free surface.
    pml_width : int
        PML thickness in cells.
    pml_reflection : float
        Theoretical normal-incidence reflection coefficient of the PML.
    pml_frequency : float
        Frequency (Hz) setting the CFS shift ``alpha_max = pi * f``.
    cfl_safety : float
        Fraction of the stability limit ``dt`` must stay within.
    """

    domain: Domain2D
    dt: float
    nt: int
    top: str = "free_surface"
    bottom: str = "pml"
    left: str = "pml"
    right: str = "pml"
    pml_width: int = 20
    pml_reflection: float = 1e-4
    pml_frequency: float = 2.0
    cfl_safety: float = 0.8

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive")
        if int(self.nt) != self.nt or self.nt < 2:
            raise ConfigError("nt must be an integer >= 2")
        for name in ("top", "bottom", "left", "right"):
            kind = getattr(self, name)
            if kind not in EDGE_KINDS:
                raise ConfigError(f"{name} edge: unknown kind {kind!r}")
            if kind == "free_surface" and name != "top":
                raise ConfigError("only the top edge can be a free surface")
        if not 0 < self.cfl_safety < 1:
            raise ConfigError("cfl_safety must lie in (0, 1)")
        if self.pml_width < 1 and "pml" in self.edges:
            raise ConfigError("pml_width must be at least one cell")
        if not 0 < self.pml_reflection < 1:
            raise ConfigError("pml_reflection must lie in (0, 1)")
        if self.pml_frequency < 0:
            raise ConfigError("pml_frequency must be non-negative")

    @classmethod
    def auto(cls, domain, c_max, T, cfl_safety=0.8, **kwargs) -> "SimConfig":
        """Config spanning ``[0, T]`` with the largest stable step under ``cfl_safety``."""
        if not T > 0:
            raise ConfigError("record length T must be positive")
        dt = stable_dt(domain, c_max, cfl_safety)
        nt = int(math.ceil(T / dt - 1e-9)) + 1
        return cls(domain, T / (nt - 1), nt, cfl_safety=cfl_safety, **kwargs)

    @property
    def edges(self) -> tuple[str, str, str, str]:
        return (self.top, self.bottom, self.left, self.right)

    @property
    def T(self) -> float:
        return (self.nt - 1) * self.dt

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.nt)

    @property
    def free_surface(self) -> bool:
        return self.top == "free_surface"

    def pads(self) -> tuple[int, int, int, int]:
        """PML cells added on (top, bottom, left, right)."""
        return tuple(self.pml_width if e == "pml" else 0 for e in self.edges)

    def check_cfl(self, c_max):
        d = self.domain
        courant = c_max * self.dt * math.hypot(1 / d.dx, 1 / d.dz)
        if courant > self.cfl_safety * C_SCHEME * (1 + 1e-12):
            raise ConfigError(
                f"CFL violated: c_max*dt*sqrt(1/dx^2+1/dz^2) = {courant:.4g} "
                f"> {self.cfl_safety} * {C_SCHEME:.4g}"
            )


@dataclass(frozen=True)
class ReceiverArray:
    """Receiver positions ``(x, z)`` in km and the 1-based labels used for inversion."""

    positions: tuple
    active: tuple = None

    def __post_init__(self):
        pos = tuple((float(x), float(z)) for x, z in self.positions)
        if not pos:
            raise ArgumentError("receiver array is empty")
        object.__setattr__(self, "positions", pos)
        active = tuple(range(1, len(pos) + 1)) if self.active is None else self.active
        active = tuple(sorted(int(a) for a in active))
        if not active:
            raise ArgumentError("active receiver subset is empty")
        if len(set(active)) != len(active) or active[0] < 1 or active[-1] > len(pos):
            raise ArgumentError(f"active labels must be distinct in 1..{len(pos)}")
        object.__setattr__(self, "active", active)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.positions) + 1))

    def position(self, label) -> tuple[float, float]:
        return self.positions[label - 1]

    def with_active(self, labels) -> "ReceiverArray":
        return ReceiverArray(self.positions, tuple(labels))

    def check_inside(self, domain: Domain2D):
        for k, (x, z) in enumerate(self.positions, 1):
            if not domain.contains(x, z):
                raise ArgumentError(f"receiver r{k} at ({x}, {z}) lies outside the domain")


@dataclass(frozen=True, eq=False)
class Seismogram:
    """Traces sampled on ``t_n = n * dt``; ``data`` has shape ``(n_receivers, nt)``."""

    dt: float
    data: np.ndarray
    labels: tuple = None

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=float))
        labels = tuple(range(1, data.shape[0] + 1)) if self.labels is None else self.labels
        labels = tuple(int(v) for v in labels)
        if len(labels) != data.shape[0]:
            raise ArgumentError("one label per trace required")
        if data.shape[1] < 2:
            raise ArgumentError("a seismogram needs at least two samples")
        if not np.all(np.isfinite(data)):
            raise ArgumentError("seismogram contains non-finite samples")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)

    @property
    def nt(self) -> int:
        return self.data.shape[1]

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.nt)

    @property
    def T(self) -> float:
        return (self.nt - 1) * self.dt

    def trace(self, label) -> np.ndarray:
        try:
            return self.data[self.labels.index(label)]
        except ValueError:
            raise ArgumentError(f"no trace for receiver r{label}") from None

    def select(self, labels) -> "Seismogram":
        return Seismogram(self.dt, np.array([self.trace(k) for k in labels]), tuple(labels))

    def check_compatible(self, other: "Seismogram"):
        if self.nt != other.nt or not math.isclose(self.dt, other.dt, rel_tol=1e-9):
            raise ConsistencyError(
                f"time axes differ: (dt={self.dt}, nt={self.nt}) vs "
                f"(dt={other.dt}, nt={other.nt})"
            )

    def to_csv(self, path):
        header = ",".join(["t"] + [f"r{k}" for k in self.labels])
        table = np.column_stack([self.t, self.data.T])
        np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")

    @classmethod
    def from_csv(cls, path) -> "Seismogram":
        path = Path(path)
        with path.open() as fh:
            header = fh.readline().strip().split(",")
        if len(header) < 2 or header[0] != "t" or not all(
            h.startswith("r") and h[1:].isdigit() for h in header[1:]
        ):
            raise ArgumentError(f"{path}: expected a header 't,r1,r2,...'")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = table[:, 0]
        if t.size < 2:
            raise ArgumentError(f"{path}: need at least two time samples")
        dt = (t[-1] - t[0]) / (t.size - 1)
        if not np.allclose(np.diff(t), dt, rtol=1e-6, atol=0):
            raise ArgumentError(f"{path}: time column is not uniformly spaced")
        labels = tuple(int(h[1:]) for h in header[1:])
        return cls(float(dt), table[:, 1:].T.copy(), labels)


@dataclass(frozen=True, eq=False)
class AdjointSamples:
    """Adjoint field of one receiver sampled through time.

    Attributes
    ----------
    receiver : int
        Receiver label driving the adjoint solve.
    nodes : ndarray, shape (n_nodes, 2)
        Search-grid points ``zeta_j``.
    dt : float
        Sample spacing (solver step times the stride).
    values : ndarray, shape (n_nodes, n_samples)
        ``w_r(zeta_j, t_n)``.
    xi : tuple or None
        Designated point where ``w_xi`` and ``grad_xi`` are recorded.
    w_xi : ndarray, shape (n_samples,)
    grad_xi : ndarray, shape (2, n_samples)
        ``(dw/dx, dw/dz)`` at ``xi`` from centred differences of gathered values.
    stride : int
        Solver steps per stored sample.
    """

    receiver: int
    nodes: np.ndarray
    dt: float
    values: np.ndarray
    xi: tuple = None
    w_xi: np.ndarray = None
    grad_xi: np.ndarray = None
    stride: int = 1

    @property
    def nt(self) -> int:
        return self.values.shape[1] if self.values.size else (
            0 if self.w_xi is None else self.w_xi.size
        )

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.nt)


@dataclass(frozen=True, eq=False)
class FieldSnapshot:
    """Physical-domain field at two consecutive steps ``n`` and ``n + 1``."""

    step: int
    dt: float
    prev: np.ndarray
    cur: np.ndarray


# --------------------------------------------------------------------------
# solve counter


class _Counter:
    def __init__(self):
        self._lock = threading.Lock()
        self._n = 0

    def add(self, k=1):
        with self._lock:
            self._n += k

    def reset(self):
        with self._lock:
            self._n = 0

    @property
    def value(self):
        with self._lock:
            return self._n


_COUNTER = _Counter()


def solve_counter() -> int:
    """Number of PDE solves performed since the last reset."""
    return _COUNTER.value


def reset_solve_counter():
    _COUNTER.reset()


@dataclass
class _SolveTally:
    start: int
    stop: int = None

    @property
    def count(self) -> int:
        return (solve_counter() if self.stop is None else self.stop) - self.start


@contextmanager
def count_solves():
    """Context manager whose ``.count`` is the number of solves run inside it."""
    tally = _SolveTally(solve_counter())
    try:
        yield tally
    finally:
        tally.stop = solve_counter()


# --------------------------------------------------------------------------
# grid preparation


@dataclass(frozen=True, eq=False)
class _Prepared:
    cfg: SimConfig
    c_max: float
    pads: tuple
    shape_ext: tuple
    c2x: np.ndarray
    c2z: np.ndarray
    coeff: tuple = field(repr=False)


def _pml_profile(n, lo, hi, dt, width_km, c_max, R, f_shift):
    """CPML ``(a, b)`` on half nodes (ghost-extended index) and on nodes."""

    def ratio(p):
        r = np.zeros_like(p)
        if lo:
            r = np.where(p < lo, (lo - p) / lo, r)
        if hi:
            edge = n - 1 - hi
            r = np.where(p > edge, (p - edge) / hi, r)
        return np.clip(r, 0.0, 1.0)

    def coeffs(r):
        d0 = 3.0 * c_max * math.log(1.0 / R) / (2.0 * width_km)
        d = d0 * r * r
        alpha = math.pi * f_shift * (1.0 - r)
        b = np.exp(-(d + alpha) * dt)
        with np.errstate(invalid="ignore", divide="ignore"):
            a = np.where(d > 0, d * (b - 1.0) / (d + alpha), 0.0)
        return np.ascontiguousarray(a), np.ascontiguousarray(b)

    half = np.arange(n + 2 * _G, dtype=float) - _G + 0.5
    node = np.arange(n, dtype=float)
    return coeffs(ratio(half)) + coeffs(ratio(node))


@functools.lru_cache(maxsize=8)
def _prepare(model, cfg: SimConfig) -> _Prepared:
    raster = rasterize(model, cfg.domain)
    cfg.check_cfl(raster.vmax)
    pt, pb, pl, pr = cfg.pads()
    c2 = np.pad(raster.values**2, ((pt, pb), (pl, pr)), mode="edge")
    nz, nx = c2.shape
    c2e = np.pad(c2, _G, mode="reflect")
    c2x = np.zeros((nz, nx + 2 * _G))
    c2x[:, :-1] = 0.5 * (c2e[_G:-_G, :-1] + c2e[_G:-_G, 1:])
    c2z = np.zeros((nz + 2 * _G, nx))
    c2z[:-1, :] = 0.5 * (c2e[:-1, _G:-_G] + c2e[1:, _G:-_G])

    d = cfg.domain
    w = cfg.pml_width
    axh, bxh, axn, bxn = _pml_profile(
        nx, pl, pr, cfg.dt, w * d.dx, raster.vmax, cfg.pml_reflection, cfg.pml_frequency
    )
    azh, bzh, azn, bzn = _pml_profile(
        nz, pt, pb, cfg.dt, w * d.dz, raster.vmax, cfg.pml_reflection, cfg.pml_frequency
    )
    for arr in (c2x, c2z, axh, bxh, axn, bxn, azh, bzh, azn, bzn):
        arr.setflags(write=False)
    return _Prepared(
        cfg,
        raster.vmax,
        (pt, pb, pl, pr),
        (nz + 2 * _G, nx + 2 * _G),
        c2x,
        c2z,
        (axh, bxh, axn, bxn, azh, bzh, azn, bzn),
    )


def _stencil(point, cfg: SimConfig) -> PointStencil:
    return delta_weights_2d(point, cfg.domain, free_surface=cfg.free_surface)


def _flat(st: PointStencil, prep: _Prepared) -> np.ndarray:
    pt, _, pl, _ = prep.pads
    nxe = prep.shape_ext[1]
    return ((st.iz + pt + _G) * nxe + (st.ix + pl + _G)).astype(np.int64)


def _probe_csr(points, prep: _Prepared):
    ptr = [0]
    idx = []
    wts = []
    for p in points:
        st = _stencil(p, prep.cfg)
        idx.append(_flat(st, prep))
        wts.append(st.gather_weights)
        ptr.append(ptr[-1] + st.iz.size)
    if not idx:
        return np.zeros(1, np.int64), np.zeros(0, np.int64), np.zeros(0)
    return np.array(ptr, np.int64), np.concatenate(idx), np.concatenate(wts)


@functools.lru_cache(maxsize=16)
def _cached_csr(key, prep: _Prepared):
    points = np.frombuffer(key, dtype=float).reshape(-1, 2)
    return _probe_csr(points, prep)


def _csr_for(points, prep):
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    if len(pts) > 64:
        return _cached_csr(pts.tobytes(), prep)
    return _probe_csr(pts, prep)


def _run(prep: _Prepared, injections, probes, record, snapshot_steps=()):
    """Time-step from rest.

    Parameters
    ----------
    injections : list of (flat_idx, weights, amplitude)
        ``amplitude[n]`` is injected when stepping from ``n`` to ``n + 1``.
    probes : (ptr, idx, weights)
        Gather operator in CSR form.
    record : ndarray of bool, shape (nt,)
        Steps at which probes are sampled.
    """
    cfg = prep.cfg
    nt = cfg.nt
    shape = prep.shape_ext
    nz, nx = shape[0] - 2 * _G, shape[1] - 2 * _G
    u0 = np.zeros(shape)
    u1 = np.zeros(shape)
    u2 = np.zeros(shape)
    psix = np.zeros((nz, shape[1]))
    zetax = np.zeros((nz, nx))
    psiz = np.zeros((shape[0], nx))
    zetaz = np.zeros((nz, nx))
    fx = np.zeros((nz, shape[1]))
    fz = np.zeros((shape[0], nx))
    idx_ = 1.0 / cfg.domain.dx
    idz_ = 1.0 / cfg.domain.dz
    dt2 = cfg.dt**2
    ptr, pidx, pw = probes
    out = np.zeros((ptr.size - 1, int(np.count_nonzero(record))))
    snaps = []
    want = set(int(s) for s in snapshot_steps)
    pt, pb, pl, pr = prep.pads
    phys = (slice(pt + _G, shape[0] - _G - pb), slice(pl + _G, shape[1] - _G - pr))

    col = 0
    for n in range(nt):
        if record[n]:
            K.gather_csr(u1, ptr, pidx, pw, out, col)
            if not np.all(np.isfinite(out[:, col])):
                raise NumericalBlowupError(n)
            col += 1
        if n == nt - 1:
            break
        K.leapfrog_step(u0, u1, u2, prep.c2x, prep.c2z, idx_, idz_, dt2,
                        psix, zetax, psiz, zetaz, *prep.coeff, fx, fz)
        for fidx, w, amp in injections:
            if amp[n] != 0.0:
                K.inject(u2, fidx, w, dt2 * amp[n])
        if n in want:
            snaps.append(FieldSnapshot(n, cfg.dt, u1[phys].copy(), u2[phys].copy()))
        if n % 50 == 49 and not math.isfinite(float(np.sum(u2))):
            raise NumericalBlowupError(n + 1)
        u0, u1, u2 = u1, u2, u0
    if not math.isfinite(float(np.sum(u1))):
        raise NumericalBlowupError(nt - 1)
    _COUNTER.add()
    return out, snaps


def simulate(model, cfg: SimConfig, sources, probes, snapshot_steps=()):
    """Generic solve: ``sources`` is a list of ``(point, amplitude[nt])``.

    Returns the probe samples, shape ``(len(probes), nt)``, and the list of
    :class:`FieldSnapshot` requested.  Counts as one PDE solve.
    """
    prep = _prepare(model, cfg)
    inj = []
    for point, amp in sources:
        amp = np.asarray(amp, dtype=float)
        if amp.shape != (cfg.nt,):
            raise ArgumentError(f"source amplitude must have length nt = {cfg.nt}")
        st = _stencil(point, cfg)
        inj.append((_flat(st, prep), st.weights, amp))
    csr = _csr_for(probes, prep)
    return _run(prep, inj, csr, np.ones(cfg.nt, bool), snapshot_steps)


def forward_solve(model, src: RickerSource, xi, cfg: SimConfig, recv: ReceiverArray,
                  snapshot_steps=()):
    """Synthetic seismogram at every receiver for a Ricker point source at ``xi``.

    Returns a :class:`Seismogram`, or ``(Seismogram, snapshots)`` when
    ``snapshot_steps`` is given.
    """
    recv.check_inside(cfg.domain)
    amp = ricker(src, cfg.t)
    data, snaps = simulate(model, cfg, [(xi, amp)], recv.positions, snapshot_steps)
    seis = Seismogram(cfg.dt, data, recv.labels)
    return (seis, snaps) if snapshot_steps else seis


def _xi_probes(xi, cfg):
    x, z = float(xi[0]), float(xi[1])
    dx, dz = cfg.domain.dx, cfg.domain.dz
    return [(x, z), (x + dx, z), (x - dx, z), (x, z + dz), (x, z - dz)]


def adjoint_solve(model, residual, eta, cfg: SimConfig, search_nodes=None, xi=None,
                  stride=1, receiver=0) -> AdjointSamples:
    """Adjoint field driven by ``residual`` injected at receiver position ``eta``.

    The terminal-value problem is solved as a forward problem in reversed time;
    the recorded samples are flipped back onto the forward time axis.  Samples
    are stored every ``stride`` steps (``t = 0, stride*dt, ...``).
    """
    residual = np.asarray(residual, dtype=float)
    if residual.shape != (cfg.nt,):
        raise ArgumentError(f"residual must have length nt = {cfg.nt}")
    if int(stride) != stride or stride < 1:
        raise ArgumentError("stride must be a positive integer")
    nodes = np.zeros((0, 2)) if search_nodes is None else np.asarray(search_nodes, float)
    nodes = nodes.reshape(-1, 2)
    prep = _prepare(model, cfg)
    st = _stencil(eta, cfg)
    inj = [(_flat(st, prep), st.weights, residual[::-1].copy())]

    n_nodes = len(nodes)
    extra = _xi_probes(xi, cfg) if xi is not None else []
    node_csr = _csr_for(nodes, prep)
    if extra:
        xcsr = _probe_csr(extra, prep)
        off = node_csr[0][-1]
        csr = (
            np.concatenate([node_csr[0], xcsr[0][1:] + off]),
            np.concatenate([node_csr[1], xcsr[1]]),
            np.concatenate([node_csr[2], xcsr[2]]),
        )
    else:
        csr = node_csr

    nt = cfg.nt
    keep = np.arange(0, nt, stride)
    record = np.zeros(nt, bool)
    record[nt - 1 - keep] = True
    out, _ = _run(prep, inj, csr, record)
    out = out[:, ::-1]

    w_xi = grad = None
    if extra:
        e = out[n_nodes:]
        w_xi = e[0].copy()
        grad = np.array([
            (e[1] - e[2]) / (2 * cfg.domain.dx),
            (e[3] - e[4]) / (2 * cfg.domain.dz),
        ])
    return AdjointSamples(
        receiver=receiver,
        nodes=nodes,
        dt=cfg.dt * stride,
        values=np.ascontiguousarray(out[:n_nodes]),
        xi=None if xi is None else (float(xi[0]), float(xi[1])),
        w_xi=w_xi,
        grad_xi=grad,
        stride=int(stride),
    )


# --------------------------------------------------------------------------
# energy


def _stagger_diff(u, h, axis):
    """Fourth-order derivative on half nodes between neighbours, mirror ghosts."""
    up = np.pad(u, [(3, 3) if a == axis else (0, 0) for a in range(2)], mode="reflect")
    n = u.shape[axis]

    def sl(k0):
        s = [slice(None), slice(None)]
        s[axis] = slice(k0, k0 + n - 1)
        return up[tuple(s)]

    return (K.C1 * (sl(4) - sl(3)) + K.C2 * (sl(5) - sl(2))) / h


def energy(snapshot: FieldSnapshot, model, domain: Domain2D) -> float:
    """Discrete acoustic energy of a two-step snapshot.

    ``E = 1/2 sum[((u1 - u0)/dt)^2 + c^2 grad(u0) . grad(u1)] dx dz`` with
    trapezoidal weights (half at edges), staggered differences and ``c^2`` on
    half nodes.  For Neumann edges this is the quantity the scheme conserves.
    """
    u0 = np.asarray(snapshot.prev, dtype=float)
    u1 = np.asarray(snapshot.cur, dtype=float)
    if u0.shape != domain.shape or u1.shape != domain.shape:
        raise ConsistencyError("snapshot shape does not match the domain")
    c2 = rasterize(model, domain).values ** 2
    mz = np.ones(domain.nz)
    mz[[0, -1]] = 0.5
    mx = np.ones(domain.nx)
    mx[[0, -1]] = 0.5
    m = np.outer(mz, mx)
    kin = np.sum(m * ((u1 - u0) / snapshot.dt) ** 2)
    c2x = 0.5 * (c2[:, 1:] + c2[:, :-1])
    c2z = 0.5 * (c2[1:, :] + c2[:-1, :])
    gx = _stagger_diff(u0, domain.dx, 1) * _stagger_diff(u1, domain.dx, 1)
    gz = _stagger_diff(u0, domain.dz, 0) * _stagger_diff(u1, domain.dz, 0)
    pot = np.sum(mz[:, None] * c2x * gx) + np.sum(mx[None, :] * c2z * gz)
    return float(0.5 * (kin + pot) * domain.dx * domain.dz)
