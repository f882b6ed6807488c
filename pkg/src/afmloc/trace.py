"""Misfits, noise and time windows on seismograms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DegenerateTraceError
from .propagator import Seismogram

__all__ = [
    "TimeWindow",
    "MisfitVector",
    "NoiseSpec",
    "trapezoid_weights",
    "misfit",
    "sum_abs_misfit",
    "add_noise",
    "select_window",
]


@dataclass(frozen=True, eq=False)
class TimeWindow:
    """Per-receiver ``[t_start, t_end]`` intervals.

    ``fallback`` marks receivers for which no window could be picked and the
    whole record is used instead.
    """

    labels: tuple
    starts: np.ndarray
    ends: np.ndarray
    fallback: tuple = ()

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=float).reshape(-1)
        ends = np.asarray(self.ends, dtype=float).reshape(-1)
        labels = tuple(int(k) for k in self.labels)
        if not (len(labels) == starts.size == ends.size):
            raise ArgumentError("one window per receiver label required")
        if np.any(starts < 0) or np.any(ends <= starts):
            raise ArgumentError("windows need 0 <= t_start < t_end")
        fb = tuple(bool(f) for f in self.fallback) or (False,) * len(labels)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "ends", ends)
        object.__setattr__(self, "fallback", fb)

    @classmethod
    def full(cls, seis: Seismogram) -> "TimeWindow":
        n = len(seis.labels)
        return cls(seis.labels, np.zeros(n), np.full(n, seis.T))

    def bounds(self, label) -> tuple[float, float]:
        try:
            i = self.labels.index(label)
        except ValueError:
            raise ArgumentError(f"no window for receiver r{label}") from None
        return float(self.starts[i]), float(self.ends[i])

    def with_override(self, label, t_start, t_end) -> "TimeWindow":
        starts, ends = self.starts.copy(), self.ends.copy()
        i = self.labels.index(label)
        starts[i], ends[i] = t_start, t_end
        fb = list(self.fallback)
        fb[i] = False
        return TimeWindow(self.labels, starts, ends, tuple(fb))

    @property
    def warning(self) -> bool:
        return any(self.fallback)


def trapezoid_weights(nt, dt, window=None) -> np.ndarray:
    """Trapezoidal quadrature weights on ``t_n = n dt`` restricted to ``window``.

    Samples outside ``[t_start, t_end]`` get weight zero; the first and last
    samples inside get ``dt / 2``.
    """
    t0, t1 = (0.0, (nt - 1) * dt) if window is None else window
    i0 = max(0, math.ceil(t0 / dt - 1e-9))
    i1 = min(nt - 1, math.floor(t1 / dt + 1e-9))
    w = np.zeros(nt)
    if i1 <= i0:
        return w
    w[i0 : i1 + 1] = dt
    w[i0] = w[i1] = 0.5 * dt
    return w


@dataclass(frozen=True, eq=False)
class MisfitVector:
    """Per-receiver misfits with the adjoint forcing that goes with them.

    Attributes
    ----------
    labels : tuple of int
        Active receivers.
    chi : ndarray
        ``chi_r = int_w |d_r - s_r|^2 dt / (2 int_w |d_r|^2 dt)``.
    norms : ndarray
        ``int_w |d_r|^2 dt``.
    residual : ndarray, shape (n_labels, nt)
        Adjoint forcing ``(d_r - s_r) / int_w |d_r|^2 dt`` times the window's
        quadrature weight relative to ``dt`` (one inside, a half at the window
        ends, zero outside), ready to inject step by step.
    """

    labels: tuple
    chi: np.ndarray
    norms: np.ndarray
    residual: np.ndarray

    @property
    def total(self) -> float:
        return sum_abs_misfit(self)

    def value(self, label) -> float:
        return float(self.chi[self.labels.index(label)])


def misfit(d: Seismogram, s: Seismogram, window: TimeWindow | None = None,
           labels=None) -> MisfitVector:
    """Normalized L2 misfit of synthetic ``s`` against observed ``d``."""
    d.check_compatible(s)
    labels = tuple(d.labels if labels is None else labels)
    chi = np.zeros(len(labels))
    norms = np.zeros(len(labels))
    res = np.zeros((len(labels), d.nt))
    for i, k in enumerate(labels):
        dk, sk = d.trace(k), s.trace(k)
        w = trapezoid_weights(d.nt, d.dt, None if window is None else window.bounds(k))
        norm = float(np.sum(w * dk * dk))
        if not norm > 0:
            raise DegenerateTraceError(k)
        diff = dk - sk
        chi[i] = float(np.sum(w * diff * diff)) / (2.0 * norm)
        norms[i] = norm
        res[i] = diff * (w / d.dt) / norm
    return MisfitVector(labels, chi, norms, res)


def sum_abs_misfit(m: MisfitVector) -> float:
    return float(np.sum(np.abs(m.chi)))


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise, ``sigma_r = ratio * max_t |s_r(t)|``."""

    ratio: float
    seed: int = 0

    def __post_init__(self):
        if not (self.ratio >= 0 and math.isfinite(self.ratio)):
            raise ArgumentError("noise ratio must be finite and non-negative")


def _receiver_rng(seed, label) -> np.random.Generator:
    # counter-based stream keyed by (seed, receiver): independent of call order
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(label)])))


def add_noise(s: Seismogram, spec: NoiseSpec) -> Seismogram:
    if spec.ratio == 0:
        return Seismogram(s.dt, s.data.copy(), s.labels)
    out = s.data.copy()
    for i, k in enumerate(s.labels):
        sigma = spec.ratio * np.max(np.abs(s.data[i]))
        out[i] += sigma * _receiver_rng(spec.seed, k).standard_normal(s.nt)
    return Seismogram(s.dt, out, s.labels)


def _moving_rms(x, width):
    kern = np.ones(width) / width
    return np.sqrt(np.maximum(np.convolve(x * x, kern, mode="same"), 0.0))


def select_window(d: Seismogram, threshold_fraction=0.02, pad=None, f0=2.0,
                  subtract_floor=True, contiguous=True) -> TimeWindow:
    """Window around the main energy of each trace.

    A moving-RMS envelope one dominant period wide is computed; with
    ``subtract_floor`` its median power (the background noise level; near zero
    on clean data) is removed first.  The window spans the samples where the
    envelope exceeds ``threshold_fraction`` of its peak: the unbroken run
    through the peak when ``contiguous`` is true, otherwise everything from
    the first to the last such sample.  It is then expanded by ``pad``
    seconds (default half a period) and clamped to the record.  Traces whose
    envelope never rises above the threshold get the whole record and a
    fallback flag.
    """
    if not 0 < threshold_fraction < 1:
        raise ArgumentError("threshold_fraction must lie in (0, 1)")
    if not f0 > 0:
        raise ArgumentError("f0 must be positive")
    pad = 0.5 / f0 if pad is None else float(pad)
    if pad < 0:
        raise ArgumentError("pad must be non-negative")
    width = max(1, int(round(1.0 / (f0 * d.dt))))
    T = d.T
    starts, ends, fb = [], [], []
    for i in range(len(d.labels)):
        env = _moving_rms(d.data[i], width)
        if subtract_floor:
            p = env * env
            env = np.sqrt(np.maximum(p - np.median(p), 0.0))
        peak = env.max()
        if not peak > 0:
            starts.append(0.0)
            ends.append(T)
            fb.append(True)
            continue
        above = env > threshold_fraction * peak
        if contiguous:
            k = int(np.argmax(env))
            below = np.flatnonzero(~above)
            left = below[below < k]
            right = below[below > k]
            i0 = left[-1] + 1 if left.size else 0
            i1 = right[0] - 1 if right.size else env.size - 1
        else:
            idx = np.flatnonzero(above)
            i0, i1 = idx[0], idx[-1]
        t0 = max(0.0, i0 * d.dt - pad)
        t1 = min(T, i1 * d.dt + pad)
        if t1 <= t0:
            t0, t1 = 0.0, T
        starts.append(t0)
        ends.append(t1)
        fb.append(False)
    return TimeWindow(d.labels, np.array(starts), np.array(ends), tuple(fb))
