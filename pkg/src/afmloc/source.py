"""Ricker source time function and the regularized point delta.

The same :class:`PointStencil` both injects a point source (scatter) and
samples a field at an off-grid point (gather), so the two operations are
exact transposes of each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, PlacementError
from .media import Domain2D

__all__ = [
    "RickerSource",
    "ricker",
    "ricker_derivative",
    "delta_kernel",
    "delta_weights_1d",
    "PointStencil",
    "delta_weights_2d",
    "gather",
    "scatter",
]

SUPPORT = 3  # half-width of the delta support, in grid spacings


@dataclass(frozen=True)
class RickerSource:
    """Ricker wavelet ``A (1 - 2 pi^2 f0^2 s^2) exp(-pi^2 f0^2 s^2)``, ``s = t - tau``."""

    f0: float
    tau: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.f0 > 0:
            raise ArgumentError("dominant frequency must be positive")
        if self.amplitude < 0:
            raise ArgumentError("amplitude must be non-negative")

    def at(self, tau) -> "RickerSource":
        """Same wavelet with a different origin time."""
        return RickerSource(self.f0, float(tau), self.amplitude)

    def __call__(self, t):
        return ricker(self, t)


def ricker(src: RickerSource, t):
    a = (math.pi * src.f0) ** 2 * (np.asarray(t, dtype=float) - src.tau) ** 2
    return src.amplitude * (1.0 - 2.0 * a) * np.exp(-a)


def ricker_derivative(src: RickerSource, t):
    """Time derivative of :func:`ricker` with respect to ``t``."""
    s = np.asarray(t, dtype=float) - src.tau
    k = (math.pi * src.f0) ** 2
    return src.amplitude * 2.0 * k * s * (2.0 * k * s * s - 3.0) * np.exp(-k * s * s)


def delta_kernel(r, h):
    """Quintic regularized delta evaluated at offset(s) ``r`` for spacing ``h``.

    Supported on ``|r| <= 3h``; integrates to one on any grid of spacing ``h``.
    """
    if not h > 0:
        raise ArgumentError("delta spacing h must be positive")
    q = np.abs(np.asarray(r, dtype=float)) / h
    q2 = q * q
    q3 = q2 * q
    q4 = q3 * q
    q5 = q4 * q
    inner = 1 - 5 / 4 * q2 - 35 / 12 * q3 + 21 / 4 * q4 - 25 / 12 * q5
    middle = -4 + 75 / 4 * q - 245 / 8 * q2 + 545 / 24 * q3 - 63 / 8 * q4 + 25 / 24 * q5
    outer = 18 - 153 / 4 * q + 255 / 8 * q2 - 313 / 24 * q3 + 21 / 8 * q4 - 5 / 24 * q5
    val = np.select([q <= 1, q <= 2, q <= 3], [inner, middle, outer], default=0.0)
    return val / h


def delta_weights_1d(center, origin, h):
    """Nodes ``origin + i*h`` within ``3h`` of ``center`` and their delta weights.

    Returns
    -------
    idx : ndarray of int
        Node indices (may be negative or beyond the grid; callers clip).
    w : ndarray of float
        ``delta_kernel(x_i - center, h)``.
    """
    if not h > 0:
        raise ArgumentError("delta spacing h must be positive")
    if not (math.isfinite(center) and math.isfinite(origin)):
        raise ArgumentError("delta centre must be finite")
    f = (center - origin) / h
    lo = math.ceil(f - SUPPORT - 1e-12)
    hi = math.floor(f + SUPPORT + 1e-12)
    idx = np.arange(lo, hi + 1)
    w = delta_kernel(origin + idx * h - center, h)
    return idx, w


@dataclass(frozen=True, eq=False)
class PointStencil:
    """Sparse tensor-product delta at one point of a :class:`Domain2D`.

    Attributes
    ----------
    iz, ix : ndarray of int
        Node indices of the support.
    weights : ndarray
        Scatter weights (1/km^2); injecting amplitude ``a`` adds ``a*weights``.
    gather_weights : ndarray
        Quadrature-weighted sampling weights (dimensionless); includes the
        half weight of nodes lying on the free surface.
    """

    point: tuple[float, float]
    iz: np.ndarray
    ix: np.ndarray
    weights: np.ndarray
    gather_weights: np.ndarray

    def shifted(self, diz: int, dix: int) -> "PointStencil":
        """Same stencil expressed on a grid padded by ``diz`` rows / ``dix`` columns."""
        return PointStencil(
            self.point, self.iz + diz, self.ix + dix, self.weights, self.gather_weights
        )


def delta_weights_2d(xi, domain: Domain2D, free_surface=True) -> PointStencil:
    """Tensor-product delta at ``xi = (x, z)`` on ``domain``.

    The support may only be cut by the top edge (``z = z_min``), and only when
    ``free_surface`` is true; it is then truncated and renormalized to unit
    mass under trapezoidal quadrature (surface nodes carry half weight).
    Any other crossing raises :class:`PlacementError`.
    """
    x, z = float(xi[0]), float(xi[1])
    if not (math.isfinite(x) and math.isfinite(z)):
        raise ArgumentError("stencil centre must be finite")
    dx, dz = domain.dx, domain.dz
    ix, wx = delta_weights_1d(x, domain.x_min, dx)
    iz, wz = delta_weights_1d(z, domain.z_min, dz)
    keep_x = wx != 0.0
    ix, wx = ix[keep_x], wx[keep_x]
    keep_z = wz != 0.0
    iz, wz = iz[keep_z], wz[keep_z]

    if ix.size == 0 or iz.size == 0:
        raise PlacementError(f"point {xi} has an empty delta support")
    if ix[0] < 0 or ix[-1] > domain.nx - 1:
        raise PlacementError(f"point {xi} is within 3 dx of a lateral edge")
    if iz[-1] > domain.nz - 1:
        raise PlacementError(f"point {xi} is within 3 dz of the bottom edge")

    mz = np.ones_like(wz)
    truncated = iz[0] < 0
    if iz[0] <= 0:
        if truncated and not free_surface:
            raise PlacementError(f"point {xi} is within 3 dz of the top edge")
        keep = iz >= 0
        iz, wz, mz = iz[keep], wz[keep], mz[keep]
        if free_surface and iz[0] == 0:
            mz[0] = 0.5
    if iz.size == 0:
        raise PlacementError(f"point {xi} lies above the free surface")

    w2 = np.outer(wz, wx)
    g2 = np.outer(wz * mz, wx) * (dx * dz)
    if truncated:
        mass = g2.sum()
        if not mass > 0:
            raise PlacementError(f"point {xi}: truncated stencil has no mass")
        w2 = w2 / mass
        g2 = g2 / mass
    IZ, IX = np.meshgrid(iz, ix, indexing="ij")
    return PointStencil((x, z), IZ.ravel(), IX.ravel(), w2.ravel(), g2.ravel())


def gather(field, stencil: PointStencil):
    """Sample ``field`` (shape ``(..., nz, nx)``) at the stencil point."""
    field = np.asarray(field)
    vals = field[..., stencil.iz, stencil.ix]
    return vals @ stencil.gather_weights


def scatter(amplitude, stencil: PointStencil, shape):
    """Field of ``shape`` that injects ``amplitude`` at the stencil point."""
    out = np.zeros(shape)
    np.add.at(out, (stencil.iz, stencil.ix), amplitude * stencil.weights)
    return out
