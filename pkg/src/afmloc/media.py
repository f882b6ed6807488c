"""Simulation domains and wave-speed models.

Coordinates are in km with ``z`` pointing down and ``z = 0`` the free
surface.  Speeds are in km/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ArgumentError, DomainError, GridFormatError

__all__ = [
    "Domain2D",
    "TwoLayerModel",
    "SubductionModel",
    "GriddedModel",
    "VelocityModel",
    "Raster",
    "sample_velocity",
    "rasterize",
    "load_gridded",
    "save_gridded",
    "two_layer_domain",
    "subduction_domain",
    "desk_domain",
]


@dataclass(frozen=True)
class Domain2D:
    """Rectangular node-centred grid.

    Parameters
    ----------
    x_min, x_max, z_min, z_max : float
        Bounds in km; ``z_min >= 0``.
    nx, nz : int
        Number of grid nodes along x and z (both >= 8).
    """

    x_min: float
    x_max: float
    z_min: float
    z_max: float
    nx: int
    nz: int

    def __post_init__(self):
        vals = (self.x_min, self.x_max, self.z_min, self.z_max)
        if not all(math.isfinite(v) for v in vals):
            raise ArgumentError("domain bounds must be finite")
        if not self.x_max > self.x_min:
            raise ArgumentError("x_max must exceed x_min")
        if not self.z_max > self.z_min or self.z_min < 0:
            raise ArgumentError("need z_max > z_min >= 0")
        if int(self.nx) != self.nx or int(self.nz) != self.nz:
            raise ArgumentError("nx and nz must be integers")
        if self.nx < 8 or self.nz < 8:
            raise ArgumentError("nx and nz must be at least 8")

    @classmethod
    def from_spacing(cls, x_min, x_max, z_min, z_max, dx, dz=None):
        """Build a domain whose spacing is as close as possible to ``dx``/``dz``."""
        dz = dx if dz is None else dz
        if dx <= 0 or dz <= 0:
            raise ArgumentError("grid spacing must be positive")
        nx = int(round((x_max - x_min) / dx)) + 1
        nz = int(round((z_max - z_min) / dz)) + 1
        return cls(float(x_min), float(x_max), float(z_min), float(z_max), nx, nz)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / (self.nz - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.nx)

    @property
    def z(self) -> np.ndarray:
        return self.z_min + self.dz * np.arange(self.nz)

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(nz, nx)`` of fields living on this grid."""
        return (self.nz, self.nx)

    def contains(self, x, z, tol=1e-9) -> bool:
        return (self.x_min - tol <= x <= self.x_max + tol) and (
            self.z_min - tol <= z <= self.z_max + tol
        )


def _check_finite(x, z):
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
        raise ArgumentError("velocity query coordinates must be finite")
    return np.broadcast_arrays(x, z)


@dataclass(frozen=True)
class TwoLayerModel:
    """Layer with a vertical gradient over a faster half-space; interface at 20 km."""

    kind = "two-layer"

    def sample(self, x, z):
        x, z = _check_finite(x, z)
        if np.any(z < 0):
            raise DomainError("analytic models are defined for z >= 0 only")
        lateral = 0.2 * np.sin(np.pi * x / 25.0)
        return np.where(z <= 20.0, 5.2 + 0.05 * z + lateral, 6.8 + lateral)


@dataclass(frozen=True)
class SubductionModel:
    """Crust over mantle with an undulating Moho and a dipping slab."""

    kind = "subduction"

    def sample(self, x, z):
        x, z = _check_finite(x, z)
        if np.any(z < 0):
            raise DomainError("analytic models are defined for z >= 0 only")
        moho = 33.0 + 2.5 * np.sin(np.pi * x / 40.0)
        slab_top = 45.0 + 0.4 * x
        # the crust branch includes z = 0 so the receivers sit in the crust
        return np.select(
            [
                z <= moho,
                z <= slab_top,
                z <= 60.0 + 0.4 * x,
                z <= 100.0 + 0.4 * x,
            ],
            [5.5, 7.8, 7.488, 8.268],
            default=7.8,
        )


@dataclass(frozen=True, eq=False)
class GriddedModel:
    """Speeds tabulated on a :class:`Domain2D`, bilinearly interpolated.

    ``values`` has shape ``(nz, nx)``: one row per depth.
    """

    domain: Domain2D
    values: np.ndarray

    kind = "gridded"

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.size != self.domain.nx * self.domain.nz:
            raise ArgumentError(
                f"expected {self.domain.nx * self.domain.nz} values, got {vals.size}"
            )
        vals = vals.reshape(self.domain.shape)
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ArgumentError("gridded speeds must be finite and positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def sample(self, x, z):
        x, z = _check_finite(x, z)
        d = self.domain
        tol = 1e-9 * max(d.x_max - d.x_min, d.z_max - d.z_min)
        if (
            np.any(x < d.x_min - tol)
            or np.any(x > d.x_max + tol)
            or np.any(z < d.z_min - tol)
            or np.any(z > d.z_max + tol)
        ):
            raise DomainError("query point outside the gridded model domain")
        fx = np.clip((x - d.x_min) / d.dx, 0, d.nx - 1)
        fz = np.clip((z - d.z_min) / d.dz, 0, d.nz - 1)
        i0 = np.minimum(np.floor(fx).astype(int), d.nx - 2)
        j0 = np.minimum(np.floor(fz).astype(int), d.nz - 2)
        tx = fx - i0
        tz = fz - j0
        v = self.values
        return (
            (1 - tz) * ((1 - tx) * v[j0, i0] + tx * v[j0, i0 + 1])
            + tz * ((1 - tx) * v[j0 + 1, i0] + tx * v[j0 + 1, i0 + 1])
        )


VelocityModel = TwoLayerModel | SubductionModel | GriddedModel


def sample_velocity(model, x, z):
    """Wave speed of ``model`` at ``(x, z)``; scalars in, scalar out."""
    out = model.sample(x, z)
    return float(out) if np.ndim(out) == 0 else out


class Raster(NamedTuple):
    values: np.ndarray
    vmin: float
    vmax: float


def rasterize(model, domain: Domain2D) -> Raster:
    """Sample ``model`` at every node of ``domain``; shape ``(nz, nx)``."""
    zz, xx = np.meshgrid(domain.z, domain.x, indexing="ij")
    vals = np.asarray(model.sample(xx, zz), dtype=float)
    return Raster(vals, float(vals.min()), float(vals.max()))


def save_gridded(path, domain: Domain2D, values) -> None:
    """Write speeds in the plain-text gridded format (17 significant digits)."""
    values = np.asarray(values, dtype=float).reshape(domain.shape)
    lines = [
        f"{domain.nx} {domain.nz} {domain.x_min!r} {domain.x_max!r} "
        f"{domain.z_min!r} {domain.z_max!r}"
    ]
    for row in values:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_gridded(path) -> GriddedModel:
    """Parse a gridded velocity file.

    The first line is ``nx nz x_min x_max z_min z_max``; it is followed by
    ``nz`` lines of ``nx`` speeds each, shallowest row first.
    """
    text = Path(path).read_text().splitlines()
    rows = [(i + 1, ln.split()) for i, ln in enumerate(text) if ln.strip()]
    if not rows:
        raise GridFormatError("empty file", 1)
    lineno, head = rows[0]
    if len(head) != 6:
        raise GridFormatError("header must hold nx nz x_min x_max z_min z_max", lineno)
    try:
        nx, nz = int(head[0]), int(head[1])
        bounds = [float(v) for v in head[2:]]
    except ValueError as exc:
        raise GridFormatError(f"bad header: {exc}", lineno) from None
    try:
        domain = Domain2D(*bounds, nx, nz)
    except ArgumentError as exc:
        raise GridFormatError(str(exc), lineno) from None

    values = []
    for lineno, parts in rows[1:]:
        for p in parts:
            try:
                v = float(p)
            except ValueError:
                raise GridFormatError(f"not a number: {p!r}", lineno) from None
            if not math.isfinite(v) or v <= 0:
                raise GridFormatError(f"speed must be positive and finite: {p}", lineno)
            values.append(v)
            if len(values) > nx * nz:
                raise GridFormatError(f"more than nx*nz = {nx * nz} values", lineno)
    if len(values) != nx * nz:
        last = rows[-1][0] if len(rows) > 1 else rows[0][0]
        raise GridFormatError(
            f"expected nx*nz = {nx * nz} values, found {len(values)}", last
        )
    return GriddedModel(domain, np.array(values).reshape(nz, nx))


def two_layer_domain(dx=0.2) -> Domain2D:
    return Domain2D.from_spacing(-10.0, 110.0, 0.0, 50.0, dx)


def subduction_domain(dx=0.2) -> Domain2D:
    return Domain2D.from_spacing(0.0, 200.0, 0.0, 200.0, dx)


def desk_domain(dx=0.2) -> Domain2D:
    return Domain2D.from_spacing(0.0, 40.0, 0.0, 20.0, dx)
