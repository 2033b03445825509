"""Spatial correlation models and construction of the sensor correlation matrix.

Three isotropic correlation families are supported:

* ``spherical`` -- a lattice model defined at distances 0, 1 and sqrt(2)
  (values 1, rho, rho/2) and zero elsewhere; rho in [0, 1].
* ``exponential`` -- exp(-d/rho), rho > 0.
* ``matern`` -- the Matern family with order ``v`` and range ``rho``;
  v = 0.5 coincides with the exponential model and v -> inf approaches
  the squared exponential exp(-d^2 / (2 rho^2)).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, kv

from .errors import ParameterDomainError

# distances are snapped to the spherical model's lattice within this tolerance
_LATTICE_TOL = 1e-9

# below this scaled distance the Matern correlation is evaluated by its
# quadratic expansion; kv overflows there for large orders
_MATERN_SMALL_ARG = 1e-4


@dataclass(frozen=True)
class SpatialModel:
    """Parametrized spatial correlation function C(d | rho)."""

    kind: str  # "spherical" | "exponential" | "matern"
    rho: float
    matern_order: float | None = None

    def __post_init__(self):
        if self.kind not in ("spherical", "exponential", "matern"):
            raise ParameterDomainError(f"unknown spatial model kind: {self.kind!r}")
        if self.kind == "spherical":
            if not 0.0 <= self.rho <= 1.0:
                raise ParameterDomainError(
                    f"spherical model requires 0 <= rho <= 1, got {self.rho}"
                )
        elif self.rho <= 0.0:
            raise ParameterDomainError(
                f"{self.kind} model requires rho > 0, got {self.rho}"
            )
        if self.kind == "matern":
            if self.matern_order is None or self.matern_order <= 0.0:
                raise ParameterDomainError(
                    f"matern model requires order v > 0, got {self.matern_order}"
                )


@dataclass(frozen=True)
class SensorLayout:
    """Planar sensor coordinates, one (x, y) point per sensor."""

    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ParameterDomainError("layout must be a non-empty list of 2-D points")
        if not np.all(np.isfinite(pts)):
            raise ParameterDomainError("layout coordinates must be finite")
        object.__setattr__(self, "coords", pts)

    @property
    def n_sensors(self) -> int:
        return self.coords.shape[0]

    def distances(self) -> np.ndarray:
        """Pairwise Euclidean distance matrix."""
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt((diff**2).sum(axis=2))


def _matern(d: np.ndarray, rho: float, v: float) -> np.ndarray:
    # argument sqrt(2) * sqrt(v) * d / rho; d = 0 handled by the caller
    arg = np.sqrt(2.0 * v) * d / rho
    out = np.empty_like(arg)
    small = arg < _MATERN_SMALL_ARG
    with np.errstate(invalid="ignore", over="ignore"):
        a = np.where(small, 1.0, arg)
        out = np.exp((1.0 - v) * np.log(2.0) - gammaln(v) + v * np.log(a)) * kv(v, a)
    if v > 1.0:
        # leading series term of 1 - C(d); exact limit 1 at arg = 0
        out = np.where(small, 1.0 - arg**2 / (4.0 * (v - 1.0)), out)
    else:
        out = np.where(small & (arg == 0.0), 1.0, out)
    return out


def correlation(model: SpatialModel, d) -> np.ndarray | float:
    """Evaluate the correlation function C(d | rho) at distance(s) ``d`` >= 0."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr < 0):
        raise ParameterDomainError("distance must be nonnegative")
    if model.kind == "spherical":
        out = np.zeros_like(d_arr)
        out[np.abs(d_arr) <= _LATTICE_TOL] = 1.0
        out[np.abs(d_arr - 1.0) <= _LATTICE_TOL] = model.rho
        out[np.abs(d_arr - np.sqrt(2.0)) <= _LATTICE_TOL] = model.rho / 2.0
    elif model.kind == "exponential":
        out = np.where(d_arr == 0.0, 1.0, np.exp(-d_arr / model.rho))
    else:
        out = _matern(d_arr, model.rho, model.matern_order)
    return out if out.ndim else float(out)


def correlation_matrix(model: SpatialModel, layout: SensorLayout) -> np.ndarray:
    """Assemble the p x p sensor correlation matrix Lambda.

    Entry (i, j) is the correlation function evaluated at the Euclidean
    distance between sensors i and j; the diagonal is exactly 1 and the
    result is symmetric by construction.
    """
    lam = np.asarray(correlation(model, layout.distances()))
    lam = 0.5 * (lam + lam.T)
    np.fill_diagonal(lam, 1.0)
    return lam


def grid_layout(rows: int, cols: int, spacing: float = 1.0) -> SensorLayout:
    """Rectangular sensor grid, row-major ordering."""
    if rows < 1 or cols < 1:
        raise ParameterDomainError("grid dimensions must be positive")
    ys, xs = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(float) * spacing
    return SensorLayout(pts)


def default_layout(p: int, spacing: float = 1.0) -> SensorLayout:
    """Convenience layout for p sensors: a square grid when p is a perfect
    square, a unit-spaced line otherwise."""
    n = int(round(np.sqrt(p)))
    if n * n == p:
        return grid_layout(n, n, spacing)
    return grid_layout(1, p, spacing)


def read_layout_csv(path) -> SensorLayout:
    """Read sensor coordinates from a CSV file with header columns ``x,y``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "y"} <= set(reader.fieldnames):
            raise ParameterDomainError(f"layout file {path} must have header columns x,y")
        pts = [(float(row["x"]), float(row["y"])) for row in reader]
    if not pts:
        raise ParameterDomainError(f"layout file {path} contains no sensors")
    return SensorLayout(np.array(pts))
