"""Grid-valued fields and the normalization/rescaling helpers.

A field is a stack of channels on a regular 2-D grid. Data is stored as
``(channels, ny, nx)`` with row index = y and column index = x, so
``data[c, j, i]`` sits at the pixel center ``origin + ((i + 0.5) dx,
(j + 0.5) dy)``. Arrays are frozen after construction; every operation
returns a new field.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    DegenerateRangeError,
    EmptyCollectionError,
    NonPositiveModulusError,
    ShapeMismatchError,
)


@dataclass(frozen=True)
class Grid2D:
    """Regular pixel grid: ``nx`` by ``ny`` cells of size ``dx`` by ``dy``."""

    nx: int
    ny: int
    dx: float
    dy: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.nx}x{self.ny}")
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError(f"pixel sizes must be positive, got dx={self.dx}, dy={self.dy}")

    @property
    def extent(self) -> tuple[float, float]:
        """Physical size (width, height) of the covered rectangle."""
        return (self.nx * self.dx, self.ny * self.dy)

    @property
    def n_pixels(self) -> int:
        return self.nx * self.ny

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``(xc, yc)``, each shaped ``(ny, nx)``."""
        ox, oy = self.origin
        x = ox + (np.arange(self.nx) + 0.5) * self.dx
        y = oy + (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y)

    def to_dict(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "dx": self.dx,
            "dy": self.dy,
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Grid2D":
        return cls(nx=int(d["nx"]), ny=int(d["ny"]), dx=float(d["dx"]),
                   dy=float(d["dy"]), origin=tuple(d.get("origin", (0.0, 0.0))))


@dataclass(frozen=True)
class ScalarField2D:
    """One or more scalar channels sampled at the pixel centers of a grid."""

    grid: Grid2D
    data: np.ndarray  # (channels, ny, nx)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[1] != self.grid.ny or arr.shape[2] != self.grid.nx:
            raise ShapeMismatchError(
                f"data shape {np.asarray(self.data).shape} does not match grid "
                f"(ny={self.grid.ny}, nx={self.grid.nx})")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field data contains non-finite entries")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    def with_data(self, data: np.ndarray) -> "ScalarField2D":
        return ScalarField2D(self.grid, data)

    def same_shape(self, other: "ScalarField2D") -> bool:
        return self.grid == other.grid and self.channels == other.channels


@dataclass(frozen=True)
class NormalizationStats:
    """Min/max of one variable group ('x' or 'y'), shared over all channels."""

    vmin: float
    vmax: float
    group: str = "x"

    def __post_init__(self):
        if not (np.isfinite(self.vmin) and np.isfinite(self.vmax)):
            raise ValueError("normalization stats must be finite")
        if self.vmax <= self.vmin:
            raise DegenerateRangeError(
                f"degenerate range for group {self.group!r}: "
                f"min={self.vmin}, max={self.vmax}")

    @property
    def span(self) -> float:
        return self.vmax - self.vmin

    def to_dict(self) -> dict:
        return {"min": self.vmin, "max": self.vmax, "group": self.group}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(vmin=float(d["min"]), vmax=float(d["max"]), group=str(d["group"]))


def minmax_fit(arrays, group: str = "x") -> NormalizationStats:
    """Joint min/max over every array (all channels pooled) in one group.

    ``arrays`` is an iterable of ndarrays or ScalarField2D. Raises
    EmptyCollectionError on an empty iterable and DegenerateRangeError when
    all values coincide.
    """
    vmin = np.inf
    vmax = -np.inf
    n = 0
    for a in arrays:
        arr = a.data if isinstance(a, ScalarField2D) else np.asarray(a)
        if arr.size == 0:
            continue
        vmin = min(vmin, float(arr.min()))
        vmax = max(vmax, float(arr.max()))
        n += arr.size
    if n == 0:
        raise EmptyCollectionError("cannot fit normalization stats on no data")
    return NormalizationStats(vmin=vmin, vmax=vmax, group=group)


def minmax_apply(values, stats: NormalizationStats):
    """Map values affinely so that [min, max] -> [0, 1]."""
    arr = values.data if isinstance(values, ScalarField2D) else np.asarray(values, dtype=np.float64)
    out = (arr - stats.vmin) / stats.span
    if isinstance(values, ScalarField2D):
        return values.with_data(out)
    return out


def minmax_invert(values, stats: NormalizationStats):
    """Inverse of :func:`minmax_apply`."""
    arr = values.data if isinstance(values, ScalarField2D) else np.asarray(values, dtype=np.float64)
    out = arr * stats.span + stats.vmin
    if isinstance(values, ScalarField2D):
        return values.with_data(out)
    return out


def log_rescale(field, ref: float):
    """Entrywise log10(value / ref); the usual modulus-contrast transform.

    Every value and ``ref`` must be strictly positive.
    """
    if not ref > 0:
        raise NonPositiveModulusError(f"reference modulus must be positive, got {ref}")
    arr = field.data if isinstance(field, ScalarField2D) else np.asarray(field, dtype=np.float64)
    if np.any(arr <= 0):
        raise NonPositiveModulusError("log rescale requires strictly positive values")
    out = np.log10(arr / ref)
    if isinstance(field, ScalarField2D):
        return field.with_data(out)
    return out


def rmse(a, b) -> float:
    """Root-mean-square difference over all channels and pixels."""
    arr_a = a.data if isinstance(a, ScalarField2D) else np.asarray(a, dtype=np.float64)
    arr_b = b.data if isinstance(b, ScalarField2D) else np.asarray(b, dtype=np.float64)
    if isinstance(a, ScalarField2D) and isinstance(b, ScalarField2D):
        if not a.same_shape(b):
            raise ShapeMismatchError(
                f"cannot compare fields: {a.channels}ch on {a.grid.nx}x{a.grid.ny} vs "
                f"{b.channels}ch on {b.grid.nx}x{b.grid.ny}")
    if arr_a.shape != arr_b.shape:
        raise ShapeMismatchError(f"shape mismatch: {arr_a.shape} vs {arr_b.shape}")
    return float(np.sqrt(np.mean((arr_a - arr_b) ** 2)))
