"""Parametric priors over shear-modulus fields.

Two disk-inclusion families (a stiff circular inclusion in a soft
background) plus a Gaussian field prior used for linear-model validation.
A prior turns a low-dimensional latent vector into a modulus field on a
pixel grid; rendering is strict-interior (a pixel belongs to the inclusion
iff its center is strictly inside the disk, boundary ties go to the
background).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    GridDomainMismatchError,
    LatentOutOfRangeError,
    NonPositiveModulusError,
)
from .fields import Grid2D, ScalarField2D


@dataclass(frozen=True)
class PriorSample:
    """A latent draw together with its rendered modulus field."""

    latent: np.ndarray
    modulus: ScalarField2D


def render_disk(grid: Grid2D, cx: float, cy: float, radius: float,
                inside: float, outside: float) -> ScalarField2D:
    """Two-valued field: ``inside`` where a pixel center is strictly inside
    the disk, ``outside`` elsewhere (boundary ties -> outside)."""
    if inside <= 0 or outside <= 0:
        raise NonPositiveModulusError(
            f"modulus values must be positive, got inside={inside}, outside={outside}")
    xc, yc = grid.pixel_centers()
    mask = (xc - cx) ** 2 + (yc - cy) ** 2 < radius ** 2
    data = np.where(mask, inside, outside)
    return ScalarField2D(grid, data[None])


def _check_domain(grid: Grid2D, width: float, height: float, name: str):
    wx, wy = grid.extent
    if abs(wx - width) > 1e-9 * max(1.0, width) or abs(wy - height) > 1e-9 * max(1.0, height):
        raise GridDomainMismatchError(
            f"{name} expects a {width} x {height} domain, grid covers {wx} x {wy}")


@dataclass(frozen=True)
class InclusionPriorFixed:
    """Fixed-geometry disk prior on a unit-square specimen (cm / kPa).

    The inclusion radius and both moduli are fixed; only the center moves:
    cx, cy ~ U(0.2, 0.8) independently. With radius 0.12 the disk always
    stays at least 0.08 away from every edge.
    """

    side: float = 1.0              # cm
    center_low: float = 0.2
    center_high: float = 0.8
    radius: float = 0.12           # cm
    background: float = 0.1        # kPa
    inclusion: float = 1.5         # kPa

    latent_dim = 2
    latent_names = ("cx", "cy")
    kind = "inclusion_fixed"

    def __post_init__(self):
        if self.background <= 0 or self.inclusion <= 0:
            raise NonPositiveModulusError("prior moduli must be positive")
        lo = self.center_low * self.side if self.side != 1.0 else self.center_low
        if lo - self.radius < 0:
            raise ValueError("center range does not keep the disk inside the domain")

    def check_grid(self, grid: Grid2D):
        _check_domain(grid, self.side, self.side, "InclusionPriorFixed")

    def validate_latent(self, latent: np.ndarray):
        latent = np.asarray(latent, dtype=np.float64)
        if latent.shape != (2,):
            raise LatentOutOfRangeError(f"expected latent of shape (2,), got {latent.shape}")
        lo, hi = self.center_low * self.side, self.center_high * self.side
        if np.any(latent < lo) or np.any(latent > hi):
            raise LatentOutOfRangeError(
                f"center {latent.tolist()} outside [{lo}, {hi}]^2")
        return latent

    def sample_latent(self, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.center_low * self.side, self.center_high * self.side
        return rng.uniform(lo, hi, size=2)

    def render(self, latent, grid: Grid2D) -> ScalarField2D:
        self.check_grid(grid)
        cx, cy = self.validate_latent(latent)
        return render_disk(grid, cx, cy, self.radius, self.inclusion, self.background)

    def sample(self, rng: np.random.Generator, grid: Grid2D) -> PriorSample:
        latent = self.sample_latent(rng)
        return PriorSample(latent=latent, modulus=self.render(latent, grid))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "side": self.side, "center_low": self.center_low,
                "center_high": self.center_high, "radius": self.radius,
                "background": self.background, "inclusion": self.inclusion}


@dataclass(frozen=True)
class InclusionPriorRich:
    """Disk prior with random radius and contrast on a rectangular specimen
    (mm / kPa): center-x ~ U(7.1, 19.2), center-y ~ U(7.1, 27.6),
    radius ~ U(3.5, 7.0), contrast ratio ~ U(1, 8) over a 4.7 kPa background.

    The domain is 26.297 mm wide by 34.608 mm tall; every admissible disk
    stays inside it.
    """

    width: float = 26.297          # mm
    height: float = 34.608         # mm
    cx_low: float = 7.1
    cx_high: float = 19.2
    cy_low: float = 7.1
    cy_high: float = 27.6
    radius_low: float = 3.5
    radius_high: float = 7.0
    ratio_low: float = 1.0
    ratio_high: float = 8.0
    background: float = 4.7        # kPa

    latent_dim = 4
    latent_names = ("cx", "cy", "radius", "ratio")
    kind = "inclusion_rich"

    def check_grid(self, grid: Grid2D):
        _check_domain(grid, self.width, self.height, "InclusionPriorRich")

    def validate_latent(self, latent: np.ndarray):
        latent = np.asarray(latent, dtype=np.float64)
        if latent.shape != (4,):
            raise LatentOutOfRangeError(f"expected latent of shape (4,), got {latent.shape}")
        los = (self.cx_low, self.cy_low, self.radius_low, self.ratio_low)
        his = (self.cx_high, self.cy_high, self.radius_high, self.ratio_high)
        for name, v, lo, hi in zip(self.latent_names, latent, los, his):
            if not lo <= v <= hi:
                raise LatentOutOfRangeError(f"{name}={v} outside [{lo}, {hi}]")
        return latent

    def sample_latent(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([
            rng.uniform(self.cx_low, self.cx_high),
            rng.uniform(self.cy_low, self.cy_high),
            rng.uniform(self.radius_low, self.radius_high),
            rng.uniform(self.ratio_low, self.ratio_high),
        ])

    def render(self, latent, grid: Grid2D) -> ScalarField2D:
        self.check_grid(grid)
        cx, cy, radius, ratio = self.validate_latent(latent)
        return render_disk(grid, cx, cy, radius, ratio * self.background, self.background)

    def sample(self, rng: np.random.Generator, grid: Grid2D) -> PriorSample:
        latent = self.sample_latent(rng)
        return PriorSample(latent=latent, modulus=self.render(latent, grid))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "width": self.width, "height": self.height,
                "cx_low": self.cx_low, "cx_high": self.cx_high,
                "cy_low": self.cy_low, "cy_high": self.cy_high,
                "radius_low": self.radius_low, "radius_high": self.radius_high,
                "ratio_low": self.ratio_low, "ratio_high": self.ratio_high,
                "background": self.background}


class GaussianFieldPrior:
    """N(mean, cov) over the flattened pixels of a grid.

    The latent *is* the field; used to validate the sampler and the
    importance-sampling oracle against conjugate linear-Gaussian posteriors.
    """

    kind = "gaussian_field"

    def __init__(self, grid: Grid2D, mean: np.ndarray, cov: np.ndarray):
        n = grid.n_pixels
        mean = np.asarray(mean, dtype=np.float64).reshape(n)
        cov = np.asarray(cov, dtype=np.float64).reshape(n, n)
        self.grid = grid
        self.mean = mean
        self.cov = cov
        self.chol = np.linalg.cholesky(cov)
        self.latent_dim = n

    def check_grid(self, grid: Grid2D):
        if grid != self.grid:
            raise GridDomainMismatchError("GaussianFieldPrior is bound to its own grid")

    def sample_latent(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.chol @ rng.standard_normal(self.latent_dim)

    def render(self, latent, grid: Grid2D) -> ScalarField2D:
        self.check_grid(grid)
        data = np.asarray(latent, dtype=np.float64).reshape(1, grid.ny, grid.nx)
        return ScalarField2D(grid, data)

    def sample(self, rng: np.random.Generator, grid: Grid2D) -> PriorSample:
        latent = self.sample_latent(rng)
        return PriorSample(latent=latent, modulus=self.render(latent, grid))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.latent_dim}
