"""Measurement models: truncated Gaussian sensor noise and wrapped-phase
interferometric readout.

The truncated Gaussian model adds zero-mean Gaussian noise clipped to
+-3 sigma by resampling rejected draws, with sigma given as a fraction of
the dataset's displacement scale. The wrapped-phase model converts
displacement to interferometric phase (factor 4 pi n_r / lambda_0), adds
per-pixel phase noise whose density depends on an SNR parameter k (allowed
to vary with imaging depth, i.e. per grid row), and wraps onto (-pi, pi].
"""

from __future__ import annotations

from dataclasses import dataclass
from math import erf, exp, pi, sqrt

import numpy as np
from scipy.special import erf as nperf

from .fields import ScalarField2D


def sample_truncated_gaussian(sigma: float, rng: np.random.Generator,
                              size) -> np.ndarray:
    """Draws from N(0, sigma^2) conditioned on |eta| <= 3 sigma.

    Rejected draws are resampled, so the result is the exact conditional
    law (std = 0.98658 sigma), not a clipped one. sigma = 0 gives zeros.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return np.zeros(size)
    out = rng.normal(0.0, sigma, size=size)
    bad = np.abs(out) > 3.0 * sigma
    while np.any(bad):
        out[bad] = rng.normal(0.0, sigma, size=int(bad.sum()))
        bad = np.abs(out) > 3.0 * sigma
    return out


def phase_from_displacement(u, n_refract: float = 1.4,
                            wavelength: float = 8e-4):
    """Interferometric phase 4 pi n_r u / lambda_0.

    ``u`` and ``wavelength`` share a length unit (default 800 nm expressed
    in mm).
    """
    return 4.0 * pi * n_refract * np.asarray(u, dtype=np.float64) / wavelength


def wrap_phase(phi):
    """Wrap onto the half-open interval (-pi, pi] (so -pi maps to +pi)."""
    phi = np.asarray(phi, dtype=np.float64)
    return phi - 2.0 * pi * np.ceil((phi - pi) / (2.0 * pi))


def phase_noise_pdf(phi, k):
    """Density of the interferometric phase error at SNR parameter k >= 0.

    p(phi) = exp(-k^2/2)/(2 pi)
           + k cos(phi) exp(-(k^2/2) sin^2 phi) (1 + erf(k cos(phi)/sqrt(2)))
             / sqrt(8 pi)

    supported on (-pi, pi]; k = 0 is the uniform density, large k
    concentrates like N(0, 1/k^2).
    """
    phi = np.asarray(phi, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if np.any(k < 0):
        raise ValueError("SNR parameter k must be nonnegative")
    c = np.cos(phi)
    s2 = np.sin(phi) ** 2
    return (np.exp(-0.5 * k ** 2) / (2.0 * pi)
            + k * c * np.exp(-0.5 * k ** 2 * s2)
            * (1.0 + nperf(k * c / sqrt(2.0))) / sqrt(8.0 * pi))


def _phase_noise_max(k):
    """Envelope height: the density's maximum, attained at phi = 0."""
    k = np.asarray(k, dtype=np.float64)
    return (np.exp(-0.5 * k ** 2) / (2.0 * pi)
            + k * (1.0 + nperf(k / sqrt(2.0))) / sqrt(8.0 * pi))


def sample_phase_noise(k, rng: np.random.Generator, size=None):
    """Phase-error draws via rejection from a uniform envelope on (-pi, pi].

    ``k`` broadcasts against ``size``; scalar k with size=None returns a
    scalar. The envelope is the uniform density scaled to the pdf maximum
    (at phi = 0), so acceptance degrades as ~1/k for large k.
    """
    scalar = size is None and np.ndim(k) == 0
    if size is None:
        size = (1,) if scalar else np.shape(k)
    kb = np.broadcast_to(np.asarray(k, dtype=np.float64), size)
    m = _phase_noise_max(kb)
    out = np.empty(size, dtype=np.float64)
    todo = np.ones(size, dtype=bool)
    while np.any(todo):
        n = int(todo.sum())
        cand = rng.uniform(-pi, pi, size=n)
        height = rng.uniform(0.0, 1.0, size=n) * m[todo]
        ok = height <= phase_noise_pdf(cand, kb[todo])
        idx = np.nonzero(todo)
        sel = tuple(a[ok] for a in idx)
        out[sel] = cand[ok]
        todo[sel] = False
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class TruncatedGaussianMeasurement:
    """Additive truncated Gaussian noise at sigma = sigma_frac * u_scale."""

    sigma_frac: float
    kind = "truncated_gaussian"

    def __post_init__(self):
        if self.sigma_frac < 0:
            raise ValueError(f"sigma_frac must be nonnegative, got {self.sigma_frac}")

    def apply(self, u: ScalarField2D, rng: np.random.Generator,
              u_scale: float = 1.0) -> ScalarField2D:
        sigma = self.sigma_frac * u_scale
        noise = sample_truncated_gaussian(sigma, rng, u.data.shape)
        return u.with_data(u.data + noise)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma_frac": self.sigma_frac}


@dataclass(frozen=True)
class WrappedPhaseMeasurement:
    """Interferometric readout: phase conversion, depth-dependent phase
    noise, then wrapping onto (-pi, pi].

    ``k_profile`` is either a scalar SNR or a per-row table (length ny,
    row 0 = shallowest y) applied to every channel.
    """

    k_profile: tuple
    n_refract: float = 1.4
    wavelength: float = 8e-4  # mm
    kind = "wrapped_phase"

    def __post_init__(self):
        prof = np.atleast_1d(np.asarray(self.k_profile, dtype=np.float64))
        if np.any(prof < 0):
            raise ValueError("SNR profile must be nonnegative")
        object.__setattr__(self, "k_profile", tuple(float(v) for v in prof))

    def row_k(self, ny: int) -> np.ndarray:
        prof = np.asarray(self.k_profile)
        if prof.size == 1:
            return np.full(ny, prof[0])
        if prof.size != ny:
            raise ValueError(f"k_profile has {prof.size} rows, grid has {ny}")
        return prof

    def apply(self, u: ScalarField2D, rng: np.random.Generator,
              u_scale: float = 1.0) -> ScalarField2D:
        phi = phase_from_displacement(u.data, self.n_refract, self.wavelength)
        k = self.row_k(u.grid.ny)[None, :, None]
        noise = sample_phase_noise(np.broadcast_to(k, phi.shape), rng)
        return u.with_data(wrap_phase(phi + noise))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k_profile": list(self.k_profile),
                "n_refract": self.n_refract, "wavelength": self.wavelength}


def measurement_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "truncated_gaussian":
        return TruncatedGaussianMeasurement(sigma_frac=float(d["sigma_frac"]))
    if kind == "wrapped_phase":
        return WrappedPhaseMeasurement(k_profile=tuple(d["k_profile"]),
                                       n_refract=float(d.get("n_refract", 1.4)),
                                       wavelength=float(d.get("wavelength", 8e-4)))
    raise ValueError(f"unknown measurement kind {kind!r}")
