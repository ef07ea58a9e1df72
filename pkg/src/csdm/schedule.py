"""Geometric noise schedules and the schedule-quality diagnostics.

The schedule is sigma_j = sigma_1 * gamma^-(j-1), j = 1..L, with gamma =
(sigma_1/sigma_L)^(1/(L-1)). ``check_gamma`` evaluates the level-overlap
statistic Phi(sqrt(2 n_X)(gamma - 1) + 3 gamma) - Phi(sqrt(2 n_X)(gamma -
1) - 3 gamma), which should sit near 0.5 for a well-spaced schedule;
``suggest_sigma1`` returns the largest pairwise distance in the training
set, the recommended top noise level.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import erf, sqrt

import numpy as np

from .errors import BadOrderingError, EmptyCollectionError


@dataclass(frozen=True)
class NoiseSchedule:
    """Descending geometric ladder of noise levels."""

    sigmas: tuple

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=np.float64)
        if s.size < 2:
            raise BadOrderingError("a schedule needs at least 2 levels")
        if np.any(s <= 0) or np.any(np.diff(s) >= 0):
            raise BadOrderingError("noise levels must be positive and strictly decreasing")
        object.__setattr__(self, "sigmas", tuple(float(v) for v in s))

    @property
    def L(self) -> int:
        return len(self.sigmas)

    @property
    def sigma1(self) -> float:
        return self.sigmas[0]

    @property
    def sigmaL(self) -> float:
        return self.sigmas[-1]

    @property
    def gamma(self) -> float:
        return self.sigmas[0] / self.sigmas[1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.sigmas, dtype=np.float64)

    def to_dict(self) -> dict:
        return {"sigma1": self.sigma1, "sigmaL": self.sigmaL, "L": self.L}


def make_schedule(sigma1: float, sigmaL: float, L: int) -> NoiseSchedule:
    if L < 2:
        raise BadOrderingError(f"need at least 2 levels, got L={L}")
    if not (sigma1 > sigmaL > 0):
        raise BadOrderingError(
            f"levels must satisfy sigma1 > sigmaL > 0, got {sigma1}, {sigmaL}")
    j = np.arange(L)
    sigmas = sigma1 * (sigmaL / sigma1) ** (j / (L - 1))
    return NoiseSchedule(sigmas=tuple(sigmas))


def _phi(t: float) -> float:
    return 0.5 * (1.0 + erf(t / sqrt(2.0)))


def check_gamma(gamma: float, n_x: int) -> float:
    """Overlap statistic for consecutive levels at dimension n_x."""
    if gamma <= 1.0:
        raise BadOrderingError(f"gamma must exceed 1, got {gamma}")
    if n_x < 1:
        raise ValueError(f"n_x must be positive, got {n_x}")
    a = sqrt(2.0 * n_x) * (gamma - 1.0)
    return _phi(a + 3.0 * gamma) - _phi(a - 3.0 * gamma)


def suggest_sigma1(x: np.ndarray, max_points: int = 2000, seed: int = 0) -> float:
    """Largest pairwise Euclidean distance between (flattened) x samples.

    Exact up to ``max_points`` samples; beyond that a seeded subsample of
    that size is used.
    """
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    if len(x) < 2:
        raise EmptyCollectionError("need at least 2 samples to suggest sigma1")
    if len(x) > max_points:
        idx = np.random.Generator(np.random.PCG64(seed)).choice(
            len(x), size=max_points, replace=False)
        x = x[idx]
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    return float(np.sqrt(max(d2.max(), 0.0)))
