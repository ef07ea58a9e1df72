"""Annealed Langevin posterior sampling and its step-size diagnostic.

Chains start from U(0,1) per component and descend the noise ladder; at
level sigma_i the step size is alpha_i = eps * sigma_i^2 / sigma_L^2 and T
Langevin updates x <- x + alpha_i s(x, sigma_i) + sqrt(2 alpha_i) z are
applied, followed by a single denoising step x <- x + sigma_L^2 s(x,
sigma_L) after the last level.

``check_epsilon`` evaluates the step-size tuning statistic

    (1 - eps/sigma_L^2)^(2T) (gamma^2 - 2 eps / D) + 2 eps / D

whose value should sit near 1. The default D = sigma_L^2 - sigma_L^2 (1 -
eps/sigma_L^2)^2 keeps the statistic consistent with its derivation (it is
the variance denominator of the within-level stationary recursion); the
variant D = sigma_L^2 - sigma_L^2 (1 - eps/sigma_L^2) = eps collapses the
second term to the constant 2 and is kept only under form="printed".

Every chain owns an RNG stream derived from (seed, chain index), so
results are independent of batching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadOrderingError, NonFiniteStateError, TooFewSamplesError
from .fields import minmax_invert
from .rng import derive_rng
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class SamplerConfig:
    epsilon: float
    steps_per_level: int = 5   # T
    n_samples: int = 1000
    batch_size: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise BadOrderingError(f"epsilon must be positive, got {self.epsilon}")
        if self.steps_per_level < 1 or self.n_samples < 1 or self.batch_size < 1:
            raise ValueError("steps_per_level, n_samples, batch_size must be positive")

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "steps_per_level": self.steps_per_level,
                "n_samples": self.n_samples, "batch_size": self.batch_size,
                "seed": self.seed}


def check_epsilon(eps: float, sigma_l: float, gamma: float, T: int,
                  form: str = "squared") -> float:
    """Step-size tuning statistic; ~1 for a well-chosen eps."""
    if eps <= 0:
        raise BadOrderingError(f"epsilon must be positive, got {eps}")
    if sigma_l <= 0 or gamma <= 1.0 or T < 1:
        raise BadOrderingError("need sigma_l > 0, gamma > 1, T >= 1")
    base = 1.0 - eps / sigma_l ** 2
    if form == "squared":
        denom = sigma_l ** 2 * (1.0 - base ** 2)
    elif form == "printed":
        denom = sigma_l ** 2 * (1.0 - base)
    else:
        raise ValueError(f"unknown form {form!r}")
    if denom == 0.0:
        raise BadOrderingError("epsilon too large: tuning denominator vanished")
    ratio = 2.0 * eps / denom
    return base ** (2 * T) * (gamma ** 2 - ratio) + ratio


def epsilon_grid_search(sigma_l: float, gamma: float, T: int,
                        num: int = 400, form: str = "squared") -> float:
    """Log-spaced grid search for the eps whose statistic is closest to 1."""
    grid = sigma_l ** 2 * np.logspace(-6, np.log10(1.9), num)
    vals = [abs(check_epsilon(float(e), sigma_l, gamma, T, form) - 1.0) for e in grid]
    return float(grid[int(np.argmin(vals))])


def annealed_langevin(score_fn, y_hat, schedule: NoiseSchedule,
                      config: SamplerConfig, shape: tuple) -> np.ndarray:
    """Draw ``config.n_samples`` chains of shape ``shape``.

    ``score_fn(x, y_hat, sigma)`` maps a batch (B, *shape) to scores of the
    same shape; ``y_hat`` (the conditioning measurement, normalized with the
    training statistics, or None for unconditional scores) is passed through
    untouched. Returns an (n_samples, *shape) array.
    """
    n = config.n_samples
    T = config.steps_per_level
    sigmas = schedule.as_array()
    sigma_l = schedule.sigmaL
    out = np.empty((n,) + tuple(shape), dtype=np.float64)

    for lo in range(0, n, config.batch_size):
        hi = min(lo + config.batch_size, n)
        gens = [derive_rng(config.seed, c) for c in range(lo, hi)]
        x = np.stack([g.uniform(0.0, 1.0, size=shape) for g in gens])
        for i, sigma in enumerate(sigmas):
            alpha = config.epsilon * sigma ** 2 / sigma_l ** 2
            # One block of noise per chain per level: each chain's stream is
            # consumed in a fixed order regardless of how chains are batched.
            noise = np.stack([g.standard_normal(size=(T,) + tuple(shape))
                              for g in gens])
            for t in range(T):
                x = (x + alpha * score_fn(x, y_hat, float(sigma))
                     + np.sqrt(2.0 * alpha) * noise[:, t])
                if not np.all(np.isfinite(x)) or np.abs(x).max() > 1e6:
                    raise NonFiniteStateError(
                        f"chain state diverged at level {i + 1}/{len(sigmas)} "
                        f"(sigma={sigma:.4g}), step {t + 1}")
        x = x + sigma_l ** 2 * score_fn(x, y_hat, float(sigma_l))
        out[lo:hi] = x
    return out


@dataclass(frozen=True)
class PosteriorSummary:
    """Pixelwise posterior mean and (population) standard deviation."""

    mean: np.ndarray
    std: np.ndarray
    n: int


def posterior_stats(samples: np.ndarray, stats=None) -> PosteriorSummary:
    """Mean and divide-by-n std over the sample axis; if ``stats`` (X-group
    NormalizationStats) is given, samples are mapped back to physical units
    first."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] < 2:
        raise TooFewSamplesError(
            f"need at least 2 samples for posterior statistics, got {samples.shape[0]}")
    if stats is not None:
        samples = minmax_invert(samples, stats)
    return PosteriorSummary(mean=samples.mean(axis=0),
                            std=samples.std(axis=0, ddof=0),
                            n=samples.shape[0])


def model_score_fn(model):
    """Adapt a ScoreModel to the sampler's score_fn convention (float64 in
    and out, measurement broadcast over the chain batch)."""

    def score(x, y_hat, sigma):
        y = None
        if y_hat is not None:
            y = np.ascontiguousarray(y_hat, dtype=np.float32)
            if y.ndim == 3:
                y = y[None]
        return model.score(x.astype(np.float32), y, sigma).astype(np.float64)

    return score
