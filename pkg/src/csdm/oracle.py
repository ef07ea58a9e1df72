"""Reference posteriors: self-normalized importance sampling over prior
ensembles, the conjugate linear-Gaussian closed form, and RMSE comparison
of posterior summaries.

Importance weights are Gaussian likelihoods of the observed measurement
given the noiseless forward prediction, w_i = exp(-||y - F(x_i)||^2 /
(2 sigma_eta^2)). They are handled in log-space with max-subtraction, so
results are invariant to rescaling all likelihoods by a constant and do
not underflow at residual scales of thousands.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (AllWeightsZeroError, ShapeMismatchError,
                     SingularCovarianceError, TooFewSamplesError)
from .fields import rmse
from .sampler import PosteriorSummary


@dataclass(frozen=True)
class WeightedEnsemble:
    """Prior draws with unnormalized importance weights."""

    latents: np.ndarray        # (n_s, k)
    fields: np.ndarray         # (n_s, C, H, W) quantity under the posterior
    log_weights: np.ndarray    # (n_s,) natural-log unnormalized weights
    weights: np.ndarray = field(init=False)  # max-subtracted, in (0, 1]

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=np.float64)
        if lw.ndim != 1 or lw.shape[0] != self.fields.shape[0]:
            raise ShapeMismatchError(
                f"log_weights shape {lw.shape} does not match "
                f"{self.fields.shape[0]} fields")
        if lw.shape[0] < 2:
            raise TooFewSamplesError(
                f"need at least 2 ensemble members, got {lw.shape[0]}")
        finite = np.isfinite(lw)
        if not finite.any():
            raise AllWeightsZeroError(
                "no finite log-weights: measurement is inconsistent with "
                "the prior ensemble")
        w = np.zeros_like(lw)
        w[finite] = np.exp(lw[finite] - lw[finite].max())
        if w.sum() == 0.0:
            raise AllWeightsZeroError("all importance weights underflowed")
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "weights", w)

    @property
    def n_s(self) -> int:
        return self.fields.shape[0]

    def normalized_weights(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def ess(self) -> float:
        w = self.weights
        return float(w.sum() ** 2 / np.sum(w ** 2))

    def posterior(self) -> PosteriorSummary:
        """Weighted mean and weighted (divide-by-sum, no Bessel correction)
        standard deviation of the fields."""
        w = self.normalized_weights()
        x = np.asarray(self.fields, dtype=np.float64)
        mean = np.tensordot(w, x, axes=(0, 0))
        var = np.tensordot(w, (x - mean[None]) ** 2, axes=(0, 0))
        return PosteriorSummary(mean=mean, std=np.sqrt(np.maximum(var, 0.0)),
                                n=self.n_s)


def _field_key(data: np.ndarray) -> bytes:
    return hashlib.blake2b(np.ascontiguousarray(data).tobytes(),
                           digest_size=16).digest()


def ensemble_predictions(moduli, physics) -> np.ndarray:
    """Noiseless measured channels F(x_i), one row per modulus field
    (sequence of ScalarField2D).

    Identical modulus fields (common for pixelized disk priors, where many
    sampled centers render to the same mask) are solved once and shared.
    """
    cache: dict[bytes, np.ndarray] = {}
    out = None
    for i, mod in enumerate(moduli):
        key = _field_key(mod.data)
        pred = cache.get(key)
        if pred is None:
            pred = physics.predict(mod).data.astype(np.float64)
            cache[key] = pred
        if out is None:
            out = np.empty((len(moduli),) + pred.shape, dtype=np.float64)
        out[i] = pred
    return out


def gaussian_log_weights(predictions: np.ndarray, y_obs: np.ndarray,
                         sigma_eta: float) -> np.ndarray:
    """log w_i = -||y_obs - F(x_i)||^2 / (2 sigma_eta^2), constants dropped."""
    if sigma_eta <= 0:
        raise ValueError(f"sigma_eta must be positive, got {sigma_eta}")
    preds = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(y_obs, dtype=np.float64)
    if preds.shape[1:] != y.shape:
        raise ShapeMismatchError(
            f"predictions {preds.shape[1:]} vs measurement {y.shape}")
    resid = preds - y[None]
    sq = resid.reshape(preds.shape[0], -1)
    return -0.5 * np.einsum("ij,ij->i", sq, sq) / sigma_eta ** 2


def importance_posterior(latents: np.ndarray, fields: np.ndarray,
                         y_obs: np.ndarray, sigma_eta: float,
                         physics=None, moduli: np.ndarray | None = None,
                         predictions: np.ndarray | None = None
                         ) -> tuple[PosteriorSummary, float, WeightedEnsemble]:
    """Self-normalized importance-sampling posterior of ``fields``.

    Either precomputed noiseless ``predictions`` or (``physics``,
    ``moduli``) must be supplied; passing predictions lets one ensemble be
    reweighted against many measurements or noise levels without repeating
    the forward solves. Returns (summary, effective sample size, ensemble).
    """
    if predictions is None:
        if physics is None or moduli is None:
            raise ValueError("need predictions, or physics together with moduli")
        predictions = ensemble_predictions(moduli, physics)
    log_w = gaussian_log_weights(predictions, y_obs, sigma_eta)
    ens = WeightedEnsemble(latents=np.asarray(latents),
                           fields=np.asarray(fields), log_weights=log_w)
    return ens.posterior(), ens.ess(), ens


@dataclass(frozen=True)
class AnalyticGaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray

    def marginal_std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def gaussian_linear_posterior(A: np.ndarray, prior_mean: np.ndarray,
                              prior_cov: np.ndarray, sigma: float,
                              y_obs: np.ndarray) -> AnalyticGaussianPosterior:
    """Exact posterior for y = A x + eta, x ~ N(mu0, Sigma0),
    eta ~ N(0, sigma^2 I):

        Sigma_post = (Sigma0^-1 + A^T A / sigma^2)^-1
        mu_post    = Sigma_post (Sigma0^-1 mu0 + A^T y / sigma^2)
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    A = np.asarray(A, dtype=np.float64)
    mu0 = np.asarray(prior_mean, dtype=np.float64).ravel()
    S0 = np.asarray(prior_cov, dtype=np.float64)
    y = np.asarray(y_obs, dtype=np.float64).ravel()
    if S0.shape != (mu0.size, mu0.size) or A.shape != (y.size, mu0.size):
        raise ShapeMismatchError(
            f"incompatible shapes: A {A.shape}, prior {S0.shape}, y {y.shape}")
    try:
        S0_inv = np.linalg.inv(S0)
        prec = S0_inv + A.T @ A / sigma ** 2
        cov = np.linalg.inv(prec)
        np.linalg.cholesky(0.5 * (cov + cov.T))
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(f"posterior covariance not SPD: {exc}")
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (S0_inv @ mu0 + A.T @ y / sigma ** 2)
    return AnalyticGaussianPosterior(mean=mean, cov=cov)


def compare_summaries(a: PosteriorSummary, b: PosteriorSummary
                      ) -> tuple[float, float]:
    """(RMSE of mean fields, RMSE of std fields)."""
    if np.shape(a.mean) != np.shape(b.mean):
        raise ShapeMismatchError(
            f"summary shapes differ: {np.shape(a.mean)} vs {np.shape(b.mean)}")
    return rmse(a.mean, b.mean), rmse(a.std, b.std)


def save_log_weights_csv(path, log_weights: np.ndarray) -> None:
    lw = np.asarray(log_weights, dtype=np.float64)
    rows = np.column_stack([np.arange(lw.size), lw])
    np.savetxt(path, rows, fmt=["%d", "%.17g"], delimiter=",",
               header="index,log_weight", comments="")
