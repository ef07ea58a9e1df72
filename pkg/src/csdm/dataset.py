"""Synthetic training data: generation, normalization, persistence.

A dataset holds N iid triples (latent, x, y): the prior latent, the
log-rescaled modulus contrast normalized to [0, 1], and the measured field
normalized to [0, 1]. Normalization statistics, the displacement scale
u_max (used to convert fractional noise levels to absolute ones), and the
full generation recipe (prior/physics/measurement parameters + master
seed) live in the header, so a dataset can be regenerated bit-for-bit from
its header alone.

Per-record randomness comes from streams derived as (master seed, record
index, purpose), making generation order- and batch-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container
from .errors import (
    EmptyDatasetError,
    FractionOutOfRangeError,
)
from .fields import (
    Grid2D,
    NormalizationStats,
    ScalarField2D,
    log_rescale,
    minmax_apply,
    minmax_fit,
)
from .forward import ElastostaticPhysics, HelmholtzPhysics
from .elasticity import ElastostaticSetup
from .helmholtz import HelmholtzSetup
from .measurement import measurement_from_dict
from .priors import InclusionPriorFixed, InclusionPriorRich
from .rng import derive_rng

MAGIC = b"CSDM"

_PRIOR_STREAM = 0
_NOISE_STREAM = 1


@dataclass
class Dataset:
    """In-memory dataset: header dict + float32 arrays.

    ``x`` is (N, cx, ny, nx), ``y`` is (N, cy, ny, nx), ``latents`` is
    (N, latent_dim); all float32, x/y in normalized units.
    """

    header: dict
    latents: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def grid(self) -> Grid2D:
        return Grid2D.from_dict(self.header["grid"])

    @property
    def stats_x(self) -> NormalizationStats:
        return NormalizationStats.from_dict(self.header["stats_x"])

    @property
    def stats_y(self) -> NormalizationStats:
        return NormalizationStats.from_dict(self.header["stats_y"])

    @property
    def u_max(self) -> float:
        return float(self.header["u_max"])

    def x_field(self, i: int) -> ScalarField2D:
        return ScalarField2D(self.grid, self.x[i].astype(np.float64))

    def y_field(self, i: int) -> ScalarField2D:
        return ScalarField2D(self.grid, self.y[i].astype(np.float64))


@dataclass
class ArrayDataset:
    """Bare (x, y) arrays for analytic training tasks; no grid semantics."""

    x: np.ndarray
    y: np.ndarray


def transform_x(modulus: ScalarField2D, transform: str, ref: float) -> np.ndarray:
    if transform == "log10_ratio":
        return log_rescale(modulus, ref).data
    if transform == "identity":
        return modulus.data
    raise ValueError(f"unknown x transform {transform!r}")


def generate(prior, physics, measurement, n: int, seed: int, grid: Grid2D,
             x_transform: str = "auto") -> Dataset:
    """Draw N training triples and normalize them.

    Pass 1 renders priors and runs the noiseless forward model (fixing
    u_max); pass 2 applies measurement noise from per-record streams;
    normalization stats are fit jointly over the whole set per group.
    """
    if n <= 0:
        raise EmptyDatasetError(f"cannot generate a dataset with n={n}")
    if x_transform == "auto":
        x_transform = "log10_ratio" if getattr(prior, "background", None) else "identity"
    ref = float(getattr(prior, "background", 1.0)) if x_transform == "log10_ratio" else 1.0

    latents = []
    xs = []
    clean = []
    for i in range(n):
        s = prior.sample(derive_rng(seed, i, _PRIOR_STREAM), grid)
        latents.append(np.asarray(s.latent, dtype=np.float64))
        xs.append(transform_x(s.modulus, x_transform, ref))
        clean.append(physics.predict(s.modulus))
    u_max = float(max(np.abs(c.data).max() for c in clean))

    ys = []
    for i in range(n):
        y = measurement.apply(clean[i], derive_rng(seed, i, _NOISE_STREAM), u_scale=u_max)
        ys.append(y.data)

    stats_x = minmax_fit(xs, group="x")
    stats_y = minmax_fit(ys, group="y")
    x_arr = np.stack([minmax_apply(a, stats_x) for a in xs]).astype(np.float32)
    y_arr = np.stack([minmax_apply(a, stats_y) for a in ys]).astype(np.float32)
    lat_arr = np.stack(latents).astype(np.float32)

    header = {
        "content": "dataset",
        "n": n,
        "grid": grid.to_dict(),
        "latent_dim": lat_arr.shape[1],
        "x_channels": x_arr.shape[1],
        "y_channels": y_arr.shape[1],
        "x_transform": x_transform,
        "x_ref": ref,
        "stats_x": stats_x.to_dict(),
        "stats_y": stats_y.to_dict(),
        "u_max": u_max,
        "seed": int(seed),
        "prior": prior.to_dict(),
        "physics": physics.to_dict(),
        "measurement": measurement.to_dict(),
    }
    return Dataset(header=header, latents=lat_arr, x=x_arr, y=y_arr)


def prior_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "inclusion_fixed":
        return InclusionPriorFixed(side=d["side"], center_low=d["center_low"],
                                   center_high=d["center_high"], radius=d["radius"],
                                   background=d["background"], inclusion=d["inclusion"])
    if kind == "inclusion_rich":
        return InclusionPriorRich(**{k: v for k, v in d.items() if k != "kind"})
    raise ValueError(f"prior kind {kind!r} cannot be rebuilt from a header")


def physics_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "elastostatic":
        setup = ElastostaticSetup(top_displacement=d["top_displacement"],
                                  poisson=d["poisson"])
        return ElastostaticPhysics(setup=setup, component=d["component"])
    if kind == "helmholtz":
        setup = HelmholtzSetup(**{k: v for k, v in d.items() if k != "kind"})
        return HelmholtzPhysics(setup=setup)
    raise ValueError(f"physics kind {kind!r} cannot be rebuilt from a header")


def regenerate(header: dict) -> Dataset:
    """Rebuild a dataset from its own header; bitwise-identical records."""
    return generate(
        prior=prior_from_dict(header["prior"]),
        physics=physics_from_dict(header["physics"]),
        measurement=measurement_from_dict(header["measurement"]),
        n=int(header["n"]),
        seed=int(header["seed"]),
        grid=Grid2D.from_dict(header["grid"]),
        x_transform=header["x_transform"],
    )


def save(dataset: Dataset, path):
    n = dataset.n
    lat = np.ascontiguousarray(dataset.latents, dtype="<f4").reshape(n, -1)
    x = np.ascontiguousarray(dataset.x, dtype="<f4").reshape(n, -1)
    y = np.ascontiguousarray(dataset.y, dtype="<f4").reshape(n, -1)
    records = np.concatenate([lat, x, y], axis=1)
    container.write_container(path, MAGIC, dataset.header, records.tobytes())


def load(path) -> Dataset:
    header, payload = container.read_container(path, MAGIC)
    n = int(header["n"])
    if n == 0:
        raise EmptyDatasetError("dataset file holds zero records")
    grid = Grid2D.from_dict(header["grid"])
    ld = int(header["latent_dim"])
    cx = int(header["x_channels"])
    cy = int(header["y_channels"])
    npx = grid.n_pixels
    rec_len = ld + (cx + cy) * npx
    expected = n * rec_len * 4
    if len(payload) != expected:
        raise_corrupt(len(payload), expected)
    records = np.frombuffer(payload, dtype="<f4").reshape(n, rec_len)
    latents = records[:, :ld].copy()
    x = records[:, ld:ld + cx * npx].reshape(n, cx, grid.ny, grid.nx).copy()
    y = records[:, ld + cx * npx:].reshape(n, cy, grid.ny, grid.nx).copy()
    return Dataset(header=header, latents=latents, x=x, y=y)


def raise_corrupt(got: int, expected: int):
    from .errors import CorruptPayloadError
    raise CorruptPayloadError(f"payload holds {got} bytes, header implies {expected}")


def load_header(path) -> dict:
    """Header only; the record block is never read."""
    _, header, _ = container.read_header(path, MAGIC)
    return header


def split(dataset: Dataset, fraction: float) -> tuple[Dataset, Dataset]:
    """Deterministic contiguous split: first round(n * fraction) records and
    the rest. Both parts must be nonempty."""
    if not 0.0 < fraction < 1.0:
        raise FractionOutOfRangeError(f"split fraction must be in (0, 1), got {fraction}")
    n_a = int(round(dataset.n * fraction))
    if n_a == 0 or n_a == dataset.n:
        raise FractionOutOfRangeError(
            f"fraction {fraction} leaves an empty part for n={dataset.n}")

    def part(sl, m):
        hdr = dict(dataset.header)
        hdr["n"] = m
        return Dataset(header=hdr, latents=dataset.latents[sl],
                       x=dataset.x[sl], y=dataset.y[sl])

    return part(slice(0, n_a), n_a), part(slice(n_a, dataset.n), dataset.n - n_a)


def save_samples(path, samples: np.ndarray, grid: Grid2D, extra: dict):
    """Persist posterior draws (x-fields only) in the dataset container.

    ``extra`` should carry provenance, e.g. the source-measurement hash.
    """
    n = samples.shape[0]
    header = {
        "content": "samples",
        "n": n,
        "grid": grid.to_dict(),
        "latent_dim": 0,
        "x_channels": samples.shape[1],
        "y_channels": 0,
        **extra,
    }
    arr = np.ascontiguousarray(samples, dtype="<f4").reshape(n, -1)
    container.write_container(path, MAGIC, header, arr.tobytes())


def load_samples(path) -> tuple[dict, np.ndarray]:
    header, payload = container.read_container(path, MAGIC)
    if header.get("content") != "samples":
        raise ValueError("not a samples container")
    grid = Grid2D.from_dict(header["grid"])
    n = int(header["n"])
    cx = int(header["x_channels"])
    arr = np.frombuffer(payload, dtype="<f4").reshape(n, cx, grid.ny, grid.nx).copy()
    return header, arr
