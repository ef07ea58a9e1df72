"""Forward-operator wrappers and the measurement composition.

A physics object maps a modulus field to the noiseless measured channels
(solver plus channel selection); a measurement model then adds sensor
effects. ``forward_measure`` is the single entry point realizing
y = F(x; eta) used by dataset generation and by the oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elasticity import ElastostaticSetup, solve_elastostatic
from .errors import ShapeMismatchError
from .fields import Grid2D, ScalarField2D
from .helmholtz import HelmholtzSetup, solve_helmholtz


@dataclass(frozen=True)
class ElastostaticPhysics:
    """Compression test; measures the vertical displacement by default
    (component 'uy'; 'ux' and 'both' are available)."""

    setup: ElastostaticSetup = ElastostaticSetup()
    component: str = "uy"
    kind = "elastostatic"

    def __post_init__(self):
        if self.component not in ("ux", "uy", "both"):
            raise ValueError(f"component must be ux/uy/both, got {self.component!r}")

    @property
    def out_channels(self) -> int:
        return 2 if self.component == "both" else 1

    def predict(self, modulus: ScalarField2D) -> ScalarField2D:
        u = solve_elastostatic(modulus, self.setup)
        if self.component == "both":
            return u
        ch = 0 if self.component == "ux" else 1
        return ScalarField2D(u.grid, u.data[ch:ch + 1])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "component": self.component, **self.setup.to_dict()}


@dataclass(frozen=True)
class HelmholtzPhysics:
    """Time-harmonic shear-wave field; measures both quadratures (u_R, u_I)."""

    setup: HelmholtzSetup = HelmholtzSetup()
    kind = "helmholtz"
    out_channels = 2

    def predict(self, modulus: ScalarField2D) -> ScalarField2D:
        return solve_helmholtz(modulus, self.setup)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.setup.to_dict()}


class LinearPhysics:
    """y = A x on flattened pixels; the conjugate-posterior validation model."""

    kind = "linear"

    def __init__(self, matrix: np.ndarray, grid: Grid2D, out_channels: int = 1):
        matrix = np.asarray(matrix, dtype=np.float64)
        n = grid.n_pixels
        if matrix.shape[1] != n or matrix.shape[0] != out_channels * n:
            raise ShapeMismatchError(
                f"matrix {matrix.shape} incompatible with {n} pixels "
                f"and {out_channels} output channels")
        self.matrix = matrix
        self.grid = grid
        self.out_channels = out_channels

    def predict(self, modulus: ScalarField2D) -> ScalarField2D:
        if modulus.grid != self.grid or modulus.channels != 1:
            raise ShapeMismatchError("LinearPhysics is bound to its construction grid")
        y = self.matrix @ modulus.data.ravel()
        return ScalarField2D(self.grid, y.reshape(self.out_channels, self.grid.ny, self.grid.nx))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "out_channels": self.out_channels}


def forward_measure(modulus: ScalarField2D, physics, measurement,
                    rng: np.random.Generator, u_scale: float = 1.0) -> ScalarField2D:
    """One realization of the measurement y = F(x; eta)."""
    return measurement.apply(physics.predict(modulus), rng, u_scale=u_scale)
