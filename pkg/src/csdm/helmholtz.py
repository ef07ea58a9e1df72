"""Variable-coefficient Helmholtz solver for time-harmonic shear waves.

Solves  -omega^2 u - div( (mu/rho)(1 + i alpha omega) grad u ) = 0  for the
complex displacement phasor u = u_R + i u_I on a pixel grid, with Dirichlet
values prescribed on the outermost pixel ring. The discretization is the
conservative 5-point stencil with arithmetic face averages of the complex
coefficient, which keeps the operator complex-symmetric.

The public entry point embeds the imaging window in a larger padded domain
(homogeneous padding modulus) so that waves entering from the driven right
edge decay before re-entering the window; the solution is cropped back to
the window. Grids are in mm, moduli in kPa, rho in kg/m^3, omega in rad/s.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi, sqrt

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonPositiveModulusError, SingularSystemError
from .fields import Grid2D, ScalarField2D

_MM = 1e-3   # mm -> m
_KPA = 1e3   # kPa -> Pa


@dataclass(frozen=True)
class HelmholtzSetup:
    """Drive/padding parameters for the shear-wave experiment.

    ``omega=None`` picks the frequency at which the padding-modulus shear
    wavelength equals a quarter of the imaging-window side.
    """

    omega: float | None = None     # rad/s
    alpha: float = 5e-5            # s (viscous loss factor)
    rho: float = 1000.0            # kg/m^3
    pad_left: float = 2.6          # mm
    pad_top: float = 1.75          # mm
    pad_bottom: float = 1.75       # mm
    pad_right: float = 0.0         # mm
    pad_modulus: float = 0.1       # kPa
    bc_amplitude: float = 0.02     # right-edge drive, same unit as u

    def resolve_omega(self, window_side_mm: float) -> float:
        if self.omega is not None:
            return self.omega
        c_s = sqrt(self.pad_modulus * _KPA / self.rho)       # m/s
        wavelength = 0.25 * window_side_mm * _MM             # m
        return 2.0 * pi * c_s / wavelength

    def to_dict(self) -> dict:
        return {"omega": self.omega, "alpha": self.alpha, "rho": self.rho,
                "pad_left": self.pad_left, "pad_top": self.pad_top,
                "pad_bottom": self.pad_bottom, "pad_right": self.pad_right,
                "pad_modulus": self.pad_modulus, "bc_amplitude": self.bc_amplitude}


def helmholtz_matrix(c: np.ndarray, dx: float, dy: float, omega: float):
    """Assemble the 5-point operator on all pixels (no boundary conditions).

    ``c`` is the complex coefficient (mu/rho)(1 + i alpha omega) per pixel,
    shape (ny, nx). Returns a complex CSR matrix acting on the row-major
    flattened pixel vector. The matrix is complex-symmetric.
    """
    ny, nx = c.shape
    n = nx * ny
    idx = np.arange(n).reshape(ny, nx)

    diag = np.full((ny, nx), -omega ** 2, dtype=np.complex128)
    rows, cols, vals = [], [], []

    def couple(ia, ib, w):
        # flux coupling of strength w between pixel sets a and b
        rows.append(ia)
        cols.append(ib)
        vals.append(-w)

    # x-direction faces between (j, i) and (j, i+1)
    cf = 0.5 * (c[:, :-1] + c[:, 1:]) / dx ** 2
    a, b = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    w = cf.ravel()
    couple(a, b, w)
    couple(b, a, w)
    np.add.at(diag, (slice(None), slice(0, nx - 1)), cf)
    np.add.at(diag, (slice(None), slice(1, nx)), cf)

    # y-direction faces between (j, i) and (j+1, i)
    cf = 0.5 * (c[:-1, :] + c[1:, :]) / dy ** 2
    a, b = idx[:-1, :].ravel(), idx[1:, :].ravel()
    w = cf.ravel()
    couple(a, b, w)
    couple(b, a, w)
    diag[:-1, :] += cf
    diag[1:, :] += cf

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag.ravel())

    a = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n), dtype=np.complex128)
    return a.tocsr()


def solve_dirichlet(mu_pa: np.ndarray, dx_m: float, dy_m: float, omega: float,
                    alpha: float, rho: float, boundary: np.ndarray) -> np.ndarray:
    """Solve with the outermost pixel ring fixed to ``boundary`` values.

    ``mu_pa`` in Pa on the full (possibly padded) grid; ``boundary`` is a
    complex array of the same shape whose outer ring supplies the Dirichlet
    data. Returns the complex solution on the full grid.
    """
    if np.any(mu_pa <= 0):
        raise NonPositiveModulusError("shear modulus must be strictly positive everywhere")
    ny, nx = mu_pa.shape
    c = (mu_pa / rho) * (1.0 + 1j * alpha * omega)
    a = helmholtz_matrix(c, dx_m, dy_m, omega)

    interior = np.zeros((ny, nx), dtype=bool)
    interior[1:-1, 1:-1] = True
    interior = interior.ravel()
    ring = ~interior

    u = np.asarray(boundary, dtype=np.complex128).ravel().copy()
    u[interior] = 0.0
    rhs = -(a[interior][:, ring] @ u[ring])
    try:
        u_int = spla.spsolve(a[interior][:, interior].tocsc(), rhs)
    except RuntimeError as exc:
        raise SingularSystemError(f"Helmholtz system could not be solved: {exc}") from None
    if not np.all(np.isfinite(u_int)):
        raise SingularSystemError("Helmholtz solve produced non-finite values")
    u[interior] = u_int
    return u.reshape(ny, nx)


def pad_pixels(setup: HelmholtzSetup, grid: Grid2D) -> tuple[int, int, int, int]:
    """Padding extents in whole pixels (left, right, bottom, top)."""
    return (int(round(setup.pad_left / grid.dx)),
            int(round(setup.pad_right / grid.dx)),
            int(round(setup.pad_bottom / grid.dy)),
            int(round(setup.pad_top / grid.dy)))


def solve_helmholtz(modulus: ScalarField2D, setup: HelmholtzSetup = HelmholtzSetup()) -> ScalarField2D:
    """Complex shear-wave field (u_R, u_I) on the imaging window.

    The window's modulus map is embedded in homogeneous padding, the padded
    right edge is driven with a real displacement of ``bc_amplitude`` (all
    other padded edges held at zero), and the solution is cropped back to
    the window grid.
    """
    if modulus.channels != 1:
        raise ValueError(f"expected a 1-channel modulus field, got {modulus.channels}")
    grid = modulus.grid
    pl, pr, pb, pt = pad_pixels(setup, grid)

    mu = np.full((pb + grid.ny + pt, pl + grid.nx + pr),
                 setup.pad_modulus * _KPA)
    mu[pb:pb + grid.ny, pl:pl + grid.nx] = modulus.data[0] * _KPA

    omega = setup.resolve_omega(grid.nx * grid.dx)
    boundary = np.zeros(mu.shape, dtype=np.complex128)
    boundary[:, -1] = setup.bc_amplitude

    u = solve_dirichlet(mu, grid.dx * _MM, grid.dy * _MM, omega,
                        setup.alpha, setup.rho, boundary)
    win = u[pb:pb + grid.ny, pl:pl + grid.nx]
    return ScalarField2D(grid, np.stack([win.real, win.imag]))
