"""Plane-stress linear elasticity on bilinear quad elements.

Models the quasi-static compression of a soft incompressible specimen
(Poisson ratio 0.5 in the plane-stress reduction, which stays regular).
Each pixel of the shear-modulus field is one rectangular element; the
constitutive matrix scales linearly with the element modulus, so assembly
is a single scatter of a precomputed reference stiffness.

Boundary conditions reproduce the compression experiment:
  * bottom edge: zero vertical displacement, traction-free horizontally,
  * bottom-left corner: fully pinned (kills the horizontal rigid mode),
  * top edge: prescribed vertical displacement (downwards by default),
  * left/right edges: traction-free.

Displacements are returned at the pixel centers of the modulus grid,
channels (ux, uy).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonPositiveModulusError, SingularSystemError
from .fields import Grid2D, ScalarField2D


@dataclass(frozen=True)
class ElastostaticSetup:
    """Compression-test parameters: prescribed top displacement (same length
    unit as the grid) and in-plane Poisson ratio."""

    top_displacement: float = -0.01
    poisson: float = 0.5

    def to_dict(self) -> dict:
        return {"top_displacement": self.top_displacement, "poisson": self.poisson}


def _element_stiffness(dx: float, dy: float, poisson: float) -> np.ndarray:
    """8x8 stiffness of one rectangular bilinear quad at unit shear modulus.

    Plane stress: D = 2 mu / (1 - nu) * [[1, nu, 0], [nu, 1, 0],
    [0, 0, (1-nu)/2]]; 2x2 Gauss quadrature (exact for this integrand).
    """
    nu = poisson
    d1 = 2.0 / (1.0 - nu) * np.array([
        [1.0, nu, 0.0],
        [nu, 1.0, 0.0],
        [0.0, 0.0, (1.0 - nu) / 2.0],
    ])
    gp = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    ke = np.zeros((8, 8))
    for xi in gp:
        for eta in gp:
            # shape-function derivatives wrt (xi, eta); node order
            # (i,j), (i+1,j), (i+1,j+1), (i,j+1)
            dn_dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
            dn_deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
            dn_dx = dn_dxi * 2.0 / dx
            dn_dy = dn_deta * 2.0 / dy
            b = np.zeros((3, 8))
            b[0, 0::2] = dn_dx
            b[1, 1::2] = dn_dy
            b[2, 0::2] = dn_dy
            b[2, 1::2] = dn_dx
            ke += b.T @ d1 @ b * (dx * dy / 4.0)
    return ke


@lru_cache(maxsize=32)
def _grid_tables(nx: int, ny: int, dx: float, dy: float, poisson: float):
    """Precomputed per-grid assembly tables (element DOF map, scatter
    indices, constrained/free DOF partition)."""
    ke = _element_stiffness(dx, dy, poisson)
    nnx = nx + 1

    def node(i, j):
        return j * nnx + i

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    ii = ii.ravel(order="F")  # element order: row-major over (j, i)
    jj = jj.ravel(order="F")
    n00 = node(ii, jj)
    nodes = np.stack([n00, n00 + 1, n00 + 1 + nnx, n00 + nnx], axis=1)  # (ne, 4)
    dofs = np.empty((nodes.shape[0], 8), dtype=np.int64)
    dofs[:, 0::2] = 2 * nodes
    dofs[:, 1::2] = 2 * nodes + 1

    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()

    ndof = 2 * nnx * (ny + 1)
    bottom = np.array([node(i, 0) for i in range(nnx)])
    top = np.array([node(i, ny) for i in range(nnx)])
    fixed = np.concatenate([2 * bottom + 1, 2 * top + 1, [2 * node(0, 0)]])
    fixed_vals_unit = np.concatenate([
        np.zeros(nnx),          # bottom uy = 0
        np.ones(nnx),           # top uy = delta (filled in later)
        [0.0],                  # corner ux = 0
    ])
    mask = np.ones(ndof, dtype=bool)
    mask[fixed] = False
    free = np.nonzero(mask)[0]
    return ke, dofs, rows, cols, ndof, fixed, fixed_vals_unit, free


def solve_elastostatic(modulus: ScalarField2D, setup: ElastostaticSetup = ElastostaticSetup()) -> ScalarField2D:
    """Displacement field (ux, uy) at pixel centers for a given modulus map."""
    if modulus.channels != 1:
        raise ValueError(f"expected a 1-channel modulus field, got {modulus.channels}")
    mu = modulus.data[0]
    if np.any(mu <= 0):
        raise NonPositiveModulusError("shear modulus must be strictly positive everywhere")
    grid = modulus.grid
    ke, dofs, rows, cols, ndof, fixed, fvu, free = _grid_tables(
        grid.nx, grid.ny, grid.dx, grid.dy, setup.poisson)

    mu_e = mu.ravel()  # element order matches node table: row-major (j, i)
    data = (mu_e[:, None] * ke.ravel()[None, :]).ravel()
    k = sp.coo_matrix((data, (rows, cols)), shape=(ndof, ndof)).tocsr()

    u = np.zeros(ndof)
    u[fixed] = fvu * setup.top_displacement
    rhs = -k[free][:, fixed] @ u[fixed]
    try:
        u_free = spla.spsolve(k[free][:, free].tocsc(), rhs)
    except RuntimeError as exc:  # raised by SuperLU on exactly singular systems
        raise SingularSystemError(f"elastostatic system could not be solved: {exc}") from None
    if not np.all(np.isfinite(u_free)):
        raise SingularSystemError("elastostatic solve produced non-finite values")
    u[free] = u_free

    ux = u[0::2].reshape(grid.ny + 1, grid.nx + 1)
    uy = u[1::2].reshape(grid.ny + 1, grid.nx + 1)

    def at_centers(w):
        return 0.25 * (w[:-1, :-1] + w[:-1, 1:] + w[1:, :-1] + w[1:, 1:])

    out = np.stack([at_centers(ux), at_centers(uy)])
    return ScalarField2D(grid, out)
