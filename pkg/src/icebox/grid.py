"""Cell-centered finite-volume grids on a slab or a rectangle.

Fields live at cell centers and are plain ``numpy`` arrays ordered by
cell index; :func:`as_field` validates shape and finiteness.  The
diffusion operator uses two-point fluxes with arithmetic face averaging
of the conductivity; boundary heat exchange is a per-cell Robin term
weighted by the local surface measure.  The last coordinate axis is the
gravity axis.

The container elasticity enters through two scalars: the homogenized
stiffness ``K_Gamma`` and the reference height ``zeta_Gamma``, both
surface integrals of the local wall compliance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "build_grid",
    "as_field",
    "integrate_field",
    "stiffness_apply",
    "stiffness_tridiag",
    "stiffness_matrix",
    "boundary_exchange",
    "kgamma_from_elasticity",
    "pressure_recovery",
    "volume_from_pressure",
]


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid.

    ``faces_left/faces_right/face_trans`` describe interior faces:
    ``face_trans = area / distance`` is the two-point transmissibility
    without the conductivity factor.  ``boundary_*`` arrays list one
    entry per boundary face (corner cells appear once per touching
    side); ``boundary_h`` is the local heat-transfer weight.
    """

    dim: int
    shape: tuple
    extent: tuple
    spacing: tuple
    centers: np.ndarray        # (n_cells, dim)
    x3: np.ndarray             # gravity-axis coordinate per cell
    volumes: np.ndarray
    faces_left: np.ndarray
    faces_right: np.ndarray
    face_trans: np.ndarray
    boundary_cells: np.ndarray
    boundary_measure: np.ndarray
    boundary_h: np.ndarray
    boundary_pos: np.ndarray   # (n_boundary, dim) face midpoint coordinates

    @property
    def n_cells(self):
        return self.x3.size

    @property
    def n_boundary(self):
        return self.boundary_cells.size

    @property
    def total_volume(self):
        return float(self.volumes.sum())


def _resolve_h(h, positions):
    """Per-boundary-face heat-transfer weights from a scalar, array or callable."""
    x3 = positions[:, -1]
    if callable(h):
        vals = np.asarray(h(x3), dtype=float)
        vals = np.broadcast_to(vals, x3.shape).astype(float)
    else:
        vals = np.asarray(h, dtype=float)
        if vals.ndim == 0:
            vals = np.full(x3.shape, float(vals))
        elif vals.shape != x3.shape:
            raise ValueError(
                f"boundary weight list has length {vals.size}, grid has "
                f"{x3.size} boundary faces")
    if not np.all(np.isfinite(vals)) or np.any(vals < 0.0):
        raise ValueError("boundary heat-transfer weights must be finite and >= 0")
    return vals


def build_grid(dimension, extent, cells, h=1.0) -> Grid:
    """Build a uniform grid on ``[0, extent[0]] (x [0, extent[1]])``.

    Parameters
    ----------
    dimension : 1 or 2
    extent : sequence of physical side lengths, gravity axis last
    cells : sequence of cell counts per axis
    h : boundary heat-transfer weight; scalar, per-face array, or
        callable of the gravity-axis coordinate
    """
    extent = tuple(float(e) for e in np.atleast_1d(extent))
    cells = tuple(int(n) for n in np.atleast_1d(cells))
    if dimension not in (1, 2):
        raise ValueError("dimension must be 1 or 2")
    if len(extent) != dimension or len(cells) != dimension:
        raise ValueError("extent and cells must match the dimension")
    if any(e <= 0 for e in extent) or any(n < 1 for n in cells):
        raise ValueError("extents must be positive and cell counts >= 1")

    if dimension == 1:
        (H,), (n,) = extent, cells
        dx = H / n
        x = (np.arange(n) + 0.5) * dx
        centers = x[:, None]
        volumes = np.full(n, dx)
        fl = np.arange(n - 1)
        fr = fl + 1
        trans = np.full(n - 1, 1.0 / dx)
        bcells = np.array([0, n - 1])
        bmeas = np.array([1.0, 1.0])
        bpos = np.array([[0.0], [H]])
        return Grid(1, (n,), extent, (dx,), centers, x, volumes,
                    fl, fr, trans, bcells, bmeas,
                    _resolve_h(h, bpos), bpos)

    (Lx, H), (nx, ny) = extent, cells
    dx, dy = Lx / nx, H / ny
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ix, iy = ix.ravel(), iy.ravel()          # index = iy*nx + ix
    xs = (ix + 0.5) * dx
    ys = (iy + 0.5) * dy
    centers = np.column_stack([xs, ys])
    volumes = np.full(nx * ny, dx * dy)

    fl, fr, trans = [], [], []
    # faces normal to x
    for j in range(ny):
        base = j * nx
        fl.append(np.arange(base, base + nx - 1))
        fr.append(np.arange(base + 1, base + nx))
        trans.append(np.full(nx - 1, dy / dx))
    # faces normal to y
    for j in range(ny - 1):
        fl.append(np.arange(j * nx, (j + 1) * nx))
        fr.append(np.arange((j + 1) * nx, (j + 2) * nx))
        trans.append(np.full(nx, dx / dy))
    fl = np.concatenate(fl) if fl else np.zeros(0, int)
    fr = np.concatenate(fr) if fr else np.zeros(0, int)
    trans = np.concatenate(trans) if trans else np.zeros(0)

    bcells, bmeas, bpos = [], [], []
    # left and right walls
    for side_x, col in ((0.0, 0), (Lx, nx - 1)):
        idx = col + nx * np.arange(ny)
        bcells.append(idx)
        bmeas.append(np.full(ny, dy))
        bpos.append(np.column_stack([np.full(ny, side_x), ys[idx]]))
    # bottom and top walls
    for side_y, row in ((0.0, 0), (H, ny - 1)):
        idx = np.arange(nx) + nx * row
        bcells.append(idx)
        bmeas.append(np.full(nx, dx))
        bpos.append(np.column_stack([xs[idx], np.full(nx, side_y)]))
    bcells = np.concatenate(bcells)
    bmeas = np.concatenate(bmeas)
    bpos = np.vstack(bpos)
    return Grid(2, (nx, ny), extent, (dx, dy), centers, ys, volumes,
                fl, fr, trans, bcells, bmeas, _resolve_h(h, bpos), bpos)


def as_field(grid: Grid, values) -> np.ndarray:
    """Validate and return a cell field as a float array."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 0:
        v = np.full(grid.n_cells, float(v))
    if v.shape != (grid.n_cells,):
        raise ValueError(f"field has shape {v.shape}, expected ({grid.n_cells},)")
    if not np.all(np.isfinite(v)):
        raise ValueError("field contains non-finite values")
    return v


def integrate_field(grid: Grid, values) -> float:
    """Midpoint-rule volume integral of a cell field."""
    v = np.asarray(values, dtype=float)
    if v.shape != (grid.n_cells,):
        raise ValueError(f"field has shape {v.shape}, expected ({grid.n_cells},)")
    return float(v @ grid.volumes)


def _face_kappa(grid, kappa_cells):
    k = np.asarray(kappa_cells, dtype=float)
    if k.shape != (grid.n_cells,):
        raise ValueError("conductivity field has wrong shape")
    if np.any(k <= 0.0) or not np.all(np.isfinite(k)):
        raise ValueError("conductivity must be positive and finite")
    return 0.5 * (k[grid.faces_left] + k[grid.faces_right])


def stiffness_apply(grid: Grid, kappa_cells, theta) -> np.ndarray:
    """Apply the diffusion operator: row i gets sum of outward two-point fluxes."""
    th = np.asarray(theta, dtype=float)
    kf = _face_kappa(grid, kappa_cells) * grid.face_trans
    flux = kf * (th[grid.faces_left] - th[grid.faces_right])
    out = np.bincount(grid.faces_left, weights=flux, minlength=grid.n_cells)
    out -= np.bincount(grid.faces_right, weights=flux, minlength=grid.n_cells)
    return out


def stiffness_tridiag(grid: Grid, kappa_cells):
    """(lower, diag, upper) of the 1-d diffusion operator."""
    if grid.dim != 1:
        raise ValueError("tridiagonal form requires a 1-d grid")
    n = grid.n_cells
    kf = _face_kappa(grid, kappa_cells) * grid.face_trans
    diag = np.zeros(n)
    np.add.at(diag, grid.faces_left, kf)
    np.add.at(diag, grid.faces_right, kf)
    lower = np.zeros(n - 1)
    upper = np.zeros(n - 1)
    upper[grid.faces_left] = -kf
    lower[grid.faces_right - 1] = -kf
    return lower, diag, upper


def stiffness_matrix(grid: Grid, kappa_cells):
    """Sparse CSR diffusion operator (any dimension)."""
    from scipy import sparse
    kf = _face_kappa(grid, kappa_cells) * grid.face_trans
    n = grid.n_cells
    i = np.concatenate([grid.faces_left, grid.faces_right,
                        grid.faces_left, grid.faces_right])
    j = np.concatenate([grid.faces_left, grid.faces_right,
                        grid.faces_right, grid.faces_left])
    v = np.concatenate([kf, kf, -kf, -kf])
    return sparse.csr_matrix((v, (i, j)), shape=(n, n))


def boundary_exchange(grid: Grid, theta, theta_gamma):
    """Robin boundary term ``h (theta - theta_Gamma)`` per cell.

    Returns ``(contribution_field, total)`` where the field collects
    surface-weighted exchange into the touching cells and ``total`` is
    the discrete surface integral.
    """
    th = np.asarray(theta, dtype=float)
    tg = np.asarray(theta_gamma, dtype=float)
    if tg.ndim == 0:
        tg = np.full(grid.n_boundary, float(tg))
    if tg.shape != (grid.n_boundary,):
        raise ValueError(
            f"boundary temperature has shape {tg.shape}, expected "
            f"({grid.n_boundary},)")
    if not np.all(np.isfinite(tg)):
        raise ValueError("boundary temperature contains non-finite values")
    w = grid.boundary_h * grid.boundary_measure
    vals = w * (th[grid.boundary_cells] - tg)
    contrib = np.bincount(grid.boundary_cells, weights=vals,
                          minlength=grid.n_cells)
    return contrib, float(vals.sum())


def kgamma_from_elasticity(samples):
    """Homogenize wall compliance samples into ``(K_Gamma, zeta_Gamma)``.

    ``samples`` rows are ``(compliance, x3, surface_measure)`` where
    ``compliance`` is the normal-normal component of the inverse wall
    stiffness.  The container stiffness is the reciprocal of the total
    compliance; the reference height is the compliance-weighted mean of
    the gravity coordinate.
    """
    s = np.asarray(samples, dtype=float)
    if s.ndim != 2 or s.shape[1] != 3:
        raise ValueError("samples must be rows of (compliance, x3, measure)")
    a, x3, sigma = s[:, 0], s[:, 1], s[:, 2]
    if np.any(a <= 0.0) or np.any(sigma <= 0.0):
        raise ValueError("compliance and surface measures must be positive")
    inv_k = float(np.sum(a * sigma))
    K = 1.0 / inv_k
    zeta = K * float(np.sum(a * x3 * sigma))
    return K, zeta


def pressure_recovery(constants, U_Omega, P0) -> float:
    """Water pressure from the mean volume increment and outer pressure."""
    return float(constants.K_Gamma * (U_Omega + P0)
                 + constants.rho0 * constants.g * constants.zeta_Gamma)


def volume_from_pressure(constants, P, P0) -> float:
    """Inverse of :func:`pressure_recovery` (requires ``K_Gamma > 0``)."""
    if constants.K_Gamma <= 0.0:
        raise ValueError("volume recovery requires positive container stiffness")
    return float((P - constants.rho0 * constants.g * constants.zeta_Gamma)
                 / constants.K_Gamma - P0)
