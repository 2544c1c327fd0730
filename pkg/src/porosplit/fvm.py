"""Cell-centered finite-volume blocks of the flow equation.

All flow blocks act on the pressure increment p^{n+1} - p^n of one backward
Euler step and are volumetric: a row of the mass balance is in m^3.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sps

from .grid import StructuredGrid, boundary_transmissibilities, stabilization_volumes, transmissibilities
from .materials import optimal_tau


@dataclass(frozen=True)
class PressureBC:
    """Fixed pressure (Pa) on the boundary plane (axis, side), imposed through a ghost half-transmissibility."""

    axis: int
    side: int
    value: float = 0.0


@dataclass(eq=False)
class BlockSystem:
    """Blocks of one incremental step: [[A, -B^T], [B, C + S]] [du; dp] = [Q_u; Q_p].

    ``R`` is the fixed-stress diagonal, stored as a vector.
    """

    A: sps.csr_matrix
    B: sps.csr_matrix
    C: sps.csr_matrix
    T: sps.csr_matrix
    M_acc: sps.csr_matrix
    R: np.ndarray
    S: sps.csr_matrix
    Q_u: np.ndarray
    Q_p: np.ndarray
    dt: float

    @property
    def num_u(self) -> int:
        return self.A.shape[0]

    @property
    def num_p(self) -> int:
        return self.C.shape[0]


def _finalize(mat) -> sps.csr_matrix:
    mat = sps.csr_matrix(mat)
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def face_laplacian(num_cells: int, cells: np.ndarray, weights: np.ndarray) -> sps.csr_matrix:
    """Graph Laplacian sum_f w_f (e_L - e_R)(e_L - e_R)^T over the given faces."""
    l, r = cells[:, 0], cells[:, 1]
    rows = np.concatenate([l, r, l, r])
    cols = np.concatenate([l, r, r, l])
    vals = np.concatenate([weights, weights, -weights, -weights])
    return _finalize(sps.coo_matrix((vals, (rows, cols)), shape=(num_cells, num_cells)))


def transmissibility_matrix(grid: StructuredGrid, materials) -> sps.csr_matrix:
    """Interior-face TPFA operator: T[K,L] = -t_f, T[K,K] = sum of adjacent t_f."""
    return face_laplacian(grid.num_cells, grid.face_cells, transmissibilities(grid, materials))


def boundary_flow_terms(grid: StructuredGrid, materials, pressure_bcs: Sequence[PressureBC] = ()):
    """Diagonal ghost transmissibility per cell and the matching t * p_bc vector."""
    diag = np.zeros(grid.num_cells)
    drive = np.zeros(grid.num_cells)
    if not pressure_bcs:
        return diag, drive
    half = boundary_transmissibilities(grid, materials)
    for bc in pressure_bcs:
        sel = (grid.bface_axis == bc.axis) & (grid.bface_side == bc.side)
        np.add.at(diag, grid.bface_cell[sel], half[sel])
        np.add.at(drive, grid.bface_cell[sel], half[sel] * bc.value)
    return diag, drive


def accumulation_matrix(grid: StructuredGrid, materials) -> sps.csr_matrix:
    inv_m = np.array([m.inv_biot_modulus for m in materials])[grid.cell_regions]
    return _finalize(sps.diags(grid.cell_volume * inv_m))


def assemble_flow(
    grid: StructuredGrid,
    materials,
    dt: float,
    sources: np.ndarray | None = None,
    p_prev: np.ndarray | None = None,
    pressure_bcs: Sequence[PressureBC] = (),
):
    """Return (C, T, M_acc, Q_p) for one step of size ``dt``.

    ``sources`` are volumetric rates (m^3/s) per cell sampled at t^{n+1};
    ``T`` includes ghost transmissibilities of pressure-constrained boundary faces.
    """
    if not dt > 0:
        raise ValueError(f"time step must be > 0, got {dt}")
    n = grid.num_cells
    bdiag, bdrive = boundary_flow_terms(grid, materials, pressure_bcs)
    T = _finalize(transmissibility_matrix(grid, materials) + sps.diags(bdiag))
    M_acc = accumulation_matrix(grid, materials)
    C = _finalize(M_acc + dt * T)
    q = np.zeros(n) if sources is None else np.asarray(sources, dtype=float)
    p_prev = np.zeros(n) if p_prev is None else np.asarray(p_prev, dtype=float)
    Q_p = dt * q - dt * (T @ p_prev) + dt * bdrive
    return C, T, M_acc, Q_p


def assemble_fixed_stress_diagonal(grid: StructuredGrid, materials, alpha: float) -> np.ndarray:
    """Diagonal alpha * V_K * b^2 / K_dr per cell."""
    b = np.array([m.biot_coefficient for m in materials])
    k_dr = np.array([m.bulk_modulus for m in materials])
    per_region = b**2 / k_dr
    return alpha * grid.cell_volume * per_region[grid.cell_regions]


def stabilized_faces(grid: StructuredGrid, stab_region: Iterable[int] | None) -> np.ndarray:
    """Boolean mask of interior faces whose two cells both lie in ``stab_region`` (None means every cell)."""
    if stab_region is None:
        return np.ones(grid.num_interior_faces, dtype=bool)
    regions = set(int(r) for r in stab_region)
    known = set(np.unique(grid.cell_regions).tolist())
    unknown = regions - known
    if unknown:
        raise ValueError(f"unknown stabilization region id(s): {sorted(unknown)}")
    inside = np.isin(grid.cell_regions, sorted(regions))
    return inside[grid.face_cells[:, 0]] & inside[grid.face_cells[:, 1]]


def face_tau(grid: StructuredGrid, materials, c: float) -> np.ndarray:
    """c * tau* per interior face with harmonic-mean Lame parameters of the two cells."""
    lam = np.array([m.lame_lambda for m in materials])[grid.cell_regions]
    shear = np.array([m.shear_modulus for m in materials])[grid.cell_regions]
    l, r = grid.face_cells[:, 0], grid.face_cells[:, 1]

    def hmean(x):
        a, b = x[l], x[r]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(a + b > 0, 2.0 * a * b / np.where(a + b > 0, a + b, 1.0), 0.0)

    return c * optimal_tau(hmean(lam), hmean(shear))


def assemble_stabilization(grid: StructuredGrid, materials, stab_region: Iterable[int] | None, c: float = 1.0) -> sps.csr_matrix:
    """Pressure-jump stabilization S acting on the pressure increment."""
    if c < 0:
        raise ValueError(f"stabilization coefficient must be >= 0, got {c}")
    mask = stabilized_faces(grid, stab_region)
    if c == 0 or not mask.any():
        return sps.csr_matrix((grid.num_cells, grid.num_cells))
    weights = face_tau(grid, materials, c)[mask] * stabilization_volumes(grid)[mask]
    return face_laplacian(grid.num_cells, grid.face_cells[mask], weights)
