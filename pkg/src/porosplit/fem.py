"""Q1 finite-element assembly of the mechanics blocks.

Displacement degrees of freedom are interleaved per node: dof = node * dim + component.
Pressure is piecewise constant per cell, so the coupling block maps nodal
displacements to cell-integrated divergence.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sps

from .grid import StructuredGrid

logger = logging.getLogger(__name__)

_GAUSS = (-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0))


@dataclass(frozen=True, eq=False)
class DirichletSet:
    """Constrained displacement dofs and their prescribed values (m)."""

    dofs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        dofs = np.asarray(self.dofs, dtype=np.int64)
        if np.unique(dofs).size != dofs.size:
            raise ValueError("duplicate (node, component) entries in Dirichlet set")
        object.__setattr__(self, "dofs", dofs)
        object.__setattr__(self, "values", np.broadcast_to(np.asarray(self.values, dtype=float), dofs.shape).copy())

    @classmethod
    def empty(cls) -> "DirichletSet":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0))

    @classmethod
    def from_entries(cls, grid: StructuredGrid, entries) -> "DirichletSet":
        """Merge ``(nodes, component, value)`` entries; later entries override earlier ones."""
        prescribed: dict[int, float] = {}
        for nodes, comp, value in entries:
            for n in np.atleast_1d(nodes):
                prescribed[int(n) * grid.dim + int(comp)] = float(value)
        dofs = np.array(sorted(prescribed), dtype=np.int64)
        return cls(dofs, np.array([prescribed[d] for d in dofs]))

    def mask(self, num_dofs: int) -> np.ndarray:
        m = np.zeros(num_dofs, dtype=bool)
        m[self.dofs] = True
        return m

    def __len__(self) -> int:
        return int(self.dofs.size)


def sliding_boundaries(grid: StructuredGrid, planes: Sequence[tuple[int, int]] | None = None) -> DirichletSet:
    """Zero normal displacement on boundary planes given as (axis, side); all planes when omitted."""
    if planes is None:
        planes = [(a, s) for a in range(grid.dim) for s in (0, 1)]
    return DirichletSet.from_entries(grid, [(grid.boundary_nodes(a, s), a, 0.0) for a, s in planes])


@dataclass(frozen=True)
class Traction:
    """Uniform traction (Pa) on the boundary plane x_axis = at."""

    axis: int
    at: float
    value: tuple[float, ...]


def _element_templates(h: Sequence[float]):
    """Reference element arrays for a box of size h.

    Returns (K_lambda, K_shear, div_vector) such that the element stiffness is
    lambda * K_lambda + G * K_shear and the element divergence integral is
    div_vector . u_e.
    """
    dim = len(h)
    nen = 2**dim
    ndof = nen * dim
    corners = np.array(list(itertools.product((0, 1), repeat=dim)))[:, ::-1]  # x fastest
    signs = 2 * corners - 1
    det_j = float(np.prod(h)) / 2**dim  # 2D: unit depth
    nvoigt = 3 if dim == 2 else 6
    shear_pairs = [(0, 1)] if dim == 2 else [(1, 2), (0, 2), (0, 1)]
    weights = np.diag([2.0] * dim + [1.0] * len(shear_pairs))

    k_lam = np.zeros((ndof, ndof))
    k_shear = np.zeros((ndof, ndof))
    div_vec = np.zeros(ndof)
    for xi in itertools.product(_GAUSS, repeat=dim):
        xi = np.array(xi)
        grads = np.empty((nen, dim))
        for i in range(nen):
            for a in range(dim):
                g = 0.5 * signs[i, a]
                for b in range(dim):
                    if b != a:
                        g *= 0.5 * (1.0 + signs[i, b] * xi[b])
                grads[i, a] = g * 2.0 / h[a]
        bmat = np.zeros((nvoigt, ndof))
        for i in range(nen):
            for a in range(dim):
                bmat[a, i * dim + a] = grads[i, a]
            for s, (a, b) in enumerate(shear_pairs):
                bmat[dim + s, i * dim + a] = grads[i, b]
                bmat[dim + s, i * dim + b] = grads[i, a]
        div = grads.reshape(-1)  # d/dx_a of component a at dof i*dim+a
        k_lam += np.outer(div, div) * det_j
        k_shear += bmat.T @ weights @ bmat * det_j
        div_vec += div * det_j
    return k_lam, k_shear, div_vec


def element_stiffness(h: Sequence[float], lam: float, shear: float) -> np.ndarray:
    k_lam, k_shear, _ = _element_templates(h)
    return lam * k_lam + shear * k_shear


def _cell_dofs(grid: StructuredGrid) -> np.ndarray:
    nodes = grid.cell_nodes()
    dim = grid.dim
    return (nodes[:, :, None] * dim + np.arange(dim)[None, None, :]).reshape(grid.num_cells, -1)


def _finalize(mat: sps.spmatrix) -> sps.csr_matrix:
    mat = sps.csr_matrix(mat)
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def apply_dirichlet_rows_cols(A: sps.spmatrix, dirichlet: DirichletSet) -> sps.csr_matrix:
    """Symmetric elimination: zero constrained rows and columns, unit diagonal."""
    n = A.shape[0]
    keep = sps.diags((~dirichlet.mask(n)).astype(float))
    unit = sps.diags(dirichlet.mask(n).astype(float))
    return _finalize(keep @ A @ keep + unit)


def assemble_stiffness(grid: StructuredGrid, materials, dirichlet: DirichletSet | None = None) -> sps.csr_matrix:
    """Stiffness block A, with symmetric Dirichlet elimination when ``dirichlet`` is given."""
    k_lam, k_shear, _ = _element_templates(grid.spacing)
    lam = np.array([m.lame_lambda for m in materials])[grid.cell_regions]
    shear = np.array([m.shear_modulus for m in materials])[grid.cell_regions]
    dofs = _cell_dofs(grid)
    ndof = dofs.shape[1]
    vals = lam[:, None, None] * k_lam[None] + shear[:, None, None] * k_shear[None]
    rows = np.repeat(dofs, ndof, axis=1).ravel()
    cols = np.tile(dofs, (1, ndof)).ravel()
    n = grid.num_nodes * grid.dim
    A = _finalize(sps.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)))
    if dirichlet is None:
        return A
    if len(dirichlet) == 0:
        logger.warning("no displacement constraints: stiffness matrix is singular (rigid-body modes)")
        return A
    return apply_dirichlet_rows_cols(A, dirichlet)


def assemble_coupling(grid: StructuredGrid, materials, dirichlet: DirichletSet | None = None) -> sps.csr_matrix:
    """Coupling block B with B[K, j] = b_K * int_K div(psi_j)."""
    _, _, div_vec = _element_templates(grid.spacing)
    b = np.array([m.biot_coefficient for m in materials])[grid.cell_regions]
    dofs = _cell_dofs(grid)
    rows = np.repeat(np.arange(grid.num_cells), dofs.shape[1])
    vals = (b[:, None] * div_vec[None, :]).ravel()
    B = sps.coo_matrix((vals, (rows, dofs.ravel())), shape=(grid.num_cells, grid.num_nodes * grid.dim))
    if dirichlet is not None and len(dirichlet):
        B = B @ sps.diags((~dirichlet.mask(B.shape[1])).astype(float))
    return _finalize(B)


def assemble_mech_load(
    grid: StructuredGrid,
    materials,
    tractions: Sequence[Traction] = (),
    body_force: Sequence[float] | None = None,
) -> np.ndarray:
    """Consistent nodal loads from boundary tractions and a gravity body force.

    ``body_force`` is the gravitational acceleration vector (m/s^2); it is
    multiplied by each region's bulk density.
    """
    dim = grid.dim
    f = np.zeros(grid.num_nodes * dim)
    for tr in tractions:
        a = int(tr.axis)
        if np.isclose(tr.at, 0.0):
            side = 0
        elif np.isclose(tr.at, grid.extent[a]):
            side = 1
        else:
            raise ValueError(f"traction plane x{a}={tr.at} is not on the boundary")
        value = np.asarray(tr.value, dtype=float)
        if value.shape != (dim,):
            raise ValueError(f"traction must have {dim} components")
        on_side = (grid.bface_axis == a) & (grid.bface_side == side)
        cell_nodes = grid.cell_nodes()
        node_dims = grid.node_dims
        target = 0 if side == 0 else node_dims[a] - 1
        for c, area in zip(grid.bface_cell[on_side], grid.bface_area[on_side]):
            nodes = cell_nodes[c]
            coords = np.array(np.unravel_index(nodes, node_dims, order="F"))[a]
            face_nodes = nodes[coords == target]
            share = area / face_nodes.size
            for n in face_nodes:
                f[n * dim : n * dim + dim] += share * value
    if body_force is not None:
        g = np.asarray(body_force, dtype=float)[:dim]
        if np.any(g):
            rho = np.array([m.solid_density for m in materials])[grid.cell_regions]
            share = rho * grid.cell_volume / 2**dim
            nodes = grid.cell_nodes()
            for comp in range(dim):
                np.add.at(f, nodes * dim + comp, share[:, None] * g[comp])
    return f
