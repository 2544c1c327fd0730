"""Tensor-product structured grids for 2D quadrilateral and 3D hexahedral meshes.

Cells and nodes are numbered with the x index running fastest. A 2D grid is a
unit-depth slab: face areas and cell volumes carry a depth of 1 m so every
quantity keeps its 3D units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np


class InteriorFace(NamedTuple):
    cell_l: int
    cell_r: int
    axis: int
    area: float
    dist_l: float
    dist_r: float

    @property
    def distance(self) -> float:
        """Center-to-center distance across the face."""
        return self.dist_l + self.dist_r


class BoundaryFace(NamedTuple):
    cell: int
    axis: int
    side: int  # 0 = low end of the axis, 1 = high end
    area: float
    dist: float


@dataclass(frozen=True, eq=False)
class StructuredGrid:
    dims: tuple[int, ...]
    extent: tuple[float, ...]
    cell_regions: np.ndarray
    # Interior faces, struct-of-arrays layout
    face_cells: np.ndarray = field(repr=False)
    face_axis: np.ndarray = field(repr=False)
    face_area: np.ndarray = field(repr=False)
    face_dist: np.ndarray = field(repr=False)
    # Boundary faces
    bface_cell: np.ndarray = field(repr=False)
    bface_axis: np.ndarray = field(repr=False)
    bface_side: np.ndarray = field(repr=False)
    bface_area: np.ndarray = field(repr=False)
    bface_dist: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / n for e, n in zip(self.extent, self.dims))

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.dims))

    @property
    def node_dims(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.dims)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.node_dims))

    @property
    def num_interior_faces(self) -> int:
        return len(self.face_axis)

    @property
    def num_boundary_faces(self) -> int:
        return len(self.bface_axis)

    @property
    def cell_volume(self) -> np.ndarray:
        return np.full(self.num_cells, float(np.prod(self.spacing)))

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return np.linspace(0.0, self.extent[axis], self.dims[axis] + 1)

    @property
    def node_coords(self) -> np.ndarray:
        axes = [self.axis_coordinates(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        # x fastest: ravel in Fortran order
        return np.column_stack([m.ravel(order="F") for m in mesh])

    @property
    def cell_centers(self) -> np.ndarray:
        h = self.spacing
        axes = [(np.arange(n) + 0.5) * hh for n, hh in zip(self.dims, h)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel(order="F") for m in mesh])

    def cell_ijk(self) -> np.ndarray:
        """Structured (i, j[, l]) index of every cell, shape (num_cells, dim)."""
        idx = np.arange(self.num_cells)
        return np.column_stack(np.unravel_index(idx, self.dims, order="F"))

    def cell_index(self, ijk: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(ijk), self.dims, order="F"))

    def cell_nodes(self) -> np.ndarray:
        """Node indices of each cell in tensor order (x fastest), shape (num_cells, 2**dim)."""
        ijk = self.cell_ijk()
        corners = np.array(np.unravel_index(np.arange(2**self.dim), (2,) * self.dim, order="F")).T
        out = np.empty((self.num_cells, 2**self.dim), dtype=np.int64)
        for c, offset in enumerate(corners):
            out[:, c] = np.ravel_multi_index(tuple((ijk + offset).T), self.node_dims, order="F")
        return out

    def interior_face(self, f: int) -> InteriorFace:
        l, r = self.face_cells[f]
        dl, dr = self.face_dist[f]
        return InteriorFace(int(l), int(r), int(self.face_axis[f]), float(self.face_area[f]), float(dl), float(dr))

    def interior_faces(self) -> list[InteriorFace]:
        return [self.interior_face(f) for f in range(self.num_interior_faces)]

    def boundary_faces(self) -> list[BoundaryFace]:
        return [
            BoundaryFace(int(c), int(a), int(s), float(ar), float(d))
            for c, a, s, ar, d in zip(self.bface_cell, self.bface_axis, self.bface_side, self.bface_area, self.bface_dist)
        ]

    def boundary_nodes(self, axis: int, side: int) -> np.ndarray:
        """Indices of the nodes lying on the plane x_axis = 0 (side 0) or x_axis = extent (side 1)."""
        nd = self.node_dims
        ijk = np.unravel_index(np.arange(self.num_nodes), nd, order="F")
        target = 0 if side == 0 else nd[axis] - 1
        return np.flatnonzero(ijk[axis] == target)

    def locate_cell(self, point: Sequence[float]) -> int:
        """Index of the cell containing ``point``.

        Raises ValueError when the point sits outside the domain or exactly on a
        cell interface, since it would not resolve to a single cell.
        """
        point = list(point)[: self.dim]
        if len(point) < self.dim:
            raise ValueError(f"point {point} has fewer than {self.dim} coordinates")
        ijk = []
        for a, x in enumerate(point):
            s = x / self.spacing[a]
            i = int(np.floor(s))
            if not 0 <= x <= self.extent[a] or i >= self.dims[a] or i < 0:
                raise ValueError(f"point {point} lies outside the grid")
            if np.isclose(s, round(s), rtol=0.0, atol=1e-9) and 0 < round(s) < self.dims[a]:
                raise ValueError(f"point {point} lies on a cell interface along axis {a}")
            ijk.append(i)
        return self.cell_index(ijk)


def build_grid(
    dims: Sequence[int],
    extent: Sequence[float],
    region_fn: Callable[[tuple[int, ...]], int] | None = None,
) -> StructuredGrid:
    """Build a uniform tensor grid.

    ``region_fn`` maps a structured cell index (i, j[, l]) to an integer
    region id; all cells belong to region 0 when it is omitted.
    """
    dims = tuple(int(n) for n in dims)
    extent = tuple(float(e) for e in extent)
    if len(dims) not in (2, 3):
        raise ValueError(f"grid must be 2D or 3D, got dims={dims}")
    if len(extent) != len(dims):
        raise ValueError("dims and extent must have the same length")
    if any(n < 1 for n in dims):
        raise ValueError(f"all dims must be >= 1, got {dims}")
    if any(not e > 0 for e in extent):
        raise ValueError(f"all extents must be > 0, got {extent}")

    dim = len(dims)
    h = [e / n for e, n in zip(extent, dims)]
    depth = 1.0 if dim == 2 else None
    num_cells = int(np.prod(dims))
    idx = np.arange(num_cells).reshape(dims, order="F")

    def area(axis: int) -> float:
        a = float(np.prod([h[b] for b in range(dim) if b != axis]))
        return a * depth if depth is not None else a

    cells, axes, areas, dists = [], [], [], []
    for a in range(dim):
        lo = [slice(None)] * dim
        hi = [slice(None)] * dim
        lo[a] = slice(0, dims[a] - 1)
        hi[a] = slice(1, dims[a])
        left = idx[tuple(lo)].ravel(order="F")
        right = idx[tuple(hi)].ravel(order="F")
        cells.append(np.column_stack([left, right]))
        axes.append(np.full(left.size, a))
        areas.append(np.full(left.size, area(a)))
        dists.append(np.full((left.size, 2), 0.5 * h[a]))

    bcells, baxes, bsides, bareas, bdists = [], [], [], [], []
    for a in range(dim):
        for side in (0, 1):
            sl = [slice(None)] * dim
            sl[a] = 0 if side == 0 else dims[a] - 1
            c = idx[tuple(sl)].ravel(order="F")
            bcells.append(c)
            baxes.append(np.full(c.size, a))
            bsides.append(np.full(c.size, side))
            bareas.append(np.full(c.size, area(a)))
            bdists.append(np.full(c.size, 0.5 * h[a]))

    if region_fn is None:
        regions = np.zeros(num_cells, dtype=np.int64)
    else:
        ijk = np.column_stack(np.unravel_index(np.arange(num_cells), dims, order="F"))
        regions = np.array([int(region_fn(tuple(int(v) for v in row))) for row in ijk], dtype=np.int64)

    return StructuredGrid(
        dims=dims,
        extent=extent,
        cell_regions=regions,
        face_cells=np.concatenate(cells).astype(np.int64),
        face_axis=np.concatenate(axes).astype(np.int64),
        face_area=np.concatenate(areas),
        face_dist=np.concatenate(dists) if dists else np.zeros((0, 2)),
        bface_cell=np.concatenate(bcells).astype(np.int64),
        bface_axis=np.concatenate(baxes).astype(np.int64),
        bface_side=np.concatenate(bsides).astype(np.int64),
        bface_area=np.concatenate(bareas),
        bface_dist=np.concatenate(bdists),
    )


def _harmonic_pair(half_l, half_r):
    """Series combination 1/(1/a + 1/b) of two half transmissibilities; zero if either is zero."""
    half_l = np.asarray(half_l, dtype=float)
    half_r = np.asarray(half_r, dtype=float)
    denom = half_l + half_r
    prod = half_l * half_r
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 0, prod / np.where(denom > 0, denom, 1.0), 0.0)
    return out


def transmissibilities(grid: StructuredGrid, materials) -> np.ndarray:
    """TPFA transmissibility k*A/(mu*d) of every interior face, in m^3/(Pa s)."""
    perm = np.array([m.permeability / m.viscosity for m in materials])
    mob = perm[grid.cell_regions]
    l, r = grid.face_cells[:, 0], grid.face_cells[:, 1]
    half_l = mob[l] * grid.face_area / grid.face_dist[:, 0]
    half_r = mob[r] * grid.face_area / grid.face_dist[:, 1]
    return _harmonic_pair(half_l, half_r)


def face_transmissibility(grid: StructuredGrid, face: InteriorFace, materials) -> float:
    ml = materials[grid.cell_regions[face.cell_l]]
    mr = materials[grid.cell_regions[face.cell_r]]
    half_l = ml.permeability / ml.viscosity * face.area / face.dist_l
    half_r = mr.permeability / mr.viscosity * face.area / face.dist_r
    return float(_harmonic_pair(half_l, half_r))


def boundary_transmissibilities(grid: StructuredGrid, materials) -> np.ndarray:
    """Half-cell transmissibility from each boundary cell center to its outer face."""
    perm = np.array([m.permeability / m.viscosity for m in materials])
    return perm[grid.cell_regions[grid.bface_cell]] * grid.bface_area / grid.bface_dist


def stabilization_volumes(grid: StructuredGrid) -> np.ndarray:
    """Jump-stabilization volume factor of every interior face (unit-permeability transmissibility)."""
    half_l = grid.face_area / grid.face_dist[:, 0]
    half_r = grid.face_area / grid.face_dist[:, 1]
    return _harmonic_pair(half_l, half_r)


def stabilization_volume(grid: StructuredGrid, face: InteriorFace) -> float:
    return float(_harmonic_pair(face.area / face.dist_l, face.area / face.dist_r))
