"""Oscillation metrics for cell pressure fields."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .grid import StructuredGrid


@dataclass(frozen=True)
class OscillationReport:
    jump_energy: float
    checkerboard_projection: float
    region: tuple[int, ...] | None


def _region_cells(grid: StructuredGrid, region: Iterable[int] | None) -> np.ndarray:
    if region is None:
        return np.ones(grid.num_cells, dtype=bool)
    region = list(region)
    inside = np.isin(grid.cell_regions, region)
    if not region or not inside.any():
        raise ValueError(f"region {region} contains no cells")
    return inside


def oscillation_metrics(grid: StructuredGrid, p: np.ndarray, region: Iterable[int] | None = None) -> OscillationReport:
    """Jump energy and checkerboard projection of ``p`` over the cells of ``region`` (None: all cells).

    jump_energy = sqrt(sum_f [[p]]^2 A_f) / sqrt(sum_K V_K) over faces with both
    cells in the region; checkerboard_projection = |sum_K (-1)^(i+j+l) p_K V_K| / sum_K V_K.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (grid.num_cells,):
        raise ValueError(f"pressure has shape {p.shape}, expected ({grid.num_cells},)")
    inside = _region_cells(grid, region)
    vol = grid.cell_volume[inside]
    total = vol.sum()
    l, r = grid.face_cells[:, 0], grid.face_cells[:, 1]
    faces = inside[l] & inside[r]
    jumps = p[l[faces]] - p[r[faces]]
    jump_energy = float(np.sqrt(np.sum(jumps**2 * grid.face_area[faces])) / np.sqrt(total))
    parity = np.where(grid.cell_ijk().sum(axis=1) % 2 == 0, 1.0, -1.0)[inside]
    checker = float(abs(np.sum(parity * p[inside] * vol)) / total)
    return OscillationReport(jump_energy, checker, None if region is None else tuple(sorted(set(region))))


def field_difference(p_a: np.ndarray, p_b: np.ndarray, eps: float = 1e-30) -> tuple[float, float]:
    """Relative l2 and max-norm differences of ``p_a`` against the reference ``p_b``."""
    p_a = np.asarray(p_a, dtype=float)
    p_b = np.asarray(p_b, dtype=float)
    if p_a.shape != p_b.shape:
        raise ValueError(f"shape mismatch {p_a.shape} vs {p_b.shape}")
    diff = p_a - p_b
    l2 = float(np.linalg.norm(diff) / max(np.linalg.norm(p_b), eps))
    linf = float(np.max(np.abs(diff), initial=0.0) / max(np.max(np.abs(p_b), initial=0.0), eps))
    return l2, linf
