"""Linear Biot poromechanics on structured grids: Q1 mechanics, TPFA flow,
monolithic and fixed-stress coupling, with optional pressure-jump stabilization."""

from .cases import (
    CaseSpec,
    NonConvergenceError,
    RunReport,
    SweepSpec,
    barry_mercer_drained,
    barry_mercer_undrained,
    builtin_case,
    layered_column_undrained,
    run_case,
    run_sweep,
)
from .grid import StructuredGrid, build_grid
from .io import CaseFileError, parse_case, write_case, write_report_csv, write_vtk
from .materials import MaterialRegion, optimal_tau
from .solvers import SolverConfig

__version__ = "0.1.0"

__all__ = [
    "CaseFileError",
    "CaseSpec",
    "MaterialRegion",
    "NonConvergenceError",
    "RunReport",
    "SolverConfig",
    "StructuredGrid",
    "SweepSpec",
    "barry_mercer_drained",
    "barry_mercer_undrained",
    "build_grid",
    "builtin_case",
    "layered_column_undrained",
    "optimal_tau",
    "parse_case",
    "run_case",
    "run_sweep",
    "write_case",
    "write_report_csv",
    "write_vtk",
]
