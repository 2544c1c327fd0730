"""Benchmark case definitions, time loop and parameter sweeps."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from . import diagnostics
from .fem import DirichletSet, Traction
from .fvm import PressureBC
from .grid import StructuredGrid, build_grid
from .materials import MaterialRegion
from .solvers import DiscreteProblem, FieldState, SolverConfig, step

logger = logging.getLogger(__name__)

BOUNDARIES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")


def boundary_plane(name: str, dim: int) -> tuple[int, int]:
    """Map a boundary name such as 'ymax' to (axis, side)."""
    if name not in BOUNDARIES[: 2 * dim]:
        raise ValueError(f"unknown boundary {name!r} for a {dim}D grid")
    i = BOUNDARIES.index(name)
    return i // 2, i % 2


# ---------------------------------------------------------------------------
# case description


@dataclass(frozen=True)
class RateExpr:
    """Source rate scale * sin(omega * t + phase), or a constant when omega is None."""

    scale: float = 1.0
    omega: float | None = None
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        if self.omega is None:
            return self.scale
        return self.scale * math.sin(self.omega * t + self.phase)


@dataclass(frozen=True)
class RegionSpec:
    """Named region; ``box`` is ((lo, hi), ...) in metres per axis, ``layers`` an inclusive cell range along the last axis.

    A region without a selector covers every cell not claimed by a later region.
    """

    name: str
    material: MaterialRegion
    box: tuple[tuple[float, float], ...] | None = None
    layers: tuple[int, int] | None = None


@dataclass(frozen=True)
class MechBC:
    """Mechanical condition on a boundary plane.

    kind: 'roller' (zero normal displacement), 'fixed' (all components zero),
    'displacement' (one component prescribed), 'traction' (vector in Pa).
    """

    boundary: str
    kind: str
    value: tuple[float, ...] | float | None = None
    component: int | None = None


@dataclass(frozen=True)
class FlowBC:
    boundary: str
    pressure: float = 0.0


@dataclass(frozen=True)
class SourceSpec:
    at: tuple[float, ...]
    rate: RateExpr


@dataclass(frozen=True)
class TimeSpec:
    dt0: float
    growth: float = 1.0
    dt_max: float | None = None
    steps: int | None = None
    end: float | None = None

    def __post_init__(self):
        if not self.dt0 > 0:
            raise ValueError(f"time.dt0 must be > 0, got {self.dt0}")
        if not self.growth >= 1.0:
            raise ValueError(f"time.growth must be >= 1, got {self.growth}")
        if (self.steps is None) == (self.end is None):
            raise ValueError("exactly one of time.steps and time.end is required")
        if self.steps is not None and self.steps < 1:
            raise ValueError("time.steps must be >= 1")
        if self.end is not None and not self.end > 0:
            raise ValueError("time.end must be > 0")

    def step_sizes(self) -> list[float]:
        sizes: list[float] = []
        t = 0.0
        dt = self.dt0
        while True:
            if self.steps is not None and len(sizes) >= self.steps:
                break
            h = dt if self.dt_max is None else min(dt, self.dt_max)
            if self.end is not None:
                if t >= self.end * (1 - 1e-12):
                    break
                h = min(h, self.end - t)
            sizes.append(h)
            t += h
            dt *= self.growth
        return sizes


@dataclass(frozen=True)
class StabilizationSpec:
    """Jump stabilization strength c (tau = c tau*) and where it applies: 'all', 'none' or region names."""

    c: float = 1.0
    regions: str | tuple[str, ...] = "none"


@dataclass(frozen=True)
class CaseSpec:
    name: str
    dims: tuple[int, ...]
    extent: tuple[float, ...]
    regions: tuple[RegionSpec, ...]
    mech_bcs: tuple[MechBC, ...]
    flow_bcs: tuple[FlowBC, ...]
    sources: tuple[SourceSpec, ...]
    time: TimeSpec
    solver: SolverConfig
    stabilization: StabilizationSpec = StabilizationSpec()
    gravity: tuple[float, ...] | None = None

    @property
    def region_names(self) -> list[str]:
        return [r.name for r in self.regions]

    def region_ids(self, names: Sequence[str]) -> list[int]:
        out = []
        for n in names:
            if n not in self.region_names:
                raise ValueError(f"unknown region name {n!r}; known: {self.region_names}")
            out.append(self.region_names.index(n))
        return out

    def with_overrides(self, **kw) -> "CaseSpec":
        """Copy with solver, time, stabilization or permeability settings replaced.

        Keys: scheme, alpha, rel_tol, max_outer_iters, fixed_iter_count, dt0,
        steps, c, stab_region, and ``k.<region>`` for a region permeability.
        """
        spec = self
        solver_keys = {"scheme", "alpha", "rel_tol", "max_outer_iters", "fixed_iter_count", "force_unit"}
        for key, value in kw.items():
            if value is None:
                continue
            if key in solver_keys:
                spec = replace(spec, solver=replace(spec.solver, **{key: value}))
            elif key == "dt0":
                spec = replace(spec, time=replace(spec.time, dt0=float(value)))
            elif key == "steps":
                spec = replace(spec, time=replace(spec.time, steps=int(value), end=None))
            elif key == "c":
                spec = replace(spec, stabilization=replace(spec.stabilization, c=float(value)))
            elif key == "stab_region":
                regions = _region_selector(value)
                if not isinstance(regions, str):
                    spec.region_ids(regions)
                spec = replace(spec, stabilization=replace(spec.stabilization, regions=regions))
            elif key.startswith("k."):
                name = key[2:]
                spec.region_ids([name])
                regions = tuple(
                    replace(r, material=replace(r.material, permeability=float(value))) if r.name == name else r
                    for r in spec.regions
                )
                spec = replace(spec, regions=regions)
            else:
                raise ValueError(f"unknown override {key!r}")
        return spec


def _region_selector(value) -> str | tuple[str, ...]:
    if isinstance(value, str):
        if value in ("all", "none"):
            return value
        return tuple(v for v in value.split("+") if v)
    return tuple(value)


# ---------------------------------------------------------------------------
# built-in cases


def barry_mercer_undrained(permeability: float = 1.0e-12) -> CaseSpec:
    """Undrained Barry-Mercer variant: unit square, 10x10 cells, point source sin(pi t / 100) m^3/s."""
    rock = MaterialRegion(
        young_modulus=1.0e4, poisson_ratio=0.2, biot_coefficient=1.0,
        inv_biot_modulus=0.0, permeability=permeability, viscosity=1.0,
    )
    return CaseSpec(
        name="barry-mercer",
        dims=(10, 10),
        extent=(1.0, 1.0),
        regions=(RegionSpec("domain", rock),),
        mech_bcs=(MechBC("xmin", "roller"), MechBC("xmax", "roller"), MechBC("ymin", "roller")),
        flow_bcs=tuple(FlowBC(b, 0.0) for b in ("xmin", "xmax", "ymin", "ymax")),
        sources=(SourceSpec((0.35, 0.15), RateExpr(1.0, math.pi / 100.0, 0.0)),),
        time=TimeSpec(dt0=10.0, steps=10),
        solver=SolverConfig(scheme="monolithic"),
        stabilization=StabilizationSpec(c=1.0, regions="none"),
    )


def barry_mercer_drained() -> CaseSpec:
    """Drained Barry-Mercer variant: same setup with k = 1e-8 m^2."""
    return replace(barry_mercer_undrained(permeability=1.0e-8), name="barry-mercer-drained")


BURDEN_PERMEABILITIES = (9.8e-14, 9.8e-17, 9.8e-20)
RESERVOIR_PERMEABILITY = 9.8e-13


def layered_column_undrained(burden_permeability: float = 9.8e-20) -> CaseSpec:
    """Reservoir layer between two burden layers: 10x10x15 unit cells, injection at the reservoir center.

    The viscous fluid keeps the reservoir only partly drained over the first
    day, so the pressure front stays local and loads the burden unevenly.
    Forces enter the convergence norm in MN to stay above round-off.
    """

    def rock(k):
        return MaterialRegion.from_bulk_modulus(
            5.0e9, 0.25, biot_coefficient=1.0, inv_biot_modulus=1.0e-10,
            permeability=k, viscosity=1.0e3,
        )

    return CaseSpec(
        name="layered",
        dims=(10, 10, 15),
        extent=(10.0, 10.0, 15.0),
        regions=(
            RegionSpec("burden", rock(burden_permeability)),
            RegionSpec("reservoir", rock(RESERVOIR_PERMEABILITY), layers=(5, 9)),
        ),
        mech_bcs=tuple(MechBC(b, "roller") for b in ("xmin", "xmax", "ymin", "ymax", "zmin")),
        flow_bcs=(),
        sources=(SourceSpec((5.5, 5.5, 7.5), RateExpr(1.0e-3)),),
        time=TimeSpec(dt0=86400.0, growth=2.0, steps=3),
        solver=SolverConfig(scheme="fs_iter", force_unit=1.0e6),
        stabilization=StabilizationSpec(c=1.0, regions="none"),
    )


BUILTIN_CASES = {
    "barry-mercer": barry_mercer_undrained,
    "barry-mercer-drained": barry_mercer_drained,
    "layered": layered_column_undrained,
}


def builtin_case(name: str) -> CaseSpec:
    try:
        return BUILTIN_CASES[name]()
    except KeyError:
        raise ValueError(f"unknown built-in case {name!r}; available: {sorted(BUILTIN_CASES)}") from None


# ---------------------------------------------------------------------------
# discretization of a case


def build_case_grid(spec: CaseSpec) -> StructuredGrid:
    dim = len(spec.dims)
    h = [e / n for e, n in zip(spec.extent, spec.dims)]

    def region_of(ijk):
        rid = 0
        for r, reg in enumerate(spec.regions):
            if reg.layers is not None:
                if reg.layers[0] <= ijk[dim - 1] <= reg.layers[1]:
                    rid = r
            elif reg.box is not None:
                center = [(i + 0.5) * hh for i, hh in zip(ijk, h)]
                if all(lo <= x <= hi for x, (lo, hi) in zip(center, reg.box)):
                    rid = r
            else:
                rid = r
        return rid

    return build_grid(spec.dims, spec.extent, region_of)


def _dirichlet(spec: CaseSpec, grid: StructuredGrid) -> tuple[DirichletSet, list[Traction]]:
    entries, tractions = [], []
    for bc in spec.mech_bcs:
        axis, side = boundary_plane(bc.boundary, grid.dim)
        nodes = grid.boundary_nodes(axis, side)
        if bc.kind == "roller":
            entries.append((nodes, axis, 0.0))
        elif bc.kind == "fixed":
            entries.extend((nodes, comp, 0.0) for comp in range(grid.dim))
        elif bc.kind == "displacement":
            if bc.component is None or not 0 <= bc.component < grid.dim:
                raise ValueError(f"displacement condition on {bc.boundary} needs a valid component")
            entries.append((nodes, bc.component, float(bc.value)))
        elif bc.kind == "traction":
            at = 0.0 if side == 0 else grid.extent[axis]
            tractions.append(Traction(axis, at, tuple(float(v) for v in bc.value)))
        else:
            raise ValueError(f"unknown mechanical condition {bc.kind!r}")
    return DirichletSet.from_entries(grid, entries), tractions


def stabilization_region_ids(spec: CaseSpec) -> tuple[list[int] | None, float]:
    """(region ids or None for the whole grid, c); c = 0 when stabilization is off."""
    stab = spec.stabilization
    if stab.regions == "none" or stab.c == 0:
        return [], 0.0
    if stab.regions == "all":
        return None, stab.c
    return spec.region_ids(stab.regions), stab.c


def discretize(spec: CaseSpec, grid: StructuredGrid | None = None) -> DiscreteProblem:
    grid = grid or build_case_grid(spec)
    dirichlet, tractions = _dirichlet(spec, grid)
    pressure_bcs = [PressureBC(*boundary_plane(bc.boundary, grid.dim), bc.pressure) for bc in spec.flow_bcs]
    sources = [(grid.locate_cell(s.at), s.rate) for s in spec.sources]
    region, c = stabilization_region_ids(spec)
    return DiscreteProblem(
        grid=grid,
        materials=[r.material for r in spec.regions],
        dirichlet=dirichlet,
        tractions=tractions,
        body_force=spec.gravity,
        pressure_bcs=pressure_bcs,
        sources=sources,
        alpha=spec.solver.alpha,
        stab_region=region,
        stab_c=c,
    )


# ---------------------------------------------------------------------------
# running


class NonConvergenceError(RuntimeError):
    def __init__(self, step_index: int, report: "RunReport"):
        super().__init__(f"fixed-stress iterations did not converge at step {step_index}")
        self.step_index = step_index
        self.report = report


@dataclass
class StepRow:
    step: int
    time: float
    dt: float
    scheme: str
    outer_iterations: int
    converged: bool
    residual_ratio: float
    splitting_error_norm: float
    mass_imbalance: float
    jump_energy: dict[str, float]
    checkerboard: dict[str, float]
    wall_time: float


@dataclass(eq=False)
class RunReport:
    case: CaseSpec
    grid: StructuredGrid
    rows: list[StepRow] = field(default_factory=list)
    pressures: list[np.ndarray] = field(default_factory=list, repr=False)
    displacements: list[np.ndarray] = field(default_factory=list, repr=False)
    results: list[Any] = field(default_factory=list, repr=False)
    mass_balances: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def final_state(self) -> FieldState | None:
        return self.results[-1].state if self.results else None

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.rows)

    def final_metrics(self) -> dict[str, diagnostics.OscillationReport]:
        return region_metrics(self.case, self.grid, self.pressures[-1])


def region_metrics(spec: CaseSpec, grid: StructuredGrid, p: np.ndarray) -> dict[str, diagnostics.OscillationReport]:
    out = {"all": diagnostics.oscillation_metrics(grid, p)}
    if len(spec.regions) > 1:
        for rid, name in enumerate(spec.region_names):
            if np.any(grid.cell_regions == rid):
                out[name] = diagnostics.oscillation_metrics(grid, p, [rid])
    return out


def run_case(
    spec: CaseSpec,
    raise_on_failure: bool = True,
    keep_results: bool = False,
    problem: DiscreteProblem | None = None,
) -> RunReport:
    """Advance ``spec`` through all its time steps with the configured scheme.

    Raises NonConvergenceError (carrying the partial report) when fixed-stress
    iterations exceed ``max_outer_iters`` and ``raise_on_failure`` is set.
    """
    problem = problem or discretize(spec)
    grid = problem.grid
    report = RunReport(spec, grid)
    state = problem.initial_state()
    for n, dt in enumerate(spec.time.step_sizes(), start=1):
        t_next = state.time + dt
        system = problem.block_system(state, t_next, dt)
        result = step(system, state, spec.solver)
        balance = problem.mass_balance(result, state, t_next, dt)
        metrics = region_metrics(spec, grid, result.state.p_curr)
        report.rows.append(
            StepRow(
                step=n,
                time=t_next,
                dt=dt,
                scheme=spec.solver.scheme,
                outer_iterations=result.outer_iterations,
                converged=result.converged,
                residual_ratio=result.residual_ratio,
                splitting_error_norm=result.splitting_error_norm,
                mass_imbalance=float(abs(balance.sum())),
                jump_energy={k: v.jump_energy for k, v in metrics.items()},
                checkerboard={k: v.checkerboard_projection for k, v in metrics.items()},
                wall_time=result.wall_time,
            )
        )
        report.pressures.append(result.state.p_curr.copy())
        report.displacements.append(result.state.u_curr.copy())
        report.mass_balances.append(balance)
        if keep_results:
            report.results.append(result)
        else:
            report.results = [result]
        state = result.state
        logger.info(
            "step %d t=%g its=%d ratio=%.3e cb=%.4e",
            n, t_next, result.outer_iterations, result.residual_ratio, metrics["all"].checkerboard_projection,
        )
        if not result.converged and raise_on_failure:
            raise NonConvergenceError(n, report)
    return report


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepSpec:
    base: CaseSpec
    axes: tuple[tuple[str, tuple], ...]
    cap: int = 10000

    def points(self) -> list[dict[str, Any]]:
        names = [a for a, _ in self.axes]
        values = [v for _, v in self.axes]
        size = int(np.prod([len(v) for v in values])) if values else 1
        if size > self.cap:
            raise ValueError(f"sweep has {size} points, above the cap of {self.cap}")
        return [dict(zip(names, combo)) for combo in itertools.product(*values)]


SWEEP_COLUMNS = (
    "first_step_iterations",
    "max_iterations",
    "total_iterations",
    "converged",
    "final_residual_ratio",
    "steps",
    "error",
)


def _run_point(args) -> dict[str, Any]:
    base, point = args
    row: dict[str, Any] = dict(point)
    try:
        spec = base.with_overrides(**point)
        report = run_case(spec, raise_on_failure=False)
        its = [r.outer_iterations for r in report.rows]
        row.update(
            first_step_iterations=its[0],
            max_iterations=max(its),
            total_iterations=sum(its),
            converged=report.converged,
            final_residual_ratio=report.rows[-1].residual_ratio,
            steps=len(report.rows),
            error="",
        )
        for name, m in report.final_metrics().items():
            row[f"checkerboard[{name}]"] = m.checkerboard_projection
            row[f"jump_energy[{name}]"] = m.jump_energy
    except Exception as exc:  # recorded in-row, the sweep continues
        logger.warning("sweep point %s failed: %s", point, exc)
        row.update(converged=False, error=f"{type(exc).__name__}: {exc}")
    return row


@dataclass
class SweepTable:
    axes: tuple[str, ...]
    rows: list[dict[str, Any]]

    @property
    def columns(self) -> list[str]:
        """Axis names, the fixed summary columns, then metric columns in first-seen order."""
        cols = list(self.axes) + list(SWEEP_COLUMNS)
        for row in self.rows:
            cols.extend(k for k in row if k not in cols)
        return cols


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepTable:
    """One row per point of the cross product of ``spec.axes``, in axis order."""
    points = spec.points()
    jobs = [(spec.base, p) for p in points]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_point, jobs))
    else:
        rows = [_run_point(j) for j in jobs]
    return SweepTable(tuple(a for a, _ in spec.axes), rows)
