"""Time stepping of the coupled problem: monolithic and fixed-stress schemes.

Every step works on increments du = u^{n+1} - u^n, dp = p^{n+1} - p^n of the
linear system

    [ A  -B^T ] [du]   [Q_u]
    [ B  C+S  ] [dp] = [Q_p]

The fixed-stress schemes replace the mass row by a flow solve with the
diagonal R added, and then solve mechanics with the new pressure.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import fem, fvm
from .fvm import BlockSystem
from .grid import StructuredGrid

logger = logging.getLogger(__name__)

SCHEMES = ("monolithic", "fs_noniter", "fs_iter")


class LinearSolverError(RuntimeError):
    """A direct factorization failed (singular or numerically unusable system)."""


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = "monolithic"
    alpha: float = 1.0
    rel_tol: float = 1e-8
    max_outer_iters: int = 1000
    fixed_iter_count: int | None = None
    linear_solver_tol: float = 1e-12
    # Unit (N) in which mechanics residual rows enter the stacked norm; 1 keeps SI.
    force_unit: float = 1.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if self.scheme != "monolithic" and not self.alpha > 0:
            raise ValueError(f"alpha must be > 0 for fixed-stress schemes, got {self.alpha}")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.fixed_iter_count is not None and self.fixed_iter_count < 1:
            raise ValueError("fixed_iter_count must be >= 1")
        if not self.force_unit > 0:
            raise ValueError("force_unit must be > 0")


@dataclass(eq=False)
class FieldState:
    """Displacements and pressures at t^{n+1} (curr), t^n (prev) and t^{n-1} (prev2)."""

    u_curr: np.ndarray
    p_curr: np.ndarray
    u_prev: np.ndarray | None = None
    p_prev: np.ndarray | None = None
    u_prev2: np.ndarray | None = None
    p_prev2: np.ndarray | None = None
    time: float = 0.0
    step_index: int = 0

    @classmethod
    def initial(cls, num_u: int, num_p: int, u0=None, p0=None, time: float = 0.0) -> "FieldState":
        """Initial state; the missing history is taken equal to the initial fields (zero increments)."""
        u = np.zeros(num_u) if u0 is None else np.array(u0, dtype=float)
        p = np.zeros(num_p) if p0 is None else np.array(p0, dtype=float)
        return cls(u, p, u.copy(), p.copy(), None, None, time, 0)

    def last_increment(self) -> tuple[np.ndarray, np.ndarray]:
        """(u^n - u^{n-1}, p^n - p^{n-1}) seen from the current time level."""
        if self.u_prev is None or self.p_prev is None:
            raise ValueError("state carries no previous time level")
        return self.u_curr - self.u_prev, self.p_curr - self.p_prev

    def advance(self, du: np.ndarray, dp: np.ndarray, dt: float) -> "FieldState":
        return FieldState(
            u_curr=self.u_curr + du,
            p_curr=self.p_curr + dp,
            u_prev=self.u_curr,
            p_prev=self.p_curr,
            u_prev2=self.u_prev,
            p_prev2=self.p_prev,
            time=self.time + dt,
            step_index=self.step_index + 1,
        )


@dataclass(eq=False)
class StepResult:
    state: FieldState
    outer_iterations: int
    residual_history: list[float]
    splitting_error_norm: float
    wall_time: float
    converged: bool = True
    # Fluid-volume change per cell (m^3) that the last flow solve balanced
    # against fluxes and sources; B du for the monolithic scheme.
    flow_volume_change: np.ndarray | None = field(default=None, repr=False)
    increments: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @property
    def residual_ratio(self) -> float:
        r0 = self.residual_history[0]
        return self.residual_history[-1] / r0 if r0 > 0 else 0.0


# ---------------------------------------------------------------------------
# linear algebra helpers


def _max_abs(mat: sps.spmatrix, axis: int) -> np.ndarray:
    out = np.asarray(abs(mat).max(axis=axis).todense()).ravel()
    return np.where(out > 0, out, 1.0)


class _Factor:
    """Sparse LU of the row- and column-equilibrated matrix with iterative refinement.

    Equilibration matters for the coupled matrix, whose mechanics rows are
    many orders of magnitude larger than its mass rows; refinement then
    drives every row's residual down relative to its own scale.
    """

    def __init__(self, matrix: sps.spmatrix, name: str, tol: float = 1e-12):
        matrix = sps.csc_matrix(matrix)
        self.name = name
        self.tol = tol
        self.row_scale = 1.0 / _max_abs(matrix, 1)
        scaled = sps.diags(self.row_scale) @ matrix
        self.col_scale = 1.0 / _max_abs(scaled, 0)
        self.matrix = sps.csc_matrix(scaled @ sps.diags(self.col_scale))
        try:
            self.lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise LinearSolverError(f"{name}: factorization failed ({exc}); {_condition_hint(matrix)}") from exc
        diag_u = np.abs(self.lu.U.diagonal())
        if diag_u.size and (diag_u.min() == 0 or not np.all(np.isfinite(diag_u))):
            raise LinearSolverError(f"{name}: zero pivot; {_condition_hint(matrix)}")
        self._norm = spla.norm(self.matrix, np.inf)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        b = self.row_scale * rhs
        y = self.lu.solve(b)
        for _ in range(4):
            r = b - self.matrix @ y
            scale = self._norm * np.linalg.norm(y, np.inf) + np.linalg.norm(b, np.inf)
            if scale == 0 or np.linalg.norm(r, np.inf) <= self.tol * 1e-2 * scale:
                break
            y = y + self.lu.solve(r)
        x = self.col_scale * y
        if not np.all(np.isfinite(x)):
            raise LinearSolverError(f"{self.name}: non-finite solution; {_condition_hint(self.matrix)}")
        return x


def _condition_hint(matrix) -> str:
    try:
        diag = np.abs(matrix.diagonal())
        return f"diagonal range [{diag.min():.3e}, {diag.max():.3e}], n={matrix.shape[0]}"
    except Exception:  # pragma: no cover - diagnostics only
        return "no condition diagnostic available"


def _factor(system: BlockSystem, key: str, build: Callable[[], sps.spmatrix], tol: float) -> _Factor:
    cache = system.__dict__.setdefault("_factors", {})
    if key not in cache:
        cache[key] = _Factor(build(), key, tol)
    return cache[key]


def monolithic_matrix(system: BlockSystem) -> sps.csr_matrix:
    return sps.bmat([[system.A, -system.B.T], [system.B, system.C + system.S]], format="csr")


def _flow_matrix(system: BlockSystem) -> sps.spmatrix:
    return system.C + system.S + sps.diags(system.R)


# ---------------------------------------------------------------------------
# residuals and splitting error


def residual_vectors(system: BlockSystem, du: np.ndarray, dp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mechanics and mass residuals of the fully implicit system at increments (du, dp)."""
    r_u = system.Q_u - system.A @ du + system.B.T @ dp
    r_p = system.Q_p - system.B @ du - system.C @ dp - system.S @ dp
    return r_u, r_p


def _residual_norm(system, du, dp, force_unit: float = 1.0) -> float:
    r_u, r_p = residual_vectors(system, du, dp)
    r_u = r_u / force_unit
    return float(np.sqrt(r_u @ r_u + r_p @ r_p))


def coupled_residual(
    system: BlockSystem, state: FieldState, candidate: tuple[np.ndarray, np.ndarray], force_unit: float = 1.0
) -> float:
    """Euclidean norm of the stacked fully implicit residual for candidate fields (u, p) at t^{n+1}.

    The fixed-stress diagonal R never enters this check.
    """
    u, p = candidate
    return _residual_norm(system, np.asarray(u) - state.u_curr, np.asarray(p) - state.p_curr, force_unit)


def splitting_error_vector(
    system: BlockSystem,
    state: FieldState | None = None,
    iterates: tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
) -> np.ndarray:
    """Splitting error on the mass row.

    With ``state`` (after a step): -B(u^{n+1} - 2u^n + u^{n-1}) + R(p^{n+1} - 2p^n + p^{n-1}).
    With ``iterates`` = ((du_k, dp_k), (du_k1, dp_k1)): -B(du_k1 - du_k) + R(dp_k1 - dp_k).
    """
    if iterates is not None:
        (du_k, dp_k), (du_k1, dp_k1) = iterates
        return -(system.B @ (du_k1 - du_k)) + system.R * (dp_k1 - dp_k)
    if state is None:
        raise ValueError("either a state or a pair of iterates is required")
    if any(x is None for x in (state.u_prev, state.u_prev2, state.p_prev, state.p_prev2)):
        raise ValueError("splitting error needs three time levels of history")
    d2u = state.u_curr - 2.0 * state.u_prev + state.u_prev2
    d2p = state.p_curr - 2.0 * state.p_prev + state.p_prev2
    return -(system.B @ d2u) + system.R * d2p


def _second_difference_error(system, du_new, dp_new, du_old, dp_old) -> np.ndarray:
    return splitting_error_vector(system, iterates=((du_old, dp_old), (du_new, dp_new)))


# ---------------------------------------------------------------------------
# schemes


def step_monolithic(system: BlockSystem, state: FieldState, config: SolverConfig | None = None) -> StepResult:
    config = config or SolverConfig()
    t0 = time.perf_counter()
    r0 = _residual_norm(system, np.zeros(system.num_u), np.zeros(system.num_p), config.force_unit)
    lu = _factor(system, "monolithic", lambda: monolithic_matrix(system), config.linear_solver_tol)
    x = lu.solve(np.concatenate([system.Q_u, system.Q_p]))
    du, dp = x[: system.num_u], x[system.num_u :]
    new_state = state.advance(du, dp, system.dt)
    du_old, dp_old = state.last_increment()
    err = _second_difference_error(system, du, dp, du_old, dp_old)
    return StepResult(
        state=new_state,
        outer_iterations=1,
        residual_history=[r0, _residual_norm(system, du, dp, config.force_unit)],
        splitting_error_norm=float(np.linalg.norm(err)),
        wall_time=time.perf_counter() - t0,
        flow_volume_change=system.B @ du,
        increments=(du, dp),
    )


def _flow_then_mechanics(system, config, du_frozen, dp_frozen):
    """One fixed-stress pass: flow with the volumetric term frozen at (du_frozen, dp_frozen), then mechanics."""
    flow = _factor(system, "flow", lambda: _flow_matrix(system), config.linear_solver_tol)
    mech = _factor(system, "mechanics", lambda: system.A, config.linear_solver_tol)
    frozen_volume = system.B @ du_frozen - system.R * dp_frozen
    dp = flow.solve(system.Q_p - frozen_volume)
    du = mech.solve(system.Q_u + system.B.T @ dp)
    return du, dp, frozen_volume + system.R * dp


def step_fs_noniter(system: BlockSystem, state: FieldState, config: SolverConfig | None = None) -> StepResult:
    """One flow solve with the mean total stress extrapolated linearly in time, then one mechanics solve."""
    config = config or SolverConfig(scheme="fs_noniter")
    t0 = time.perf_counter()
    r0 = _residual_norm(system, np.zeros(system.num_u), np.zeros(system.num_p), config.force_unit)
    du_old, dp_old = state.last_increment()
    du, dp, volume = _flow_then_mechanics(system, config, du_old, dp_old)
    err = _second_difference_error(system, du, dp, du_old, dp_old)
    return StepResult(
        state=state.advance(du, dp, system.dt),
        outer_iterations=1,
        residual_history=[r0, _residual_norm(system, du, dp, config.force_unit)],
        splitting_error_norm=float(np.linalg.norm(err)),
        wall_time=time.perf_counter() - t0,
        flow_volume_change=volume,
        increments=(du, dp),
    )


def step_fs_iter(
    system: BlockSystem,
    state: FieldState,
    config: SolverConfig,
    on_iterate: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
) -> StepResult:
    """Fixed-stress iterations from the previous converged state until the coupled residual drops by rel_tol.

    With ``config.fixed_iter_count`` set, exactly that many iterations run
    regardless of the residual. Exceeding ``max_outer_iters`` returns a
    result flagged ``converged=False``.
    """
    if not config.alpha > 0:
        raise ValueError(f"alpha must be > 0, got {config.alpha}")
    t0 = time.perf_counter()
    du = np.zeros(system.num_u)
    dp = np.zeros(system.num_p)
    r0 = _residual_norm(system, du, dp, config.force_unit)
    history = [r0]
    err = np.zeros(system.num_p)
    volume = system.B @ du
    converged = True
    k = 0
    limit = config.fixed_iter_count or config.max_outer_iters
    if r0 > 0 or config.fixed_iter_count:
        converged = False
        while k < limit:
            du_new, dp_new, volume = _flow_then_mechanics(system, config, du, dp)
            err = _second_difference_error(system, du_new, dp_new, du, dp)
            du, dp = du_new, dp_new
            k += 1
            history.append(_residual_norm(system, du, dp, config.force_unit))
            if on_iterate is not None:
                on_iterate(k, du, dp)
            if config.fixed_iter_count is None and history[-1] <= config.rel_tol * r0:
                converged = True
                break
        if config.fixed_iter_count is not None:
            converged = True
    if not converged:
        logger.info("fixed-stress iterations did not converge in %d iterations (ratio %.3e)", k, history[-1] / r0)
    return StepResult(
        state=state.advance(du, dp, system.dt),
        outer_iterations=k,
        residual_history=history,
        splitting_error_norm=float(np.linalg.norm(err)),
        wall_time=time.perf_counter() - t0,
        converged=converged,
        flow_volume_change=volume,
        increments=(du, dp),
    )


def step(system: BlockSystem, state: FieldState, config: SolverConfig) -> StepResult:
    if config.scheme == "monolithic":
        return step_monolithic(system, state, config)
    if config.scheme == "fs_noniter":
        return step_fs_noniter(system, state, config)
    return step_fs_iter(system, state, config)


# ---------------------------------------------------------------------------
# discrete problem: assembled operators plus per-step loads


@dataclass(eq=False)
class DiscreteProblem:
    """Assembled, time-independent operators of a case.

    ``sources`` holds (cell index, rate function of time in m^3/s) pairs.
    """

    grid: StructuredGrid
    materials: Sequence
    dirichlet: fem.DirichletSet
    tractions: Sequence[fem.Traction] = ()
    body_force: Sequence[float] | None = None
    pressure_bcs: Sequence[fvm.PressureBC] = ()
    sources: Sequence[tuple[int, Callable[[float], float]]] = ()
    alpha: float = 1.0
    stab_region: Iterable[int] | None = None
    stab_c: float = 0.0

    def __post_init__(self):
        g, mats = self.grid, self.materials
        self.A_full = fem.assemble_stiffness(g, mats)
        self.B_full = fem.assemble_coupling(g, mats)
        self.A = fem.apply_dirichlet_rows_cols(self.A_full, self.dirichlet) if len(self.dirichlet) else self.A_full
        self.B = fem.assemble_coupling(g, mats, self.dirichlet)
        self.free = ~self.dirichlet.mask(self.num_u)
        self.f_mech = fem.assemble_mech_load(g, mats, self.tractions, self.body_force)
        self.T = fvm.transmissibility_matrix(g, mats)
        self.bc_diag, self.bc_drive = fvm.boundary_flow_terms(g, mats, self.pressure_bcs)
        self.T = fvm._finalize(self.T + sps.diags(self.bc_diag))
        self.M_acc = fvm.accumulation_matrix(g, mats)
        self.R = fvm.assemble_fixed_stress_diagonal(g, mats, self.alpha)
        if self.stab_c > 0:
            self.S = fvm.assemble_stabilization(g, mats, self.stab_region, self.stab_c)
        else:
            self.S = sps.csr_matrix((self.num_p, self.num_p))
        self._cache: dict[float, dict] = {}

    @property
    def num_u(self) -> int:
        return self.grid.num_nodes * self.grid.dim

    @property
    def num_p(self) -> int:
        return self.grid.num_cells

    def source_vector(self, t: float) -> np.ndarray:
        q = np.zeros(self.num_p)
        for cell, rate in self.sources:
            q[cell] += rate(t)
        return q

    def block_system(self, state: FieldState, t_next: float, dt: float) -> BlockSystem:
        """Blocks and right-hand sides for the step from ``state`` to ``t_next``."""
        if not dt > 0:
            raise ValueError(f"time step must be > 0, got {dt}")
        lift = np.zeros(self.num_u)
        lift[self.dirichlet.dofs] = self.dirichlet.values - state.u_curr[self.dirichlet.dofs]
        u_star = state.u_curr + lift
        q_u = self.f_mech - self.A_full @ u_star + self.B_full.T @ state.p_curr
        q_u = np.where(self.free, q_u, lift)
        q_p = dt * self.source_vector(t_next) - dt * (self.T @ state.p_curr) + dt * self.bc_drive - self.B_full @ lift
        cached = self._cache.get(dt)
        if cached is None:
            cached = {"C": fvm._finalize(self.M_acc + dt * self.T), "_factors": {}}
            self._cache[dt] = cached
        system = BlockSystem(
            A=self.A, B=self.B, C=cached["C"], T=self.T, M_acc=self.M_acc,
            R=self.R, S=self.S, Q_u=q_u, Q_p=q_p, dt=dt,
        )
        system._factors = cached["_factors"]
        return system

    def initial_state(self, time: float = 0.0) -> FieldState:
        return FieldState.initial(self.num_u, self.num_p, time=time)

    def boundary_outflow(self, p: np.ndarray) -> np.ndarray:
        """Volumetric rate (m^3/s) leaving each cell through pressure-constrained boundary faces."""
        return self.bc_diag * p - self.bc_drive

    def mass_balance(self, result: StepResult, state_before: FieldState, t_next: float, dt: float) -> np.ndarray:
        """Per-cell accumulation + net flux + stabilization flux - source (m^3) of a completed step."""
        du, dp = result.increments
        p_new = result.state.p_curr
        # constrained dofs carry the prescribed lift, which the eliminated B drops
        lifted = self.B_full @ du - self.B @ du
        accumulation = self.M_acc @ dp + result.flow_volume_change + lifted
        flux = dt * (self.T @ p_new) - dt * self.bc_drive
        stab = self.S @ dp
        return accumulation + flux + stab - dt * self.source_vector(t_next)


def mean_total_stress(grid: StructuredGrid, materials, u: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Per-cell mean total stress (1/3) tr(sigma' ) - b p, with sigma' averaged over the cell (Pa).

    Plane strain in 2D: the out-of-plane stress lambda * div(u) is part of the trace.
    """
    unit_b = [replace(m, biot_coefficient=1.0) for m in materials]
    div_avg = fem.assemble_coupling(grid, unit_b) @ u / grid.cell_volume
    k_dr = np.array([m.bulk_modulus for m in materials])[grid.cell_regions]
    b = np.array([m.biot_coefficient for m in materials])[grid.cell_regions]
    return k_dr * div_avg - b * np.asarray(p, dtype=float)
