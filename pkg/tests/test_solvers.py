import numpy as np
import pytest
import scipy.sparse as sps

from porosplit import cases
from porosplit.diagnostics import field_difference
from porosplit.grid import build_grid
from porosplit.materials import MaterialRegion
from porosplit.solvers import (
    FieldState,
    SolverConfig,
    coupled_residual,
    mean_total_stress,
    residual_vectors,
    splitting_error_vector,
    step_fs_iter,
    step_fs_noniter,
    step_monolithic,
)


def _first_system(problem, dt=10.0):
    state = problem.initial_state()
    return problem.block_system(state, dt, dt), state


def test_zero_forcing_zero_increment(bm_problem):
    system, state = _first_system(bm_problem)
    system.Q_u = np.zeros_like(system.Q_u)
    system.Q_p = np.zeros_like(system.Q_p)
    res = step_monolithic(system, state)
    assert not res.state.u_curr.any() and not res.state.p_curr.any()


def test_monolithic_residual_small(bm_problem):
    system, state = _first_system(bm_problem)
    res = step_monolithic(system, state)
    u, p = res.state.u_curr, res.state.p_curr
    r0 = np.linalg.norm(np.concatenate([system.Q_u, system.Q_p]))
    assert coupled_residual(system, state, (u, p)) <= 1e-12 * r0 + 1e-9


def test_zero_candidate_residual(bm_problem):
    system, state = _first_system(bm_problem)
    zero = (np.zeros(system.num_u), np.zeros(system.num_p))
    expected = np.linalg.norm(np.concatenate([system.Q_u, system.Q_p]))
    assert coupled_residual(system, state, zero) == pytest.approx(expected, rel=1e-14)


def test_force_unit_scales_mechanics_rows(bm_problem):
    system, state = _first_system(bm_problem)
    system.Q_p = np.zeros_like(system.Q_p)
    system.Q_u = np.ones_like(system.Q_u)
    zero = (np.zeros(system.num_u), np.zeros(system.num_p))
    assert coupled_residual(system, state, zero, force_unit=1e3) == pytest.approx(
        coupled_residual(system, state, zero) / 1e3, rel=1e-14
    )


def test_noniter_first_step_uses_zero_extrapolation(bm_problem):
    system, state = _first_system(bm_problem)
    res = step_fs_noniter(system, state)
    flow = (system.C + system.S + sps.diags(system.R)).toarray()
    dp = np.linalg.solve(flow, system.Q_p)
    du = np.linalg.solve(system.A.toarray(), system.Q_u + system.B.T @ dp)
    np.testing.assert_allclose(res.state.p_curr, dp, rtol=1e-10, atol=1e-10 * abs(dp).max())
    np.testing.assert_allclose(res.state.u_curr, du, rtol=1e-10, atol=1e-10 * abs(du).max())


def test_fs_iter_mass_residual_is_splitting_error(bm_problem):
    system, state = _first_system(bm_problem)
    cfg = SolverConfig(scheme="fs_iter", fixed_iter_count=6)
    seen = []
    prev = [(np.zeros(system.num_u), np.zeros(system.num_p))]

    def record(k, du, dp):
        err = splitting_error_vector(system, iterates=(prev[-1], (du, dp)))
        r_u, r_p = residual_vectors(system, du, dp)
        seen.append((np.linalg.norm(r_p - err), np.linalg.norm(err), np.linalg.norm(r_u)))
        prev.append((du.copy(), dp.copy()))

    step_fs_iter(system, state, cfg, on_iterate=record)
    assert len(seen) == 6
    for gap, err, r_u in seen:
        assert gap <= 1e-10 * err
        assert r_u <= 1e-9 * np.linalg.norm(system.Q_u - system.A @ prev[1][0]) + 1e-9


def test_splitting_error_vanishes_for_linear_trajectory(bm_problem):
    system, _ = _first_system(bm_problem)
    rng = np.random.default_rng(1)
    u0, du = rng.normal(size=system.num_u), rng.normal(size=system.num_u)
    p0, dp = rng.normal(size=system.num_p), rng.normal(size=system.num_p)
    state = FieldState(u0 + 2 * du, p0 + 2 * dp, u0 + du, p0 + dp, u0, p0)
    np.testing.assert_allclose(splitting_error_vector(system, state), 0.0, atol=1e-12)


def test_splitting_error_nonzero_on_monolithic_trajectory():
    report = cases.run_case(cases.barry_mercer_undrained().with_overrides(steps=3), keep_results=True)
    problem = cases.discretize(report.case)
    state = report.final_state
    system = problem.block_system(report.results[-2].state, state.time, 10.0)
    assert np.linalg.norm(splitting_error_vector(system, state)) > 0


def test_splitting_error_needs_history(bm_problem):
    system, state = _first_system(bm_problem)
    with pytest.raises(ValueError):
        splitting_error_vector(system, state)


def test_converged_fs_iter_has_small_splitting_error(bm_problem):
    system, state = _first_system(bm_problem)
    cfg = SolverConfig(scheme="fs_iter", rel_tol=1e-10)
    res = step_fs_iter(system, state, cfg)
    assert res.converged
    # the last iterate's mass residual equals the splitting error, so it obeys the stopping bound
    assert res.splitting_error_norm <= cfg.rel_tol * res.residual_history[0]


def test_drained_schemes_agree():
    spec = cases.barry_mercer_drained().with_overrides(steps=3)
    mono = cases.run_case(spec)
    fs = cases.run_case(spec.with_overrides(scheme="fs_iter", rel_tol=1e-10))
    assert field_difference(fs.final_state.p_curr, mono.final_state.p_curr)[0] <= 1e-6
    assert field_difference(fs.final_state.u_curr, mono.final_state.u_curr)[0] <= 1e-6


def test_drained_iteration_count():
    # recorded from a run at alpha = 1, rel_tol = 1e-8: 39 iterations at most
    report = cases.run_case(cases.barry_mercer_drained().with_overrides(scheme="fs_iter"))
    assert max(r.outer_iterations for r in report.rows) <= 40


def test_more_fixed_iterations_approach_monolithic():
    spec = cases.barry_mercer_undrained()
    ref = cases.run_case(spec).final_state.p_curr
    diffs = [
        field_difference(
            cases.run_case(spec.with_overrides(scheme="fs_iter", fixed_iter_count=k)).final_state.p_curr, ref
        )[0]
        for k in (100, 500)
    ]
    assert diffs[1] < diffs[0]


def test_nonconvergence_flagged(bm_problem):
    system, state = _first_system(bm_problem)
    res = step_fs_iter(system, state, SolverConfig(scheme="fs_iter", max_outer_iters=3))
    assert not res.converged and res.outer_iterations == 3


@pytest.mark.parametrize(
    "kwargs",
    [dict(scheme="bogus"), dict(scheme="fs_iter", alpha=0.0), dict(rel_tol=0.0), dict(max_outer_iters=0),
     dict(fixed_iter_count=0), dict(force_unit=0.0)],
)
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_mean_total_stress_pressure_only():
    g = build_grid((3, 3), (1.0, 1.0))
    rock = MaterialRegion(young_modulus=1e4, poisson_ratio=0.2)
    np.testing.assert_allclose(mean_total_stress(g, [rock], np.zeros(32), np.full(9, 5.0)), -5.0)


def test_mean_total_stress_dilation():
    g = build_grid((2, 2, 2), (1.0, 1.0, 1.0))
    rock = MaterialRegion(young_modulus=1e4, poisson_ratio=0.2)
    eps = 1e-3
    sigma = mean_total_stress(g, [rock], eps * g.node_coords.ravel(), np.zeros(8))
    np.testing.assert_allclose(sigma, (rock.lame_lambda + 2 * rock.shear_modulus / 3) * 3 * eps, rtol=1e-12)


def test_mean_total_stress_matches_block_bookkeeping():
    report = cases.run_case(cases.barry_mercer_undrained().with_overrides(steps=2))
    problem = cases.discretize(report.case)
    u, p = report.final_state.u_curr, report.final_state.p_curr
    rock = problem.materials[0]
    sigma = mean_total_stress(problem.grid, problem.materials, u, p)
    expected = rock.bulk_modulus * (problem.B_full @ u) / problem.grid.cell_volume - p
    np.testing.assert_allclose(sigma, expected, rtol=1e-12, atol=1e-12 * abs(expected).max())


@pytest.mark.parametrize("alpha", [0.6, 0.8, 1.0, 1.5])
def test_drained_converges_above_half(alpha):
    spec = cases.barry_mercer_drained().with_overrides(scheme="fs_iter", alpha=alpha, steps=3)
    assert cases.run_case(spec).converged


def test_impermeable_identity():
    # with T = 0 a non-iterative pass satisfies the saddle system with the splitting error on the mass row
    spec = cases.barry_mercer_undrained(permeability=0.0).with_overrides(scheme="fs_noniter", steps=4)
    problem = cases.discretize(spec)
    state = problem.initial_state()
    for dt in spec.time.step_sizes():
        system = problem.block_system(state, state.time + dt, dt)
        assert system.T.nnz == 0
        res = step_fs_noniter(system, state)
        du, dp = res.increments
        r_u, r_p = residual_vectors(system, du, dp)
        err = splitting_error_vector(system, iterates=(state.last_increment(), (du, dp)))
        scale = np.linalg.norm(np.concatenate([system.Q_u, system.Q_p - err]))
        assert np.linalg.norm(np.concatenate([r_u, r_p - err])) <= 1e-10 * scale
        state = res.state
