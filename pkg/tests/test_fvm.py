import numpy as np
import pytest
import scipy.linalg

from porosplit import cases
from porosplit.fvm import (
    PressureBC,
    assemble_fixed_stress_diagonal,
    assemble_flow,
    assemble_stabilization,
    face_tau,
    stabilized_faces,
    transmissibility_matrix,
)
from porosplit.grid import build_grid, transmissibilities
from porosplit.materials import MaterialRegion


def test_two_cell_exchange():
    g = build_grid((2, 1), (0.2, 0.1))
    rock = MaterialRegion(young_modulus=1.0, poisson_ratio=0.0, permeability=3e-12)
    t = transmissibilities(g, [rock])[0]
    np.testing.assert_allclose(transmissibility_matrix(g, [rock]).toarray(), [[t, -t], [-t, t]], rtol=1e-15)


def test_undrained_incompressible_flow_block_vanishes(grid10):
    rock = MaterialRegion(young_modulus=1.0, poisson_ratio=0.0, permeability=0.0, inv_biot_modulus=0.0)
    C, T, M, Q = assemble_flow(grid10, [rock], dt=10.0)
    assert C.nnz == 0 and T.nnz == 0 and M.nnz == 0


def test_uniform_pressure_no_sources(grid10, bm_rock):
    *_, Q = assemble_flow(grid10, [bm_rock], dt=5.0, p_prev=np.full(100, 3.0e4))
    np.testing.assert_allclose(Q, 0.0, atol=1e-20)


def test_flow_blocks_compose(grid10):
    rock = MaterialRegion(young_modulus=1.0, poisson_ratio=0.0, permeability=1e-10, inv_biot_modulus=1e-9)
    C, T, M, Q = assemble_flow(grid10, [rock], dt=2.0, sources=np.eye(100)[7] * 1e-3)
    assert abs(C - (M + 2.0 * T)).max() == 0
    np.testing.assert_allclose(M.diagonal(), 1e-9 * 0.01)
    assert Q[7] == pytest.approx(2e-3)


def test_pressure_bc_ghost_transmissibility(grid10, bm_rock):
    C, T, M, Q = assemble_flow(grid10, [bm_rock], dt=1.0, pressure_bcs=[PressureBC(0, 0, 50.0)])
    left = np.flatnonzero(grid10.cell_ijk()[:, 0] == 0)
    half = 1e-12 * 0.1 / 0.05
    np.testing.assert_allclose(T.sum(axis=1).A1[left], half, rtol=1e-12)
    np.testing.assert_allclose(Q[left], half * 50.0, rtol=1e-12)


def test_non_positive_dt(grid10, bm_rock):
    with pytest.raises(ValueError):
        assemble_flow(grid10, [bm_rock], dt=0.0)


def test_fixed_stress_diagonal(grid10, bm_rock):
    R = assemble_fixed_stress_diagonal(grid10, [bm_rock], 1.0)
    np.testing.assert_allclose(R, 0.01 / (1e4 / 1.8), rtol=1e-14)
    assert R[0] == pytest.approx(1.8e-6, rel=1e-12)
    assert not assemble_fixed_stress_diagonal(grid10, [bm_rock], 0.0).any()
    np.testing.assert_allclose(assemble_fixed_stress_diagonal(grid10, [bm_rock], 2.0), 2.0 * R, rtol=0)


def test_stabilization_zero_strength(grid10, bm_rock):
    assert assemble_stabilization(grid10, [bm_rock], None, c=0.0).nnz == 0


def test_stabilization_tau(grid10, bm_rock):
    tau = face_tau(grid10, [bm_rock], 1.0)
    lam, g = 1e4 * 0.2 / 0.72, 1e4 / 2.4
    np.testing.assert_allclose(tau, 9.0 / (32.0 * (lam + 4.0 * g)), rtol=1e-14)
    assert tau[0] == pytest.approx(1.446e-5, rel=1e-3)


def test_global_stabilization_kernel_and_sign(grid10, bm_rock):
    S = assemble_stabilization(grid10, [bm_rock], None, c=1.0)
    np.testing.assert_allclose(S @ np.ones(100), 0.0, atol=1e-20)
    assert abs(S - S.T).max() == 0
    eig = scipy.linalg.eigvalsh(S.toarray())
    assert eig.min() > -1e-12 * eig.max()
    # face weight tau * V_f with V_f = 1 on the unit-square 10x10 grid
    tau = face_tau(grid10, [bm_rock], 1.0)[0]
    assert S[0, 1] == pytest.approx(-tau, rel=1e-14)


def test_region_restricted_faces():
    spec = cases.layered_column_undrained()
    problem = cases.discretize(spec.with_overrides(stab_region="burden", c=1.0))
    g = problem.grid
    mask = stabilized_faces(g, [0])
    regions = g.cell_regions[g.face_cells]
    assert np.array_equal(mask, (regions == 0).all(axis=1))
    S = problem.S.tocoo()
    off = S.row != S.col
    assert (g.cell_regions[S.row[off]] == 0).all() and (g.cell_regions[S.col[off]] == 0).all()
    reservoir = np.flatnonzero(g.cell_regions == 1)
    assert abs(problem.S[reservoir]).max() == 0


def test_unknown_region_rejected(grid10):
    with pytest.raises(ValueError):
        stabilized_faces(grid10, [3])


def test_negative_strength_rejected(grid10, bm_rock):
    with pytest.raises(ValueError):
        assemble_stabilization(grid10, [bm_rock], None, c=-1.0)
