import numpy as np
import pytest
import scipy.linalg

from porosplit import cases
from porosplit.fem import (
    DirichletSet,
    Traction,
    assemble_coupling,
    assemble_mech_load,
    assemble_stiffness,
    element_stiffness,
    sliding_boundaries,
)
from porosplit.grid import build_grid
from porosplit.materials import MaterialRegion


def _textbook_q1(nu):
    """Closed-form unit-square Q1 stiffness (E = 1), nodes counter-clockwise from the origin."""
    k = np.array([
        1 / 2 - nu / 6, 1 / 8 + nu / 8, -1 / 4 - nu / 12, -1 / 8 + 3 * nu / 8,
        -1 / 4 + nu / 12, -1 / 8 - nu / 8, nu / 6, 1 / 8 - 3 * nu / 8,
    ])
    idx = np.array([
        [0, 1, 2, 3, 4, 5, 6, 7], [1, 0, 7, 6, 5, 4, 3, 2], [2, 7, 0, 5, 6, 3, 4, 1], [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3], [5, 4, 3, 2, 1, 0, 7, 6], [6, 3, 4, 1, 2, 7, 0, 5], [7, 2, 1, 4, 3, 6, 5, 0],
    ])
    return k[idx] / (1 - nu**2)


def test_unit_element_matches_textbook():
    # E=1, nu=0: lambda = 0, G = 1/2; plane strain and plane stress coincide
    ke = element_stiffness((1.0, 1.0), 0.0, 0.5)
    perm = [0, 1, 2, 3, 6, 7, 4, 5]  # counter-clockwise -> tensor node order
    ref = _textbook_q1(0.0)[np.ix_(perm, perm)]
    np.testing.assert_allclose(ke, ref, atol=1e-14)


@pytest.mark.parametrize("h", [(1.0, 1.0), (0.1, 0.3), (0.5, 0.5, 0.2)])
def test_element_kernel_contains_translations(h):
    dim = len(h)
    ke = element_stiffness(h, 2.0, 3.0)
    for comp in range(dim):
        t = np.zeros(ke.shape[0])
        t[comp::dim] = 1.0
        np.testing.assert_allclose(ke @ t, 0.0, atol=1e-12)
    np.testing.assert_allclose(ke, ke.T, atol=1e-13)


def test_stiffness_symmetric(bm_problem):
    A = bm_problem.A
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()


def test_constrained_stiffness_positive_definite(bm_problem):
    eig = scipy.linalg.eigvalsh(bm_problem.A.toarray())
    assert eig.min() > 0


def test_unconstrained_stiffness_singular(grid10, bm_rock):
    eig = scipy.linalg.eigvalsh(assemble_stiffness(grid10, [bm_rock]).toarray())
    assert abs(eig[:3]).max() < 1e-9 * eig.max()  # two translations and one rotation


def test_coupling_translation_free(grid10, bm_rock):
    B = assemble_coupling(grid10, [bm_rock])
    u = np.tile([0.3, -0.7], grid10.num_nodes)
    np.testing.assert_allclose(B @ u, 0.0, atol=1e-14)


def test_coupling_dilation():
    g = build_grid((1, 1), (1.0, 1.0))
    B = assemble_coupling(g, [MaterialRegion(young_modulus=1.0, poisson_ratio=0.0)])
    u = g.node_coords.ravel()
    np.testing.assert_allclose(B @ u, [2.0 * g.cell_volume[0]], rtol=1e-14)


def test_coupling_dilation_3d_scaled_by_biot():
    g = build_grid((2, 2, 2), (1.0, 2.0, 1.0))
    B = assemble_coupling(g, [MaterialRegion(young_modulus=1.0, poisson_ratio=0.0, biot_coefficient=0.6)])
    np.testing.assert_allclose(B @ g.node_coords.ravel(), 0.6 * 3.0 * g.cell_volume, rtol=1e-13)


def test_coupling_divergence_theorem():
    g = build_grid((4, 4), (1.0, 1.0))
    b = 0.8
    B = assemble_coupling(g, [MaterialRegion(young_modulus=1.0, poisson_ratio=0.0, biot_coefficient=b)])
    u = np.random.default_rng(0).normal(size=g.num_nodes * 2).reshape(-1, 2)
    # trapezoidal flux through each boundary edge (exact for the bilinear field)
    flux = 0.0
    for axis in range(2):
        for side, sign in ((0, -1.0), (1, 1.0)):
            nodes = g.boundary_nodes(axis, side)
            coord = g.node_coords[nodes, 1 - axis]
            order = np.argsort(coord)
            un = u[nodes[order], axis]
            flux += sign * np.sum(np.diff(coord[order]) * 0.5 * (un[1:] + un[:-1]))
    assert (B @ u.ravel()).sum() == pytest.approx(b * flux, rel=1e-12)


def test_coupling_drops_constrained_columns(grid10, bm_rock):
    d = sliding_boundaries(grid10)
    B = assemble_coupling(grid10, [bm_rock], d)
    assert abs(B[:, d.dofs]).max() == 0


def test_zero_load(grid10, bm_rock):
    assert not assemble_mech_load(grid10, [bm_rock]).any()
    assert not assemble_mech_load(grid10, [bm_rock], body_force=(0.0, 0.0)).any()


def test_uniform_traction_totals():
    g = build_grid((4, 2), (2.0, 1.0))
    rock = MaterialRegion(young_modulus=1.0, poisson_ratio=0.0)
    f = assemble_mech_load(g, [rock], [Traction(axis=1, at=1.0, value=(0.0, -100.0))]).reshape(-1, 2)
    top = g.boundary_nodes(1, 1)
    assert f[:, 1].sum() == pytest.approx(-100.0 * 2.0)
    assert not f[:, 0].any()
    np.testing.assert_allclose(f[top, 1], [-25.0, -50.0, -50.0, -50.0, -25.0])
    assert not np.delete(f[:, 1], top).any()


def test_traction_off_boundary_rejected(grid10, bm_rock):
    with pytest.raises(ValueError):
        assemble_mech_load(grid10, [bm_rock], [Traction(axis=0, at=0.5, value=(1.0, 0.0))])


@pytest.mark.parametrize("dims, extent", [((1, 1), (1.0, 1.0)), ((1, 1, 1), (1.0, 1.0, 1.0))])
def test_body_force_split(dims, extent):
    g = build_grid(dims, extent)
    rock = MaterialRegion(young_modulus=1.0, poisson_ratio=0.0, solid_density=2000.0)
    grav = (0.0,) * (len(dims) - 1) + (-9.81,)
    f = assemble_mech_load(g, [rock], body_force=grav).reshape(-1, len(dims))
    np.testing.assert_allclose(f[:, -1], 2000.0 * -9.81 * g.cell_volume[0] / 2 ** len(dims))


def test_dirichlet_rejects_duplicates():
    with pytest.raises(ValueError):
        DirichletSet(np.array([1, 1]), np.zeros(2))


def test_layered_case_stiffness_spd():
    p = cases.discretize(cases.layered_column_undrained())
    A = p.A
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    assert A.diagonal().min() > 0
