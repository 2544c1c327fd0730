import numpy as np
import pytest

from porosplit.diagnostics import field_difference, oscillation_metrics
from porosplit.grid import build_grid


def test_constant_field(grid10):
    m = oscillation_metrics(grid10, np.full(100, 7.0))
    assert (m.jump_energy, m.checkerboard_projection) == (0.0, 0.0)


def test_pure_checkerboard(grid10):
    parity = (-1.0) ** grid10.cell_ijk().sum(axis=1)
    m = oscillation_metrics(grid10, parity)
    assert m.checkerboard_projection == pytest.approx(1.0, rel=1e-14)
    # every one of the 180 faces carries a jump of 2 over A_f = 0.1; total volume 1
    assert m.jump_energy == pytest.approx(np.sqrt(180 * 4 * 0.1), rel=1e-14)


def test_linear_field(grid10):
    m = oscillation_metrics(grid10, grid10.cell_centers[:, 0])
    assert m.checkerboard_projection < 1e-15
    assert m.jump_energy > 0


def test_region_restriction():
    g = build_grid((2, 2, 4), (1, 1, 1), lambda ijk: int(ijk[2] >= 2))
    p = np.where(g.cell_regions == 1, (-1.0) ** g.cell_ijk().sum(axis=1), 0.0)
    assert oscillation_metrics(g, p, [0]).checkerboard_projection == 0.0
    assert oscillation_metrics(g, p, [1]).checkerboard_projection == pytest.approx(1.0)
    with pytest.raises(ValueError):
        oscillation_metrics(g, p, [5])


def test_shape_checked(grid10):
    with pytest.raises(ValueError):
        oscillation_metrics(grid10, np.zeros(99))


def test_field_difference():
    p = np.array([1.0, -2.0, 3.0])
    assert field_difference(p, p) == (0.0, 0.0)
    assert field_difference(2 * p, p) == pytest.approx((1.0, 1.0))
    with pytest.raises(ValueError):
        field_difference(p, p[:2])
