import math

import numpy as np
import pytest

from porosplit import cases
from porosplit.cases import RateExpr, SweepSpec, TimeSpec


def test_barry_mercer_source_cell():
    spec = cases.barry_mercer_undrained()
    grid = cases.build_case_grid(spec)
    cell = grid.locate_cell(spec.sources[0].at)
    assert tuple(grid.cell_ijk()[cell]) == (3, 1)


def test_barry_mercer_forcing():
    rate = cases.barry_mercer_undrained().sources[0].rate
    assert rate(10.0) == pytest.approx(math.sin(math.pi / 10), rel=1e-15)
    assert rate(10.0) == pytest.approx(0.309, abs=5e-4)
    assert rate(0.0) == 0.0


def test_source_sampled_at_end_of_step():
    problem = cases.discretize(cases.barry_mercer_undrained())
    state = problem.initial_state()
    system = problem.block_system(state, 10.0, 10.0)
    assert system.Q_p[13] == pytest.approx(10.0 * math.sin(math.pi / 10), rel=1e-14)


def test_layered_regions_and_moduli():
    spec = cases.layered_column_undrained()
    grid = cases.build_case_grid(spec)
    layer = grid.cell_ijk()[:, 2]
    assert np.array_equal(grid.cell_regions == 1, (layer >= 5) & (layer <= 9))
    for r in spec.regions:
        assert r.material.young_modulus == pytest.approx(7.5e9, rel=1e-14)
        assert r.material.bulk_modulus == pytest.approx(5e9, rel=1e-14)


def test_layered_burden_permeability_parameter():
    spec = cases.layered_column_undrained(9.8e-14)
    assert spec.regions[0].material.permeability == 9.8e-14
    assert spec.regions[1].material.permeability == cases.RESERVOIR_PERMEABILITY


def test_time_spec():
    assert TimeSpec(dt0=1.0, growth=2.0, steps=4).step_sizes() == [1.0, 2.0, 4.0, 8.0]
    assert TimeSpec(dt0=1.0, growth=2.0, dt_max=3.0, steps=4).step_sizes() == [1.0, 2.0, 3.0, 3.0]
    assert TimeSpec(dt0=4.0, end=10.0).step_sizes() == [4.0, 4.0, 2.0]
    for bad in (dict(dt0=-1.0, steps=1), dict(dt0=1.0), dict(dt0=1.0, steps=2, end=3.0), dict(dt0=1.0, growth=0.5, steps=1)):
        with pytest.raises(ValueError):
            TimeSpec(**bad)


def test_rate_expr():
    assert RateExpr(2.5)(123.0) == 2.5
    assert RateExpr(2.0, 1.0, math.pi / 2)(0.0) == pytest.approx(2.0)


def test_overrides():
    spec = cases.layered_column_undrained().with_overrides(
        scheme="monolithic", alpha=0.7, c=2.0, stab_region="burden+reservoir", dt0=5.0, steps=2, **{"k.burden": 1e-15}
    )
    assert spec.solver.scheme == "monolithic" and spec.solver.alpha == 0.7
    assert spec.stabilization.c == 2.0 and spec.stabilization.regions == ("burden", "reservoir")
    assert spec.time.step_sizes() == [5.0, 10.0]
    assert spec.regions[0].material.permeability == 1e-15
    with pytest.raises(ValueError):
        spec.with_overrides(**{"k.nowhere": 1.0})
    with pytest.raises(ValueError):
        spec.with_overrides(colour="red")


def test_stabilization_selection():
    spec = cases.layered_column_undrained()
    assert cases.stabilization_region_ids(spec) == ([], 0.0)
    assert cases.stabilization_region_ids(spec.with_overrides(stab_region="all")) == (None, 1.0)
    assert cases.stabilization_region_ids(spec.with_overrides(stab_region="reservoir", c=3.0)) == ([1], 3.0)
    assert cases.stabilization_region_ids(spec.with_overrides(stab_region="all", c=0.0)) == ([], 0.0)


def test_run_report_rows():
    report = cases.run_case(cases.barry_mercer_undrained())
    assert [r.step for r in report.rows] == list(range(1, 11))
    assert report.rows[-1].time == pytest.approx(100.0)
    assert len(report.pressures) == 10 and report.converged
    assert all(r.outer_iterations == 1 and r.scheme == "monolithic" for r in report.rows)


def test_layered_rows_carry_region_metrics():
    report = cases.run_case(cases.layered_column_undrained().with_overrides(scheme="monolithic", steps=1))
    assert set(report.rows[0].checkerboard) == {"all", "burden", "reservoir"}


def test_nonconvergence_raises_with_partial_report():
    spec = cases.barry_mercer_undrained().with_overrides(scheme="fs_iter", max_outer_iters=2)
    with pytest.raises(cases.NonConvergenceError) as info:
        cases.run_case(spec)
    assert info.value.step_index == 1 and len(info.value.report.rows) == 1


def test_stabilization_suppresses_checkerboard():
    spec = cases.barry_mercer_undrained()
    plain = cases.run_case(spec).rows[-1].checkerboard["all"]
    stab = cases.run_case(spec.with_overrides(stab_region="all", c=1.0)).rows[-1].checkerboard["all"]
    assert stab * 10 <= plain


def test_single_point_sweep_equals_run():
    base = cases.barry_mercer_undrained().with_overrides(scheme="fs_iter", steps=2)
    table = cases.run_sweep(SweepSpec(base, (("alpha", (1.0,)),)))
    report = cases.run_case(base)
    row = table.rows[0]
    assert row["total_iterations"] == sum(r.outer_iterations for r in report.rows)
    assert row["checkerboard[all]"] == report.rows[-1].checkerboard["all"]


def test_sweep_order_and_errors():
    base = cases.barry_mercer_undrained().with_overrides(scheme="fs_iter", steps=1)
    sweep = SweepSpec(base, (("alpha", (0.8, 1.0)), ("k.domain", (1e-12, 1e-10))))
    table = cases.run_sweep(sweep, workers=2)
    assert [(r["alpha"], r["k.domain"]) for r in table.rows] == [(0.8, 1e-12), (0.8, 1e-10), (1.0, 1e-12), (1.0, 1e-10)]
    assert table.rows == cases.run_sweep(sweep).rows  # parallel and serial agree
    bad = cases.run_sweep(SweepSpec(base, (("scheme", ("fs_iter", "nope")),)))
    assert bad.rows[0]["error"] == "" and "ValueError" in bad.rows[1]["error"]


def test_sweep_cap():
    with pytest.raises(ValueError):
        SweepSpec(cases.barry_mercer_undrained(), (("alpha", tuple(range(1, 101))), ("c", tuple(range(200)))), cap=1000).points()


@pytest.mark.parametrize("k", cases.BURDEN_PERMEABILITIES)
def test_layered_stabilization_never_slower(k):
    spec = cases.layered_column_undrained(k).with_overrides(steps=1)
    plain = cases.run_case(spec).rows[0].outer_iterations
    stab = cases.run_case(spec.with_overrides(stab_region="burden", c=1.0)).rows[0].outer_iterations
    assert stab <= plain
