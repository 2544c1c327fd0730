"""Case files (YAML), legacy VTK field output and CSV reports.

Case file schema (SI units throughout)::

    name: barry-mercer                 # optional
    grid: {dims: [nx, ny(, nz)], extent: [Lx, Ly(, Lz)]}
    regions:                           # first entry is the background region
      - name: rock
        material: {E | K, nu, b, invM, k, mu, rho_s, rho_f}
        box: [[x0, x1], [y0, y1]]      # optional, by cell center
        layers: [l0, l1]               # optional, inclusive cell range on the last axis
    bc:
      mech:
        - {boundary: xmin, type: roller}
        - {boundary: zmin, type: fixed}
        - {boundary: xmax, type: displacement, component: 0, value: 0.01}
        - {boundary: ymax, type: traction, value: [0.0, -1.0e3]}
      flow:
        - {boundary: xmin, pressure: 0.0}
    sources:
      - {at: [x, y(, z)], rate: "sin(pi*t/100)"}    # or a number
    time: {dt0, growth, dtmax, steps | end}
    solver: {scheme, alpha, rel_tol, max_outer, fixed_iters, force_unit}
    stabilization: {c, regions: [names] | all | none}
    gravity: [gx, gy(, gz)]            # optional body acceleration

Run report CSV columns, in order: step, time, dt, scheme, outer_iterations,
converged, residual_ratio, splitting_error_norm, mass_imbalance, then
jump_energy[<region>] and checkerboard[<region>] for "all" followed by each
named region. Wall time is left out so that reports are reproducible byte for
byte. Sweep CSV columns: the axis names, first_step_iterations,
max_iterations, total_iterations, converged, final_residual_ratio, steps,
error, then the final-step metric columns.
"""

from __future__ import annotations

import ast
import csv
import math
import os
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from .cases import (
    BOUNDARIES,
    CaseSpec,
    FlowBC,
    MechBC,
    RateExpr,
    RegionSpec,
    RunReport,
    SourceSpec,
    StabilizationSpec,
    SweepTable,
    TimeSpec,
)
from .grid import StructuredGrid
from .materials import MaterialRegion
from .solvers import SolverConfig


class CaseFileError(ValueError):
    """Invalid case file; ``key`` is the dotted path, ``line`` 1-based when known."""

    def __init__(self, message: str, key: str = "", line: int | None = None, path: str | None = None):
        where = ""
        if path:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        label = f" [{key}]" if key else ""
        super().__init__(f"{where}{label} {message}".strip())
        self.key = key
        self.line = line


# ---------------------------------------------------------------------------
# YAML loading with line tracking


class _Map(dict):
    lines: dict


class _Seq(list):
    lines: list


class _Loader(yaml.SafeLoader):
    pass


def _construct_map(loader, node):
    out = _Map()
    out.lines = {}
    out.line = node.start_mark.line + 1
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise CaseFileError(f"duplicate key {key!r}", line=key_node.start_mark.line + 1)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = key_node.start_mark.line + 1
    return out


def _construct_seq(loader, node):
    out = _Seq(loader.construct_object(child, deep=True) for child in node.value)
    out.lines = [child.start_mark.line + 1 for child in node.value]
    out.line = node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_seq)


class _Reader:
    """Typed accessors that report the dotted key and line of a bad value."""

    def __init__(self, path: str | None):
        self.path = path

    def fail(self, message, key, line=None):
        raise CaseFileError(message, key, line, self.path)

    def section(self, parent: Mapping, name: str, key: str, required=True, allowed: Sequence[str] = ()):
        if name not in parent:
            if required:
                self.fail("missing required key", key, getattr(parent, "line", None))
            return None
        value = parent[name]
        if allowed:
            if not isinstance(value, dict):
                self.fail("expected a mapping", key, _line(parent, name))
            self.check_keys(value, allowed, key)
        return value

    def check_keys(self, mapping: Mapping, allowed: Sequence[str], key: str):
        for k in mapping:
            if k not in allowed:
                self.fail(f"unknown key {k!r}; allowed: {', '.join(allowed)}", f"{key}.{k}" if key else str(k), _line(mapping, k))

    def number(self, parent, name, key, required=True, default=None, positive=False, nonneg=False, integer=False):
        if name not in parent or parent[name] is None:
            if required:
                self.fail("missing required key", key, getattr(parent, "line", None))
            return default
        raw = parent[name]
        line = _line(parent, name)
        if isinstance(raw, bool):
            self.fail(f"expected a number, got {raw!r}", key, line)
        try:
            value = int(raw) if integer else float(raw)
        except (TypeError, ValueError):
            self.fail(f"expected a number, got {raw!r}", key, line)
        if integer and isinstance(raw, float) and raw != value:
            self.fail(f"expected an integer, got {raw!r}", key, line)
        if not math.isfinite(value):
            self.fail(f"value must be finite, got {raw!r}", key, line)
        if positive and not value > 0:
            self.fail(f"must be > 0, got {raw!r}", key, line)
        if nonneg and value < 0:
            self.fail(f"must be >= 0, got {raw!r}", key, line)
        return value

    def vector(self, parent, name, key, length=None, integer=False):
        raw = parent.get(name)
        line = _line(parent, name)
        if not isinstance(raw, list):
            self.fail("expected a list of numbers", key, line if raw is not None else getattr(parent, "line", None))
        if length is not None and len(raw) != length:
            self.fail(f"expected {length} entries, got {len(raw)}", key, line)
        return tuple(self.number({i: v for i, v in enumerate(raw)}, i, f"{key}[{i}]", integer=integer) for i in range(len(raw)))


def _line(parent, name):
    lines = getattr(parent, "lines", None)
    if isinstance(lines, dict):
        return lines.get(name)
    return None


# ---------------------------------------------------------------------------
# rate expressions: a constant or scale * sin(a * t + b)


class _Linear(tuple):
    """a * t + b"""


class _Sine(tuple):
    """scale * sin(a * t + b)"""


def parse_rate(text: str | float | int) -> RateExpr:
    """Parse a source rate: a number, or an expression reducing to scale*sin(a*t+b) with ``pi`` available."""
    if isinstance(text, bool):
        raise ValueError(f"invalid rate {text!r}")
    if isinstance(text, (int, float)):
        return RateExpr(float(text))
    try:
        tree = ast.parse(str(text), mode="eval").body
    except SyntaxError as exc:
        raise ValueError(f"invalid rate expression {text!r}") from exc
    value = _eval_rate(tree, text)
    if isinstance(value, float):
        return RateExpr(value)
    if isinstance(value, _Sine):
        return RateExpr(value[0], value[1], value[2])
    raise ValueError(f"rate {text!r} must be a constant or scale*sin(a*t+b)")


def _eval_rate(node, text):
    bad = ValueError(f"unsupported rate expression {text!r}")
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id == "t":
            return _Linear((1.0, 0.0))
        if node.id == "pi":
            return math.pi
        raise bad
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_rate(node.operand, text)
        if isinstance(node.op, ast.UAdd):
            return v
        if isinstance(v, float):
            return -v
        if isinstance(v, _Linear):
            return _Linear((-v[0], -v[1]))
        return _Sine((-v[0], v[1], v[2]))
    if isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id == "sin") or len(node.args) != 1 or node.keywords:
            raise bad
        arg = _eval_rate(node.args[0], text)
        if isinstance(arg, float):
            return math.sin(arg)
        if isinstance(arg, _Linear):
            return _Sine((1.0, arg[0], arg[1]))
        raise bad
    if isinstance(node, ast.BinOp):
        a, b = _eval_rate(node.left, text), _eval_rate(node.right, text)
        op = node.op
        if isinstance(a, float) and isinstance(b, float):
            if isinstance(op, ast.Add):
                return a + b
            if isinstance(op, ast.Sub):
                return a - b
            if isinstance(op, ast.Mult):
                return a * b
            if isinstance(op, ast.Div):
                return a / b
            raise bad
        if isinstance(op, (ast.Add, ast.Sub)):
            sign = 1.0 if isinstance(op, ast.Add) else -1.0
            la = _Linear((0.0, a)) if isinstance(a, float) else a
            lb = _Linear((0.0, b)) if isinstance(b, float) else b
            if isinstance(la, _Linear) and isinstance(lb, _Linear):
                return _Linear((la[0] + sign * lb[0], la[1] + sign * lb[1]))
            raise bad
        if isinstance(op, ast.Mult):
            if isinstance(b, float):
                a, b = b, a
            if isinstance(a, float):
                if isinstance(b, _Linear):
                    return _Linear((a * b[0], a * b[1]))
                return _Sine((a * b[0], b[1], b[2]))
            raise bad
        if isinstance(op, ast.Div) and isinstance(b, float):
            if isinstance(a, _Linear):
                return _Linear((a[0] / b, a[1] / b))
            return _Sine((a[0] / b, a[1], a[2]))
    raise bad


def format_rate(rate: RateExpr) -> float | str:
    if rate.omega is None:
        return rate.scale
    return f"{rate.scale!r}*sin({rate.omega!r}*t+{rate.phase!r})"


# ---------------------------------------------------------------------------
# case files

_TOP = ("name", "grid", "regions", "bc", "sources", "time", "solver", "stabilization", "gravity")
_MATERIAL = ("E", "K", "nu", "b", "invM", "k", "mu", "rho_s", "rho_f")
_MECH_TYPES = ("roller", "fixed", "displacement", "traction")


def parse_case(path: str | os.PathLike) -> CaseSpec:
    """Read and validate a YAML case file; errors carry the dotted key and line number."""
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CaseFileError(f"cannot read case file: {exc.strerror}", path=path) from exc
    return parse_case_text(text, path)


def parse_case_text(text: str, path: str | None = None) -> CaseSpec:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except CaseFileError as exc:
        raise CaseFileError(str(exc), exc.key, exc.line, path) from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise CaseFileError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", line=mark.line + 1 if mark else None, path=path) from exc
    rd = _Reader(path)
    if not isinstance(doc, dict):
        rd.fail("case file must be a mapping", "")
    rd.check_keys(doc, _TOP, "")

    grid = rd.section(doc, "grid", "grid", allowed=("dims", "extent"))
    dims = rd.vector(grid, "dims", "grid.dims", integer=True)
    if len(dims) not in (2, 3):
        rd.fail("grid must be 2D or 3D", "grid.dims", _line(grid, "dims"))
    if any(n < 1 for n in dims):
        rd.fail("cell counts must be >= 1", "grid.dims", _line(grid, "dims"))
    extent = rd.vector(grid, "extent", "grid.extent", length=len(dims))
    if any(not e > 0 for e in extent):
        rd.fail("extents must be > 0", "grid.extent", _line(grid, "extent"))
    dim = len(dims)

    regions_raw = rd.section(doc, "regions", "regions")
    if not isinstance(regions_raw, list) or not regions_raw:
        rd.fail("expected a non-empty list of regions", "regions", _line(doc, "regions"))
    regions = []
    for i, reg in enumerate(regions_raw):
        key = f"regions[{i}]"
        if not isinstance(reg, dict):
            rd.fail("expected a mapping", key, regions_raw.lines[i])
        rd.check_keys(reg, ("name", "material", "box", "layers"), key)
        name = reg.get("name")
        if not isinstance(name, str) or not name:
            rd.fail("region needs a non-empty name", f"{key}.name", getattr(reg, "line", None))
        if name in ("all", "none") or name in [r.name for r in regions]:
            rd.fail(f"region name {name!r} is reserved or repeated", f"{key}.name", _line(reg, "name"))
        material = _parse_material(rd, rd.section(reg, "material", f"{key}.material", allowed=_MATERIAL), f"{key}.material")
        box = layers = None
        if "box" in reg:
            raw = reg["box"]
            if not isinstance(raw, list) or len(raw) != dim:
                rd.fail(f"box needs {dim} [lo, hi] pairs", f"{key}.box", _line(reg, "box"))
            box = tuple(rd.vector({0: p}, 0, f"{key}.box[{a}]", length=2) for a, p in enumerate(raw))
        if "layers" in reg:
            layers = rd.vector(reg, "layers", f"{key}.layers", length=2, integer=True)
            if not 0 <= layers[0] <= layers[1] < dims[-1]:
                rd.fail(f"layer range must lie within 0..{dims[-1] - 1}", f"{key}.layers", _line(reg, "layers"))
        if box is not None and layers is not None:
            rd.fail("give either box or layers, not both", key, getattr(reg, "line", None))
        regions.append(RegionSpec(name, material, box, layers))

    bc = rd.section(doc, "bc", "bc", required=False, allowed=("mech", "flow")) or {}
    mech = []
    for i, entry in enumerate(bc.get("mech") or []):
        key = f"bc.mech[{i}]"
        if not isinstance(entry, dict):
            rd.fail("expected a mapping", key)
        rd.check_keys(entry, ("boundary", "type", "value", "component"), key)
        boundary = _boundary(rd, entry, key, dim)
        kind = entry.get("type")
        if kind not in _MECH_TYPES:
            rd.fail(f"type must be one of {', '.join(_MECH_TYPES)}", f"{key}.type", _line(entry, "type") or getattr(entry, "line", None))
        value = component = None
        if kind == "displacement":
            component = int(rd.number(entry, "component", f"{key}.component", integer=True))
            if not 0 <= component < dim:
                rd.fail(f"component must lie in 0..{dim - 1}", f"{key}.component", _line(entry, "component"))
            value = rd.number(entry, "value", f"{key}.value")
        elif kind == "traction":
            value = rd.vector(entry, "value", f"{key}.value", length=dim)
        mech.append(MechBC(boundary, kind, value, component))
    flow = []
    for i, entry in enumerate(bc.get("flow") or []):
        key = f"bc.flow[{i}]"
        if not isinstance(entry, dict):
            rd.fail("expected a mapping", key)
        rd.check_keys(entry, ("boundary", "pressure"), key)
        flow.append(FlowBC(_boundary(rd, entry, key, dim), rd.number(entry, "pressure", f"{key}.pressure")))

    sources = []
    for i, entry in enumerate(doc.get("sources") or []):
        key = f"sources[{i}]"
        if not isinstance(entry, dict):
            rd.fail("expected a mapping", key)
        rd.check_keys(entry, ("at", "rate"), key)
        at = rd.vector(entry, "at", f"{key}.at", length=dim)
        if "rate" not in entry:
            rd.fail("missing required key", f"{key}.rate", getattr(entry, "line", None))
        try:
            rate = parse_rate(entry["rate"])
        except ValueError as exc:
            rd.fail(str(exc), f"{key}.rate", _line(entry, "rate"))
        sources.append(SourceSpec(at, rate))

    tsec = rd.section(doc, "time", "time", allowed=("dt0", "growth", "dtmax", "steps", "end"))
    time = TimeSpec(
        dt0=rd.number(tsec, "dt0", "time.dt0", positive=True),
        growth=rd.number(tsec, "growth", "time.growth", required=False, default=1.0),
        dt_max=rd.number(tsec, "dtmax", "time.dtmax", required=False, positive=True),
        steps=rd.number(tsec, "steps", "time.steps", required=False, integer=True, positive=True),
        end=rd.number(tsec, "end", "time.end", required=False, positive=True),
    ) if _time_ok(rd, tsec) else None

    ssec = rd.section(doc, "solver", "solver", required=False, allowed=("scheme", "alpha", "rel_tol", "max_outer", "fixed_iters", "force_unit")) or {}
    try:
        solver = SolverConfig(
            scheme=ssec.get("scheme", "monolithic"),
            alpha=rd.number(ssec, "alpha", "solver.alpha", required=False, default=1.0, positive=True),
            rel_tol=rd.number(ssec, "rel_tol", "solver.rel_tol", required=False, default=1e-8, positive=True),
            max_outer_iters=rd.number(ssec, "max_outer", "solver.max_outer", required=False, default=1000, integer=True, positive=True),
            fixed_iter_count=rd.number(ssec, "fixed_iters", "solver.fixed_iters", required=False, integer=True, positive=True),
            force_unit=rd.number(ssec, "force_unit", "solver.force_unit", required=False, default=1.0, positive=True),
        )
    except ValueError as exc:
        if isinstance(exc, CaseFileError):
            raise
        rd.fail(str(exc), "solver", _line(doc, "solver"))

    stab = rd.section(doc, "stabilization", "stabilization", required=False, allowed=("c", "regions")) or {}
    c = rd.number(stab, "c", "stabilization.c", required=False, default=1.0, nonneg=True)
    sel = stab.get("regions", "none")
    names = [r.name for r in regions]
    if isinstance(sel, str):
        if sel not in ("all", "none"):
            rd.fail("regions must be 'all', 'none' or a list of region names", "stabilization.regions", _line(stab, "regions"))
        stab_regions: str | tuple[str, ...] = sel
    elif isinstance(sel, list) and all(isinstance(s, str) for s in sel):
        for s in sel:
            if s not in names:
                rd.fail(f"unknown region name {s!r}; known: {', '.join(names)}", "stabilization.regions", _line(stab, "regions"))
        stab_regions = tuple(sel)
    else:
        rd.fail("regions must be 'all', 'none' or a list of region names", "stabilization.regions", _line(stab, "regions"))

    gravity = rd.vector(doc, "gravity", "gravity", length=dim) if doc.get("gravity") is not None else None
    name = doc.get("name", Path(path).stem if path else "case")
    if not isinstance(name, str):
        rd.fail("name must be a string", "name", _line(doc, "name"))

    spec = CaseSpec(
        name=name, dims=dims, extent=extent, regions=tuple(regions),
        mech_bcs=tuple(mech), flow_bcs=tuple(flow), sources=tuple(sources),
        time=time, solver=solver,
        stabilization=StabilizationSpec(c=c, regions=stab_regions), gravity=gravity,
    )
    _check_sources(rd, spec, doc)
    return spec


def _time_ok(rd: _Reader, tsec) -> bool:
    has_steps = tsec.get("steps") is not None
    has_end = tsec.get("end") is not None
    if has_steps == has_end:
        rd.fail("exactly one of steps and end is required", "time", getattr(tsec, "line", None))
    growth = tsec.get("growth")
    if growth is not None and rd.number(tsec, "growth", "time.growth") < 1:
        rd.fail(f"must be >= 1, got {growth!r}", "time.growth", _line(tsec, "growth"))
    return True


def _check_sources(rd: _Reader, spec: CaseSpec, doc):
    from .cases import build_case_grid

    grid = build_case_grid(spec)
    for i, src in enumerate(spec.sources):
        try:
            grid.locate_cell(src.at)
        except ValueError as exc:
            lines = getattr(doc.get("sources"), "lines", None)
            rd.fail(str(exc), f"sources[{i}].at", lines[i] if lines else None)


def _boundary(rd, entry, key, dim) -> str:
    b = entry.get("boundary")
    if b not in BOUNDARIES[: 2 * dim]:
        rd.fail(f"boundary must be one of {', '.join(BOUNDARIES[: 2 * dim])}", f"{key}.boundary", _line(entry, "boundary") or getattr(entry, "line", None))
    return b


def _parse_material(rd: _Reader, mat, key) -> MaterialRegion:
    if ("E" in mat) == ("K" in mat):
        rd.fail("give exactly one of E and K", key, getattr(mat, "line", None))
    nu = rd.number(mat, "nu", f"{key}.nu")
    if not 0 <= nu < 0.5:
        rd.fail(f"Poisson ratio must lie in [0, 0.5), got {nu}", f"{key}.nu", _line(mat, "nu"))
    kwargs = dict(
        biot_coefficient=rd.number(mat, "b", f"{key}.b", required=False, default=1.0, nonneg=True),
        inv_biot_modulus=rd.number(mat, "invM", f"{key}.invM", required=False, default=0.0, nonneg=True),
        permeability=rd.number(mat, "k", f"{key}.k", required=False, default=0.0, nonneg=True),
        viscosity=rd.number(mat, "mu", f"{key}.mu", required=False, default=1.0, positive=True),
        solid_density=rd.number(mat, "rho_s", f"{key}.rho_s", required=False, default=0.0, nonneg=True),
        fluid_density=rd.number(mat, "rho_f", f"{key}.rho_f", required=False, default=0.0, nonneg=True),
    )
    try:
        if "E" in mat:
            return MaterialRegion(rd.number(mat, "E", f"{key}.E", positive=True), nu, **kwargs)
        return MaterialRegion.from_bulk_modulus(rd.number(mat, "K", f"{key}.K", positive=True), nu, **kwargs)
    except ValueError as exc:
        if isinstance(exc, CaseFileError):
            raise
        rd.fail(str(exc), key, getattr(mat, "line", None))


def case_to_dict(spec: CaseSpec) -> dict[str, Any]:
    def material(m: MaterialRegion):
        return {
            "E": m.young_modulus, "nu": m.poisson_ratio, "b": m.biot_coefficient, "invM": m.inv_biot_modulus,
            "k": m.permeability, "mu": m.viscosity, "rho_s": m.solid_density, "rho_f": m.fluid_density,
        }

    regions = []
    for r in spec.regions:
        entry: dict[str, Any] = {"name": r.name, "material": material(r.material)}
        if r.box is not None:
            entry["box"] = [list(p) for p in r.box]
        if r.layers is not None:
            entry["layers"] = list(r.layers)
        regions.append(entry)
    mech = []
    for bc in spec.mech_bcs:
        entry = {"boundary": bc.boundary, "type": bc.kind}
        if bc.kind == "displacement":
            entry["component"] = bc.component
            entry["value"] = bc.value
        elif bc.kind == "traction":
            entry["value"] = list(bc.value)
        mech.append(entry)
    t = spec.time
    time: dict[str, Any] = {"dt0": t.dt0, "growth": t.growth}
    if t.dt_max is not None:
        time["dtmax"] = t.dt_max
    if t.steps is not None:
        time["steps"] = t.steps
    else:
        time["end"] = t.end
    s = spec.solver
    solver: dict[str, Any] = {"scheme": s.scheme, "alpha": s.alpha, "rel_tol": s.rel_tol, "max_outer": s.max_outer_iters}
    if s.fixed_iter_count is not None:
        solver["fixed_iters"] = s.fixed_iter_count
    if s.force_unit != 1.0:
        solver["force_unit"] = s.force_unit
    stab = spec.stabilization
    out: dict[str, Any] = {
        "name": spec.name,
        "grid": {"dims": list(spec.dims), "extent": list(spec.extent)},
        "regions": regions,
        "bc": {"mech": mech, "flow": [{"boundary": b.boundary, "pressure": b.pressure} for b in spec.flow_bcs]},
        "sources": [{"at": list(src.at), "rate": format_rate(src.rate)} for src in spec.sources],
        "time": time,
        "solver": solver,
        "stabilization": {"c": stab.c, "regions": stab.regions if isinstance(stab.regions, str) else list(stab.regions)},
    }
    if spec.gravity is not None:
        out["gravity"] = list(spec.gravity)
    return out


def write_case(spec: CaseSpec, path: str | os.PathLike) -> None:
    text = yaml.safe_dump(case_to_dict(spec), sort_keys=False, default_flow_style=None)
    Path(path).write_text(text)


# ---------------------------------------------------------------------------
# VTK


def _fmt(values) -> str:
    return "\n".join(f"{v:.17g}" for v in np.asarray(values, dtype=float).ravel())


def write_vtk(grid: StructuredGrid, fields: Mapping[str, np.ndarray], path: str | os.PathLike, title: str = "porosplit fields") -> None:
    """Legacy ASCII VTK rectilinear grid with cell pressure and nodal displacement.

    ``fields`` may hold "pressure" (one value per cell) and "displacement"
    (dim values per node, node-major); missing fields are written as zeros.
    2D grids get a single zero z coordinate and a zero third displacement component.
    """
    p = np.asarray(fields.get("pressure", np.zeros(grid.num_cells)), dtype=float)
    u = np.asarray(fields.get("displacement", np.zeros(grid.num_nodes * grid.dim)), dtype=float)
    if p.shape != (grid.num_cells,):
        raise ValueError(f"pressure has shape {p.shape}, expected ({grid.num_cells},)")
    if u.size != grid.num_nodes * grid.dim:
        raise ValueError(f"displacement has {u.size} entries, expected {grid.num_nodes * grid.dim}")
    vec = np.zeros((grid.num_nodes, 3))
    vec[:, : grid.dim] = u.reshape(grid.num_nodes, grid.dim)
    coords = [grid.axis_coordinates(a) for a in range(grid.dim)]
    while len(coords) < 3:
        coords.append(np.zeros(1))
    npts = [len(c) for c in coords]
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET RECTILINEAR_GRID",
        f"DIMENSIONS {npts[0]} {npts[1]} {npts[2]}",
    ]
    for name, c in zip("XYZ", coords):
        lines += [f"{name}_COORDINATES {len(c)} double", _fmt(c)]
    lines += [f"CELL_DATA {grid.num_cells}", "SCALARS pressure double 1", "LOOKUP_TABLE default", _fmt(p)]
    lines += [f"POINT_DATA {grid.num_nodes}", "VECTORS displacement double"]
    lines += [" ".join(f"{x:.17g}" for x in row) for row in vec]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# CSV

RUN_COLUMNS = (
    "step", "time", "dt", "scheme", "outer_iterations", "converged",
    "residual_ratio", "splitting_error_norm", "mass_imbalance",
)


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating, np.integer)):
        return _cell(value.item())
    if isinstance(value, (tuple, list)):
        return "+".join(str(v) for v in value)
    return "" if value is None else str(value)


def report_table(report: RunReport | SweepTable) -> tuple[list[str], list[list[str]]]:
    if isinstance(report, SweepTable):
        cols = report.columns
        return cols, [[_cell(row.get(c)) for c in cols] for row in report.rows]
    regions: list[str] = []
    for row in report.rows:
        regions.extend(r for r in row.jump_energy if r not in regions)
    cols = list(RUN_COLUMNS)
    for r in regions:
        cols += [f"jump_energy[{r}]", f"checkerboard[{r}]"]
    rows = []
    for row in report.rows:
        vals = [getattr(row, c) for c in RUN_COLUMNS]
        for r in regions:
            vals += [row.jump_energy.get(r), row.checkerboard.get(r)]
        rows.append([_cell(v) for v in vals])
    return cols, rows


def write_report_csv(report: RunReport | SweepTable, path: str | os.PathLike) -> None:
    """Header plus one row per step (run report) or per point (sweep table)."""
    cols, rows = report_table(report)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        writer.writerows(rows)
