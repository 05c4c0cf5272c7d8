"""Scenario files: parsing, validation and execution into a verification report."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import checks as _checks
from .elliptic import EllipticSystem, check_symbol_conditions, conormal_residual, parse_system
from .errors import ConfigError, PoissonDtNError, TaskError
from .fields import BoundaryField, GridSpec, convolve, make_field, read_field, rel_l2, write_field
from .fundsol import build_fundsol
from .generator import (
    available_routes,
    check_block_identity,
    check_semigroup,
    dtn,
    generator_power,
    make_context,
)
from .poisson import _boundary_probe, build_kernel, decay_constant, verify_annihilation, verify_normalization

__all__ = ["Scenario", "load_scenario", "parse_scenario", "run", "PRESETS", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1

TOP_KEYS = {"name", "seed", "system", "n", "grid", "field", "tasks", "tolerances", "output_dir"}
TASK_KEYS = {
    "kernel_verify": {"type", "R", "h"},
    "solve": {"type", "t"},
    "dtn": {"type", "routes", "powers", "h_ladder"},
    "semigroup_check": {"type", "t1", "t2"},
    "conormal_audit": {"type"},
    "symbol_audit": {"type"},
}

PRESETS = {
    "laplacian-n2-quickstart": {
        "name": "laplacian-n2-quickstart",
        "seed": 0,
        "system": "laplacian",
        "n": 2,
        "grid": {"R": 16.0, "N": 2048},
        "field": {"kind": "gaussian", "sigma": 1.0},
        "tasks": [
            {"type": "kernel_verify"},
            {"type": "semigroup_check", "t1": 1.0, "t2": 1.0},
            {"type": "dtn", "routes": ["pv", "spectral", "quotient", "conjugate"], "powers": [2]},
            {"type": "conormal_audit"},
            {"type": "symbol_audit"},
        ],
        "tolerances": {},
        "output_dir": "quickstart-out",
    }
}


@dataclass
class Scenario:
    name: str
    seed: int
    system_spec: Any
    n: int
    grid: GridSpec
    field_spec: dict
    tasks: list
    tolerances: dict
    output_dir: Path
    system: Optional[EllipticSystem] = field(default=None, repr=False)

    def tolerance(self, check: str) -> float:
        return float(self.tolerances.get(check, _checks.default_tolerance(check)))


def _strict(obj: dict, allowed: set, where: str):
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", field=where)
    extra = sorted(set(obj) - allowed)
    if extra:
        key = extra[0] if where == "scenario" else f"{where}.{extra[0]}"
        raise ConfigError(f"unknown key(s) {extra}; allowed: {sorted(allowed)}", field=key)


def parse_scenario(obj: dict, base_dir: Optional[Path] = None, output_dir: Optional[str] = None) -> Scenario:
    _strict(obj, TOP_KEYS, "scenario")
    for key in ("system", "n", "grid", "field"):
        if key not in obj:
            raise ConfigError("missing required key", field=key)
    n = obj["n"]
    if n not in (2, 3):
        raise ConfigError("n must be 2 or 3", field="n")
    g = obj["grid"]
    _strict(g, {"R", "N"}, "grid")
    try:
        grid = GridSpec(n - 1, float(g["R"]), int(g["N"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"grid needs R and N ({exc})", field="grid")
    except ValueError as exc:
        raise ConfigError(str(exc), field="grid")
    fld = obj["field"]
    if not isinstance(fld, dict) or ("kind" not in fld and "file" not in fld):
        raise ConfigError("field needs 'kind' or 'file'", field="field")
    tasks = obj.get("tasks", [])
    if not isinstance(tasks, list):
        raise ConfigError("tasks must be a list", field="tasks")
    for i, task in enumerate(tasks):
        where = f"tasks[{i}]"
        if not isinstance(task, dict) or task.get("type") not in TASK_KEYS:
            raise ConfigError(f"task type must be one of {sorted(TASK_KEYS)}", field=where)
        _strict(task, TASK_KEYS[task["type"]], where)
    tol = obj.get("tolerances", {})
    _strict(tol, set(_checks.CHECKS), "tolerances")
    base = base_dir or Path.cwd()
    out = Path(output_dir or obj.get("output_dir", "out"))
    if not out.is_absolute():
        out = base / out
    try:
        system = parse_system(obj["system"], n)
    except ConfigError:
        raise
    except PoissonDtNError as exc:
        raise ConfigError(str(exc), field="system")
    if system.n != n:
        raise ConfigError(f"system is {system.n}-dimensional but n = {n}", field="system")
    sc = Scenario(
        name=str(obj.get("name", "scenario")),
        seed=int(obj.get("seed", 0)),
        system_spec=obj["system"],
        n=n,
        grid=grid,
        field_spec=dict(fld),
        tasks=tasks,
        tolerances=dict(tol),
        output_dir=out,
        system=system,
    )
    _validate_preconditions(sc)
    return sc


def _validate_preconditions(sc: Scenario):
    h = sc.grid.h
    routes_ok = available_routes(sc.system)
    for i, task in enumerate(sc.tasks):
        where = f"tasks[{i}]"
        kind = task["type"]
        if kind == "solve":
            ts = task.get("t", [])
            if not isinstance(ts, list) or not ts:
                raise ConfigError("solve needs a non-empty list 't'", field=where + ".t")
            for t in ts:
                if float(t) < 4 * h:
                    raise ConfigError(f"t = {t} < 4h = {4 * h}", field=where + ".t")
        elif kind == "semigroup_check":
            for key in ("t1", "t2"):
                if float(task.get(key, 1.0)) < 4 * h:
                    raise ConfigError(f"{key} < 4h = {4 * h}", field=f"{where}.{key}")
        elif kind == "dtn":
            for r in task.get("routes", routes_ok):
                if r not in routes_ok:
                    raise ConfigError(f"route {r!r} unavailable for this system; available {routes_ok}", field=where)
            ladder = task.get("h_ladder", [0.4, 0.2, 0.1])
            if min(ladder) < 4 * h:
                raise ConfigError(f"h_ladder minimum {min(ladder)} < 4h = {4 * h}", field=where + ".h_ladder")
            for k in task.get("powers", []):
                if not 1 <= int(k) <= 4:
                    raise ConfigError("powers must lie in 1..4", field=where + ".powers")
        elif kind == "kernel_verify":
            if float(task.get("R", 40.0)) < 20 or float(task.get("h", 0.1)) > 0.1:
                raise ConfigError("kernel_verify needs R >= 20 and h <= 0.1", field=where)


def load_scenario(spec: str, output_dir: Optional[str] = None) -> Scenario:
    """A preset name or the path of a JSON scenario file."""
    if spec in PRESETS:
        return parse_scenario(PRESETS[spec], output_dir=output_dir)
    path = Path(spec)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}", field="scenario")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}", field="scenario")
    return parse_scenario(obj, base_dir=path.parent, output_dir=output_dir)


def _field(sc: Scenario) -> BoundaryField:
    spec = sc.field_spec
    if "file" in spec:
        f = read_field(spec["file"])
        if f.grid != sc.grid or f.M != sc.system.M:
            raise ConfigError("field file does not match grid or component count", field="field.file")
        return f
    return make_field(sc.grid, spec, sc.system.M)


class _Recorder:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.items = []

    def add(self, name: str, task: str, measured: float, tolerance: Optional[float] = None, module: Optional[str] = None):
        tol = self.sc.tolerance(name) if tolerance is None else tolerance
        info = _checks.CHECKS.get(name)
        measured = float(measured)
        self.items.append(
            {
                "name": name,
                "task": task,
                "measured": measured,
                "tolerance": tol,
                "pass": bool(math.isfinite(measured) and measured <= tol),
                "module": module or (info.module if info else "cli"),
            }
        )


def _run_task(sc: Scenario, idx: int, task: dict, rec: _Recorder, f: BoundaryField, ctx):
    kind = task["type"]
    label = f"{idx}:{kind}"
    system = sc.system
    out = sc.output_dir
    if kind == "kernel_verify":
        kern = ctx.kernel
        norm = verify_normalization(kern, float(task.get("R", 40.0)), float(task.get("h", 0.1)))
        rec.add("normalization", label, norm["max_deviation"])
        pts = [[0.3] * (sc.n - 1) + [1.0], [-1.2] * (sc.n - 1) + [0.5]]
        tol = rec.sc.tolerances.get("annihilation", 1e-4 if kern.route == "from_fundsol" else 1e-5)
        rec.add("annihilation", label, verify_annihilation(kern, pts), tol)
        c1, c2 = decay_constant(kern, 5e2), decay_constant(kern, 1e3)
        rec.add("decay_constant", label, abs(c2 - c1) / c2)
    elif kind == "solve":
        for t in task["t"]:
            u = convolve(f, ctx.kernel, float(t))
            write_field(u, out / f"solve_t{float(t):g}.csv")
            if sc.grid.d == 1:
                ud = convolve(f, ctx.kernel, float(t), method="direct")
                rec.add("convolution_routes", label, rel_l2(u, ud))
    elif kind == "semigroup_check":
        t1, t2 = float(task.get("t1", 1.0)), float(task.get("t2", 1.0))
        tol = 1e-5 if system.M == 1 else 1e-3
        rec.add("semigroup", label, check_semigroup(ctx, f, t1, t2, extend=4 if sc.grid.d == 1 else 2), rec.sc.tolerances.get("semigroup", tol))
    elif kind == "dtn":
        routes = task.get("routes", available_routes(system))
        ladder = task.get("h_ladder", [0.4, 0.2, 0.1])
        results = {}
        for r in routes:
            kw = {"h_ladder": ladder} if r == "quotient" else {}
            results[r] = dtn(ctx, f, r, **kw)
            write_field(results[r].value, out / f"dtn_{r}.csv")
        tol = rec.sc.tolerances.get("route_agreement", 1e-2 if system.kind != "lame" else 2e-2)
        for i, r1 in enumerate(routes):
            for r2 in routes[i + 1 :]:
                v1 = np.asarray(results[r1].value.values)
                v2 = np.asarray(results[r2].value.values)
                gap = np.linalg.norm(v1 - v2) / max(np.linalg.norm(v1), np.linalg.norm(v2))
                rec.add("route_agreement", f"{label}:{r1}-{r2}", gap, tol)
        for k in task.get("powers", []):
            base = "spectral" if "spectral" in routes else routes[0]
            res = generator_power(ctx, f, int(k), route=base)
            rec.add("generator_power", f"{label}:k={k}", res["gap"])
        if system.block_split is not None and "pv" in routes:
            rec.add("block_identity", f"{label}:pv", check_block_identity(ctx, f, "pv"))
    elif kind == "conormal_audit":
        fs = build_fundsol(system)
        tol = 1e-10 if fs.route != "quadrature" else 1e-6
        rec.add("conormal", label, conormal_residual(system, fs, _boundary_probe(sc.n)), rec.sc.tolerances.get("conormal", tol))
    elif kind == "symbol_audit":
        rep = check_symbol_conditions(system)
        rec.add("symbol_conditions", label, max(rep.interior_residual, rep.circle_residual or 0.0))


def run(sc: Scenario) -> tuple:
    """Execute the tasks in order and write report.json plus a timing sidecar.

    Returns (report, exit_code).  A failing task is recorded as a TaskError entry
    and the report is still written for the tasks that completed.
    """
    out = sc.output_dir
    out.mkdir(parents=True, exist_ok=True)
    rec = _Recorder(sc)
    timings = []
    errors = []
    started = time.time()
    f = _field(sc) if sc.tasks else None
    ctx = make_context(sc.system, sc.grid) if sc.tasks else None
    for idx, task in enumerate(sc.tasks):
        t0 = time.time()
        try:
            _run_task(sc, idx, task, rec, f, ctx)
        except PoissonDtNError as exc:
            err = TaskError(f"task {idx} ({task['type']}) failed: {type(exc).__name__}: {exc}")
            errors.append(str(err))
            break
        finally:
            timings.append({"task": idx, "type": task["type"], "seconds": time.time() - t0})
    report = {
        "schema_version": SCHEMA_VERSION,
        "scenario": sc.name,
        "seed": sc.seed,
        "system": sc.system_spec if isinstance(sc.system_spec, str) else "tensor",
        "n": sc.n,
        "grid": sc.grid.to_json(),
        "checks": rec.items,
        "errors": errors,
        "pass": bool(all(c["pass"] for c in rec.items) and not errors),
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    sidecar = {"started_unix": started, "finished_unix": time.time(), "tasks": timings}
    with open(out / "report.timing.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    return report, 0 if report["pass"] else 1
