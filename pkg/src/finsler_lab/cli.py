"""Scenario-driven command line front end.

    finsler-lab run <scenario.json | directory> [--seed N] [--out DIR]
    finsler-lab fixtures
    finsler-lab schema

A scenario names a fixture, an operation and its parameters. Each run writes
``report.json`` (plus CSV artifacts for curve-like results) and exits with 0
when every check passes, 2 when a check fails and 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import jsonschema
import numpy as np

from . import __version__
from .comparison import (angle_monotonicity_check, forward_triangle, h_map_check, make_model,
                         radial_bound_check, ray_perpendicularity_probe, toponogov_check)
from .curvature import flag_curvature, is_berwald
from .errors import AngleMeasurementError, FinslerError, HypothesisError
from .fixtures import REGISTRY, make_fixture
from .geodesics import (angle_via_first_variation, distance, find_closed_geodesics, find_rays,
                        integrate_geodesic, measure_angle, minimal_geodesic)
from .measure import (ComparisonParams, ball_volume, volume_comparison_check,
                      volume_growth_estimate)
from .norm import FinslerStructure, norm_batch, reversibility_constant, validate_structure

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "finsler-lab scenario",
    "type": "object",
    "required": ["fixture"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "fixture": {"type": "string"},
        "fixture_params": {"type": "object"},
        "operation": {"type": "string"},
        "op": {"type": "string"},
        "params": {"type": "object"},
        "seed": {"type": "integer", "minimum": 0},
        "point": {"type": "array", "items": {"type": "number"}, "minItems": 2},
        "csv": {"type": "boolean"},
    },
    "oneOf": [{"required": ["operation"]}, {"required": ["op"]}],
    "additionalProperties": True,
}
_TOP_LEVEL = set(SCENARIO_SCHEMA["properties"])


class ScenarioError(FinslerError):
    """Invalid scenario file or parameters."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    fixture: str
    operation: str
    params: dict
    fixture_params: dict = field(default_factory=dict)
    seed: Optional[int] = None
    point: Optional[list] = None
    name: str = ""
    csv: bool = True

    def echo(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "name": self.name, "fixture": self.fixture,
                "fixture_params": self.fixture_params, "operation": self.operation,
                "params": self.params, "seed": self.seed, "point": self.point}


@dataclass
class RunReport:
    scenario: dict
    results: dict
    passed: Optional[bool]          # None for report-type operations
    provenance: dict
    files: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "scenario": self.scenario,
                "results": self.results,
                "verdict": {"check": self.passed is not None, "passed": self.passed},
                "files": self.files, "provenance": self.provenance}

    @property
    def exit_code(self) -> int:
        return EXIT_FAIL if self.passed is False else EXIT_PASS


@dataclass(frozen=True)
class Operation:
    run: Callable
    defaults: dict
    sampled: bool = False
    check: bool = False


def jsonable(obj):
    """Plain JSON types; non-finite floats become strings so output is strict JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def base_point(S: FinslerStructure, point=None) -> np.ndarray:
    """Scenario point, else the origin, else the centre of the chart box."""
    if point is not None:
        p = np.asarray(point, float)
        if p.shape != (S.dim,) or not S.contains(p):
            raise ScenarioError(f"point {point} is not a point of the fixture chart")
        return p
    p = np.zeros(S.dim)
    if S.contains(p):
        return p
    if S.chart_box is not None:
        return np.asarray(S.chart_box, float).mean(axis=1)
    raise ScenarioError("fixture has no default point; give 'point'")


def random_points(S: FinslerStructure, p, radius: float, count: int, rng) -> np.ndarray:
    """Points p + radius * u with u uniform in the unit coordinate ball, kept
    inside the chart with margin."""
    out = []
    while len(out) < count:
        u = rng.standard_normal(S.dim)
        u *= rng.uniform() ** (1 / S.dim) / np.linalg.norm(u)
        x = p + radius * u
        if np.linalg.norm(x - p) > 0.1 * radius and float(S.margin(x)) > 0.05 * S.scale:
            out.append(x)
    return np.array(out)


def _model(desc):
    return make_model(desc)


def _unit(S, p, y):
    y = np.asarray(y, float)
    return y / float(norm_batch(S, p, y))


# ---------------------------------------------------------------------------
# operations: each returns (results, passed, csv tables)
# ---------------------------------------------------------------------------

def op_validate(S, p, P, seed):
    rep = validate_structure(S, seed=seed, count=P["count"], directions=P["directions"])
    res = {"homogeneity_violation": rep.homogeneity_violation, "min_norm": rep.min_norm,
           "min_eigenvalue": rep.min_eigenvalue,
           "smoothness_discrepancy": rep.smoothness_discrepancy,
           "samples": rep.samples, "passed": rep.passed}
    return res, rep.ok, {}


def op_berwald(S, p, P, seed):
    rep = is_berwald(S, count=P["count"], vectors=P["vectors"], tol=P["tol"], seed=seed)
    return {"is_berwald": rep.is_berwald, "max_tangential": rep.max_tangential,
            "max_quadraticity": rep.max_quadraticity, "witness": rep.witness}, None, {}


def op_flag_curvature(S, p, P, seed):
    rng = np.random.default_rng(seed)
    X = S.sample_points(rng, P["count"])
    rows = []
    for x in X:
        v, w = rng.standard_normal((2, S.dim))
        rows.append([*x, flag_curvature(S, x, v, w)])
    K = np.array([r[-1] for r in rows])
    cols = [f"x{i}" for i in range(S.dim)] + ["K"]
    return ({"min": float(K.min()), "max": float(K.max()), "mean": float(K.mean()),
             "values": K}, None, {"flag_curvature": (cols, rows)})


def op_geodesic(S, p, P, seed):
    path = integrate_geodesic(S, p, _unit(S, p, P["direction"]), P["t_end"],
                              samples=P["samples"])
    rows = [[t, *x, *v] for t, x, v in zip(path.times, path.points, path.velocities)]
    cols = ["t"] + [f"x{i}" for i in range(S.dim)] + [f"v{i}" for i in range(S.dim)]
    return ({"end_point": path.points[-1], "end_velocity": path.velocities[-1],
             "length": path.length(S), "speed_drift": path.speed_drift,
             "truncated": path.truncated}, None, {"path": (cols, rows)})


def op_distance(S, p, P, seed):
    q = np.asarray(P["target"], float)
    fwd = distance(S, p, q, P["method"])
    bwd = distance(S, q, p, P["method"])
    res = {"forward": fwd, "backward": bwd}
    tables = {}
    if P["path"]:
        path = minimal_geodesic(S, p, q, P["method"])
        tables["path"] = (["t"] + [f"x{i}" for i in range(S.dim)],
                          [[t, *x] for t, x in zip(path.times, path.points)])
    return res, None, tables


def op_ball_volume(S, p, P, seed):
    rows = []
    for r in P["radii"]:
        vol, se = ball_volume(S, p, r, P["method"], P["samples"], seed)
        rows.append([r, vol, se])
    return {"radii": P["radii"], "volumes": [r[1] for r in rows],
            "se": [r[2] for r in rows]}, None, {"ball_volume": (["r", "vol", "SE"], rows)}


def op_volume_growth(S, p, P, seed):
    grid = P["grid"] or np.geomspace(P["r_max"] / 100, P["r_max"], P["points"])
    rep = volume_growth_estimate(S, p, P["r_max"], grid,
                                 ComparisonParams(P["kappa"], P["lambda"], S.dim),
                                 P["method"], P["samples"], seed, P["window"])
    rows = [list(r) for r in zip(rep.radii, rep.volumes, rep.comparison, rep.ratios, rep.se)]
    return rep.to_json(), None, {"ratio_curve": (["r", "vol", "V", "ratio", "SE"], rows)}


def op_volume_comparison(S, p, P, seed):
    res = volume_comparison_check(S, p, ComparisonParams(P["kappa"], P["lambda"], S.dim),
                                  P["inner"], P["outer"], None, P["method"], P["samples"],
                                  seed, P["require_hypotheses"])
    rows = [[a, b, r, e, v] for (a, b), r, e, v in
            zip(res["annuli"], res["ratios"], res["se"], res["comparison"])]
    return res, res["passed"], {"annuli": (["r", "R", "ratio", "SE", "V"], rows)}


def op_toponogov(S, p, P, seed):
    rng = np.random.default_rng(seed)
    model = _model(P["model"])
    rows, fails, skipped = [], 0, []
    while len(rows) < P["triangles"]:
        a, b = random_points(S, p, P["radius"], 2, rng)
        try:
            tri = forward_triangle(S, p, a, b, P["method"])
            r = toponogov_check(S, tri, model, tol=P["tol"], method=P["method"])
        except (AngleMeasurementError, FinslerError) as exc:
            skipped.append(str(exc))
            if len(skipped) > 5 * P["triangles"]:
                raise
            continue
        ok = r["passed"]
        if P["strict"]:
            ok = ok and min(r["margin_a"], r["margin_b"]) > P["strict_margin"]
        fails += not ok
        rows.append([*a, *b, r["forward_angle_a"], r["model_angle_a"], r["backward_angle_b"],
                     r["model_angle_b"], ok])
    marg = np.array([[r[-5] - r[-4], r[-3] - r[-2]] for r in rows])
    cols = ([f"a{i}" for i in range(S.dim)] + [f"b{i}" for i in range(S.dim)]
            + ["angle_a", "model_a", "angle_b", "model_b", "passed"])
    return ({"model": model.kind, "kappa": model.kappa, "triangles": len(rows),
             "violations": fails, "min_margin": float(marg.min()),
             "max_abs_margin": float(np.abs(marg).max()), "skipped": len(skipped)},
            fails == 0, {"triangles": (cols, rows)})


def op_radial_bound(S, p, P, seed):
    res = radial_bound_check(S, p, _model(P["model"]), P["samples"], seed, P["tol"],
                             method=P["method"])
    return res, res["passed"], {}


def op_angle_monotonicity(S, p, P, seed):
    sigma = integrate_geodesic(S, np.asarray(P["start"], float),
                               _unit(S, P["start"], P["direction"]), P["t_end"])
    grid = np.linspace(P["t_end"] / P["points"], P["t_end"], P["points"])
    res = angle_monotonicity_check(S, p, sigma, grid, _model(P["model"]), P["tol"], P["method"])
    return res, res["passed"], {"angles": (["t", "angle"], list(zip(res["t"], res["angles"])))}


def op_angle_crosscheck(S, p, P, seed):
    """Limit-quotient angle against first-variation angle on random configurations."""
    rng = np.random.default_rng(seed)
    rows, skipped = [], 0
    while len(rows) < P["configs"] and skipped <= 10 * P["configs"]:
        a, b, q = random_points(S, p, P["radius"], 3, rng)
        sense = "forward" if rng.uniform() < 0.5 else "backward"
        try:
            side = minimal_geodesic(S, a, b, P["method"])
            s = 0.0 if sense == "forward" else side.t_end
            lim = measure_angle(S, q, side, s, sense, method=P["method"])
            fv = angle_via_first_variation(S, q, side, s, sense, method=P["method"])
        except (AngleMeasurementError, FinslerError):
            skipped += 1
            continue
        rows.append([sense, lim, fv, abs(lim - fv)])
    diff = max((r[-1] for r in rows), default=0.0)
    return ({"configs": len(rows), "skipped": skipped, "max_difference": diff,
             "tol": P["tol"]}, bool(rows) and diff <= P["tol"],
            {"angles": (["sense", "limit", "first_variation", "difference"], rows)})


def _closed_sigma(S, p, direction):
    y = _unit(S, p, direction)
    loops = [g for g in find_closed_geodesics(S, p, 10 * S.scale)
             if np.allclose(g.velocities[0], y, atol=1e-8)]
    if not loops:
        raise ScenarioError(f"no closed geodesic through {p.tolist()} with direction {direction}")
    return min(loops, key=lambda g: g.t_end)


def op_ray_perpendicularity(S, p, P, seed):
    sigma = _closed_sigma(S, p, P["sigma_direction"])
    L = sigma.t_end
    ts = [m * L for m in P["multiples"]]
    res = ray_perpendicularity_probe(S, sigma, P["ray_direction"], ts, P["tol"], P["method"])
    res["loop_length"] = L
    rows = list(zip(res["t"], res["angles"], res["first_variation"]))
    return res, res["passed"], {"angles": (["t", "limit", "first_variation"], rows)}


def op_h_map(S, p, P, seed):
    sigma = _closed_sigma(S, p, P["sigma_direction"])
    horizon = P["horizon_multiple"] * sigma.t_end
    rays = find_rays(S, p, horizon, P["tol"], P["resolution"])
    res = h_map_check(S, p, sigma.velocities[0], rays, P["bound"])
    res["fraction_bound"] = P["fraction_bound"]
    res["horizon"] = horizon
    res["passed"] = bool(res["passed"] and rays.fraction <= P["fraction_bound"])
    res["ray_directions"] = rays.rays
    return res, res["passed"], {}


def op_main_theorem_probe(S, p, P, seed):
    return main_theorem_probe(S, p, P, seed)


def main_theorem_probe(S: FinslerStructure, p, P: dict, seed: int):
    """Closed geodesic search followed by a v_M estimate at the horizon."""
    rng = np.random.default_rng(seed)
    X = np.vstack([p[None], S.sample_points(rng, P["hypothesis_points"])])
    rev = reversibility_constant(S, X)
    berw = is_berwald(S, X, seed=seed)
    K = [flag_curvature(S, x, *rng.standard_normal((2, S.dim))) for x in X]
    hyp = {"reversibility": rev, "is_berwald": berw.is_berwald, "min_flag_curvature": min(K)}
    if rev > 1 + 1e-6 or not berw.is_berwald or min(K) < -P["curvature_tol"]:
        raise HypothesisError(f"main-theorem hypotheses fail: {hyp}")
    horizon = P["horizon"] if P["horizon"] is not None else P["horizon_multiple"] * S.scale
    loops = find_closed_geodesics(S, p, horizon)
    rep = volume_growth_estimate(S, p, horizon, None, ComparisonParams(0.0, 0.0, S.dim),
                                 P["method"], P["samples"], seed)
    found = bool(loops)
    small = rep.v_M <= P["threshold"]
    if found:
        verdict = ("closed geodesic found AND v_M ~ 0" if small
                   else "closed geodesic found BUT v_M above threshold")
    else:
        verdict = "no closed geodesic within horizon; v_M may be large"
    rows = [list(r) for r in zip(rep.radii, rep.volumes, rep.comparison, rep.ratios, rep.se)]
    res = {"hypotheses": hyp, "horizon": horizon, "closed_geodesics": len(loops),
           "loop_lengths": sorted(g.t_end for g in loops), "v_M": rep.v_M, "v_M_se": rep.v_M_se,
           "threshold": P["threshold"], "verdict": verdict, "volume_method": rep.method}
    return res, (small if found else True), {"ratio_curve": (["r", "vol", "V", "ratio", "SE"], rows)}


_M = {"method": "auto"}
OPERATIONS = {
    "validate": Operation(op_validate, {"count": 50, "directions": 16}, True, True),
    "berwald": Operation(op_berwald, {"count": 12, "vectors": 4, "tol": 1e-6}, True),
    "flag_curvature": Operation(op_flag_curvature, {"count": 20}, True),
    "geodesic": Operation(op_geodesic, {"direction": [1.0, 0.0], "t_end": 1.0, "samples": 101}),
    "distance": Operation(op_distance, {"target": None, "path": False, **_M}),
    "ball_volume": Operation(op_ball_volume, {"radii": [1.0], "samples": 10 ** 6, **_M}, True),
    "volume_growth": Operation(op_volume_growth,
                               {"r_max": 10.0, "grid": None, "points": 25, "kappa": 0.0,
                                "lambda": 0.0, "samples": 10 ** 6, "window": 3, **_M}, True),
    "volume_comparison": Operation(op_volume_comparison,
                                   {"inner": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
                                    "outer": [0.5, 0.9, 1.3, 1.7, 2.1, 2.5], "kappa": 0.0,
                                    "lambda": 0.0, "samples": 10 ** 6,
                                    "require_hypotheses": True, **_M}, True, True),
    "toponogov": Operation(op_toponogov, {"model": 0.0, "triangles": 10, "radius": 0.5,
                                          "tol": 1e-3, "strict": False,
                                          "strict_margin": 1e-6, **_M}, True, True),
    "radial_bound": Operation(op_radial_bound, {"model": 0.0, "samples": 20, "tol": 1e-4, **_M},
                              True, True),
    "angle_monotonicity": Operation(op_angle_monotonicity,
                                    {"model": 0.0, "start": None, "direction": [0.0, 1.0],
                                     "t_end": 1.0, "points": 10, "tol": 1e-3, **_M},
                                    False, True),
    "angle_crosscheck": Operation(op_angle_crosscheck, {"configs": 10, "radius": 0.5,
                                                        "tol": 1e-3, **_M}, True, True),
    "ray_perpendicularity": Operation(op_ray_perpendicularity,
                                      {"sigma_direction": [0.0, 1.0], "ray_direction": [1.0, 0.0],
                                       "multiples": [1, 10, 100], "tol": 0.05, **_M},
                                      False, True),
    "h_map": Operation(op_h_map, {"sigma_direction": [0.0, 1.0], "horizon_multiple": 200,
                                  "tol": 1e-4, "resolution": 720, "bound": 0.02,
                                  "fraction_bound": 0.05}, False, True),
    "main_theorem_probe": Operation(op_main_theorem_probe,
                                    {"horizon": None, "horizon_multiple": 100, "threshold": 0.05,
                                     "samples": 10 ** 6, "hypothesis_points": 4,
                                     "curvature_tol": 1e-4, **_M}, True, True),
}


# ---------------------------------------------------------------------------
# parsing and running
# ---------------------------------------------------------------------------

def _op_key(name: str) -> str:
    return name.strip().lower().replace("-", "_")


def parse_scenario(data: dict, seed: Optional[int] = None) -> Scenario:
    """Validate a scenario object; unknown fixtures, operations and parameters
    are rejected here rather than at run time."""
    try:
        jsonschema.validate(data, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ScenarioError(f"scenario invalid at {where}: {exc.message}") from None
    if data["fixture"] not in REGISTRY:
        raise ScenarioError(f"unknown fixture {data['fixture']!r}; known: {sorted(REGISTRY)}")
    op = _op_key(data.get("operation", data.get("op", "")))
    if op not in OPERATIONS:
        raise ScenarioError(f"unknown operation {op!r}; known: {sorted(OPERATIONS)}")
    opdef = OPERATIONS[op]
    params = dict(data.get("params", {}))
    params.update({k: v for k, v in data.items() if k not in _TOP_LEVEL})
    unknown = set(params) - set(opdef.defaults)
    if unknown:
        raise ScenarioError(f"unknown parameter(s) for {op}: {sorted(unknown)}")
    fp = data.get("fixture_params", {})
    unknown = set(fp) - set(REGISTRY[data["fixture"]].params)
    if unknown:
        raise ScenarioError(f"unknown parameter(s) for fixture {data['fixture']!r}: {sorted(unknown)}")
    seed = data.get("seed") if seed is None else seed
    if opdef.sampled and seed is None:
        raise ScenarioError(f"operation {op} is sampled and needs a seed")
    return Scenario(data["fixture"], op, params, fp, seed, data.get("point"),
                    data.get("name", ""), data.get("csv", True))


def load_scenario(path, seed: Optional[int] = None) -> Scenario:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: "
                            f"{exc.msg}") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: scenario must be a JSON object")
    return parse_scenario(data, seed)


def _write_csv(path: Path, cols, rows) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                        for x in row])


def execute(sc: Scenario, out_dir=None) -> RunReport:
    """Run a parsed scenario; writes report.json and CSV tables when out_dir is given."""
    opdef = OPERATIONS[sc.operation]
    S = make_fixture(sc.fixture, sc.fixture_params)
    p = base_point(S, sc.point)
    P = {**opdef.defaults, **sc.params}
    if sc.operation == "angle_monotonicity" and P["start"] is None:
        P["start"] = (p + 0.5 * S.scale * np.eye(S.dim)[0]).tolist()
    if sc.operation == "distance" and P["target"] is None:
        raise ScenarioError("distance needs a 'target' point")
    seed = 0 if sc.seed is None else sc.seed
    t0 = time.perf_counter()
    results, passed, tables = opdef.run(S, p, P, seed)
    elapsed = time.perf_counter() - t0
    prov = {"version": __version__, "seed": sc.seed, "elapsed_s": round(elapsed, 3),
            "python": platform.python_version(), "numpy": np.__version__}
    rep = RunReport(sc.echo(), jsonable(results), None if not opdef.check else bool(passed), prov)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if sc.csv:
            for name, (cols, rows) in tables.items():
                _write_csv(out / f"{name}.csv", cols, rows)
                rep.files.append(f"{name}.csv")
        (out / "report.json").write_text(dumps(rep.to_json()) + "\n")
    return rep


def run_scenario(path, seed: Optional[int] = None, out_dir=None) -> RunReport:
    return execute(load_scenario(path, seed), out_dir)


def _error_report(path, exc) -> dict:
    return {"schema_version": SCHEMA_VERSION, "scenario_path": str(path),
            "error": {"type": type(exc).__name__, "message": str(exc)}}


def _run_one(path, seed, out_dir) -> int:
    """Worker for single and batch runs; never raises."""
    try:
        rep = run_scenario(path, seed, out_dir)
    except (FinslerError, ValueError, OSError) as exc:
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "report.json").write_text(dumps(_error_report(path, exc)) + "\n")
        print(dumps(_error_report(path, exc)), file=sys.stderr)
        return EXIT_ERROR
    v = rep.to_json()["verdict"]
    status = "report" if not v["check"] else ("pass" if v["passed"] else "FAIL")
    print(f"{path}: {rep.scenario['operation']} on {rep.scenario['fixture']}: {status}")
    return rep.exit_code


def max_workers() -> int:
    env = os.environ.get("FINSLER_LAB_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            log.warning("ignoring FINSLER_LAB_THREADS=%r", env)
    return cap


def run_batch(directory, seed: Optional[int] = None, out_dir=None) -> int:
    """Every *.json in the directory, each into its own output subdirectory;
    the exit status is the worst of the individual ones (error > failure)."""
    paths = sorted(Path(directory).glob("*.json"))
    if not paths:
        raise ScenarioError(f"no *.json scenarios in {directory}")
    out = Path(out_dir) if out_dir is not None else Path(".")
    outs = [out / p.stem for p in paths]
    workers = min(max_workers(), len(paths))
    if workers == 1:
        codes = [_run_one(p, seed, o) for p, o in zip(paths, outs)]
    else:
        with ProcessPoolExecutor(workers) as ex:
            codes = list(ex.map(_run_one, paths, [seed] * len(paths), outs))
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_FAIL if EXIT_FAIL in codes else EXIT_PASS


def list_fixtures() -> str:
    lines = [f"{'key':<16} {'dim':<14} properties"]
    for key, info in REGISTRY.items():
        lines.append(f"{key:<16} {info.dims:<14} {info.properties}")
        for name, (default, desc) in info.params.items():
            lines.append(f"{'':<18}{name} = {json.dumps(default)}  ({desc})")
    return "\n".join(lines)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="finsler-lab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file or a directory of them")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--out", default=None, help="output directory (default: current)")
    sub.add_parser("fixtures", help="list the fixture registry")
    sub.add_parser("schema", help="print the scenario JSON schema")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "fixtures":
        print(list_fixtures())
        return EXIT_PASS
    if args.command == "schema":
        print(json.dumps({**SCENARIO_SCHEMA,
                          "x-operations": {k: jsonable(v.defaults) for k, v in OPERATIONS.items()}},
                         indent=2))
        return EXIT_PASS
    target = Path(args.scenario)
    out = args.out if args.out is not None else "."
    if target.is_dir():
        try:
            return run_batch(target, args.seed, out)
        except FinslerError as exc:
            print(dumps(_error_report(target, exc)), file=sys.stderr)
            return EXIT_ERROR
    return _run_one(target, args.seed, out)


if __name__ == "__main__":
    sys.exit(main())
