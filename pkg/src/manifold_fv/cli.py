"""Command-line front end: run, converge, verify, compare.

Exit codes: 0 pass, 1 check failure, 2 usage/config error, 3 solver abort.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import jsonschema
import numpy as np

from . import __version__
from . import analysis as an
from .boundary_lorentzian import (BoundaryData, BoundaryError, check_traces, default_trace_window,
                                  evolve_foliated)
from .flux_model import FLUX_FAMILIES, FluxError, named_flux, weight_closure
from .fv_core import SchemeConfig, SchemeError, SolverAbort, State, evolve
from .geometry import (FoliatedSpacetime, MeshError, build_circle_mesh, build_flrw_strip,
                       build_interval_mesh, build_sphere_mesh, build_torus_mesh)
from .io import (read_snapshot_csv, sha256_file, write_csv, write_diagnostics_csv, write_mesh_vtk)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
SCHEMA_VERSION = 1

_num = {"type": "number"}
_side = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["constant", "sine", "cosine"]},
        "value": _num, "offset": _num, "amplitude": _num,
        "frequency": _num,
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "geometry", "flux", "initial", "T"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["circle", "interval", "torus", "sphere", "strip"]},
                "n_cells": {"type": "integer", "minimum": 3},
                "nx": {"type": "integer", "minimum": 2},
                "ny": {"type": "integer", "minimum": 2},
                "level": {"type": "integer", "minimum": 0, "maximum": 7},
                "spatial_topology": {"enum": ["circle", "interval"]},
                "scale_factor": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {"kind": {"enum": ["constant", "linear", "exponential"]},
                                   "rate": _num},
                },
                "weight": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["uniform", "sine", "checkerboard"]},
                        "value": {"type": "number", "exclusiveMinimum": 0},
                        "base": _num, "amplitude": _num, "low": _num, "high": _num,
                        "n": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "flux": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": list(FLUX_FAMILIES)},
                "params": {"type": "object"},
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "required": ["profile"],
            "properties": {
                "profile": {"enum": ["constant", "sine", "cosine-bell", "riemann", "random"]},
                "value": _num, "offset": _num, "amplitude": _num,
                "frequency": {"type": "integer", "minimum": 1},
                "center": {"type": "array", "items": _num, "minItems": 1, "maxItems": 3},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "height": _num, "uL": _num, "uR": _num, "x0": _num, "low": _num, "high": _num,
            },
        },
        "boundary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"left": _side, "right": _side,
                           "sup_norm": {"type": "number", "exclusiveMinimum": 0}},
        },
        "scheme": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "numerical_flux": {"enum": ["lax-friedrichs", "godunov-1d"]},
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "mode": {"enum": ["corrected", "source-term"]},
            },
        },
        "T": {"type": "number", "exclusiveMinimum": 0},
        "snapshot_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "quadrature_snapshots": {"type": "integer", "minimum": 5},
        "levels": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scale": {"type": "number", "exclusiveMinimum": 0},
                "conservation": {"type": "number", "exclusiveMinimum": 0},
                "balance": {"type": "number", "exclusiveMinimum": 0},
                "contraction_slack": {"type": "number", "minimum": 0},
            },
        },
    },
}

DEFAULT_TOLERANCES = {"scale": 1.0, "conservation": 1e-12, "balance": 1e-10,
                      "contraction_slack": 1e-12}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class UsageError(ValueError):
    pass


def validate_config(cfg) -> list:
    """Every schema and semantic problem, sorted; empty when the config is valid."""
    v = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errs = []
    for e in v.iter_errors(cfg):
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        errs.append(f"{loc}: {e.message}")
    if errs or not isinstance(cfg, dict):
        return sorted(errs)
    g, fl = cfg["geometry"], cfg["flux"]["name"]
    kind = g["kind"]
    needs = {"circle": ["n_cells"], "interval": ["n_cells"], "strip": ["n_cells"],
             "torus": ["nx", "ny"], "sphere": ["level"]}[kind]
    for key in needs:
        if key not in g:
            errs.append(f"geometry: '{key}' is required for kind {kind!r}")
    allowed = {"circle": ("advection-circle", "burgers-circle"),
               "interval": ("advection-circle", "burgers-circle"),
               "strip": ("burgers-strip", "advection-strip", "advection-circle", "burgers-circle"),
               "torus": ("torus-weighted-advection", "torus-weighted-burgers", "torus-incompatible"),
               "sphere": ("sphere-rotation",)}[kind]
    if fl not in allowed:
        errs.append(f"flux/name: {fl!r} does not live on geometry {kind!r} (allowed: {', '.join(allowed)})")
    if fl == "torus-incompatible" and g.get("weight", {}).get("kind", "uniform") == "checkerboard":
        errs.append("flux/name: torus-incompatible needs a smooth weight rule")
    T = cfg["T"]
    for t in cfg.get("snapshot_times", []):
        if t > T:
            errs.append(f"snapshot_times: {t} exceeds T = {T}")
    sch = cfg.get("scheme", {})
    if sch.get("numerical_flux") == "godunov-1d" and kind in ("torus", "sphere"):
        errs.append("scheme/numerical_flux: godunov-1d needs a 1D geometry")
    spatial = g.get("spatial_topology", "circle")
    with_sides = kind == "interval" or (kind == "strip" and spatial == "interval")
    if with_sides:
        b = cfg.get("boundary", {})
        for side in ("left", "right"):
            if side not in b:
                errs.append(f"boundary: '{side}' data is required for a geometry with boundaries")
        if kind == "interval":
            errs.append("geometry: use kind 'strip' with spatial_topology 'interval' for problems with boundaries")
    elif "boundary" in cfg:
        errs.append("boundary: given for a geometry without boundary")
    if "scale_factor" in g and kind != "strip":
        errs.append("geometry/scale_factor: only strips have a scale factor")
    prof = cfg["initial"]["profile"]
    if prof == "riemann" and kind not in ("circle", "strip", "interval"):
        errs.append("initial/profile: riemann data needs a 1D geometry")
    return sorted(errs)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    errs = validate_config(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


# -- problem assembly ----------------------------------------------------------

@dataclass
class Problem:
    cfg: dict
    mesh: object
    flux: object
    scheme: SchemeConfig
    u0: np.ndarray
    T: float
    snapshot_times: list
    seed: int
    spacetime: Optional[FoliatedSpacetime] = None
    boundary: Optional[BoundaryData] = None
    profile: Optional[Callable] = None
    oracle: Optional[Callable] = None
    oracle_name: Optional[str] = None
    meta: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return self.mesh.h


def _side_closure(spec: dict) -> Callable[[float], float]:
    kind = spec["kind"]
    if kind == "constant":
        v = float(spec.get("value", 0.0))
        return lambda t: v
    off, amp, fr = (float(spec.get("offset", 0.0)), float(spec.get("amplitude", 1.0)),
                    float(spec.get("frequency", 1.0)))
    trig = np.sin if kind == "sine" else np.cos
    return lambda t: off + amp * float(trig(2 * np.pi * fr * t))


def _scale_factor(spec: Optional[dict]) -> Callable[[float], float]:
    if spec is None or spec["kind"] == "constant":
        return lambda t: 1.0
    r = float(spec.get("rate", 1.0))
    if spec["kind"] == "linear":
        return lambda t: 1.0 + r * t
    return lambda t: float(np.exp(r * t))


def _profile(spec: dict, mesh) -> Optional[Callable]:
    p = spec["profile"]
    if p == "constant":
        c = float(spec.get("value", 0.0))
        return lambda x: np.full(np.atleast_2d(x).shape[0], c)
    if p == "sine":
        off, amp, fr = (float(spec.get("offset", 0.0)), float(spec.get("amplitude", 1.0)),
                        int(spec.get("frequency", 1)))
        if mesh.topology == "sphere":
            return lambda x: off + amp * np.atleast_2d(x)[:, 2]
        return lambda x: off + amp * np.sin(2 * np.pi * fr * np.atleast_2d(x)[:, 0])
    if p == "cosine-bell":
        height = float(spec.get("height", 1.0))
        if mesh.topology == "sphere":
            return an.cosine_bell(tuple(spec.get("center", (1.0, 0.0, 0.0))),
                                  float(spec.get("radius", np.pi / 3)), height)
        c = np.asarray(spec.get("center", [0.5] * mesh.cell_center.shape[1]), dtype=float)
        R = float(spec.get("radius", 0.25))

        def bell(x):
            r = mesh.distance(np.atleast_2d(x), c)
            return np.where(r < R, 0.5 * height * (1.0 + np.cos(np.pi * r / R)), 0.0)
        return bell
    if p == "riemann":
        uL, uR, x0 = float(spec.get("uL", 1.0)), float(spec.get("uR", 0.0)), float(spec.get("x0", 0.5))
        return lambda x: np.where(np.atleast_2d(x)[:, 0] < x0, uL, uR)
    return None


def _oracle(cfg: dict, mesh, flux, profile) -> tuple:
    name = cfg["flux"]["name"]
    init = cfg["initial"]
    params = cfg["flux"].get("params", {})
    uniform = cfg["geometry"].get("weight", {"kind": "uniform"})["kind"] == "uniform"
    if cfg["geometry"]["kind"] == "circle" and uniform and profile is not None:
        speed = float(params.get("speed", 1.0))
        if name == "advection-circle":
            return "circle-transport", lambda t, x: an.circle_transport(
                lambda y: profile(y[:, None]), speed, t, np.atleast_2d(x)[:, 0])
        sine1 = (init["profile"] == "sine" and float(init.get("amplitude", 1.0)) == 1.0
                 and float(init.get("offset", 0.0)) == 0.0 and int(init.get("frequency", 1)) == 1)
        if name == "burgers-circle" and sine1 and speed == 1.0:
            return "burgers-sine", lambda t, x: an.burgers_sine(t, np.atleast_2d(x)[:, 0])
    if name == "sphere-rotation" and params.get("h", "linear") == "linear" and profile is not None:
        axis = params.get("axis", (0.0, 0.0, 1.0))
        w = float(params.get("angular_speed", 1.0))
        return "sphere-rotation", lambda t, x: an.sphere_rotation(profile, axis, t, x, w)
    return None, None


def build_problem(cfg: dict, seed: int, refine: int = 0) -> Problem:
    g = cfg["geometry"]
    kind = g["kind"]
    factor = 2 ** refine
    wspec = dict(g.get("weight", {"kind": "uniform"}))
    wrule = weight_closure(wspec.pop("kind"), **wspec)
    spacetime = None
    T = float(cfg["T"])
    try:
        if kind == "circle":
            mesh = build_circle_mesh(g["n_cells"] * factor, weight=wrule)
        elif kind == "interval":
            mesh = build_interval_mesh(g["n_cells"] * factor, weight=wrule)
        elif kind == "torus":
            mesh = build_torus_mesh(g["nx"] * factor, g["ny"] * factor, weight=wrule)
        elif kind == "sphere":
            mesh = build_sphere_mesh(g["level"] + refine)
        else:
            spacetime = build_flrw_strip(g["n_cells"] * factor, T, a=_scale_factor(g.get("scale_factor")),
                                         spatial_topology=g.get("spatial_topology", "circle"))
            mesh = spacetime.mesh
        flux = named_flux(cfg["flux"]["name"], mesh, **cfg["flux"].get("params", {}))
        scheme = SchemeConfig(**cfg.get("scheme", {}))
        scheme.check_mesh(mesh, flux)
    except (MeshError, FluxError, SchemeError) as exc:
        raise ConfigError([str(exc)]) from exc
    init = cfg["initial"]
    prof = _profile(init, mesh)
    if prof is None:
        rng = np.random.default_rng(seed)
        u0 = rng.uniform(float(init.get("low", -1.0)), float(init.get("high", 1.0)), mesh.n_cells)
    else:
        u0 = np.asarray(prof(mesh.cell_center), dtype=float).reshape(mesh.n_cells)
    boundary = None
    if spacetime is not None:
        b = cfg.get("boundary", {})
        boundary = BoundaryData(initial=u0,
                                left=_side_closure(b["left"]) if "left" in b else None,
                                right=_side_closure(b["right"]) if "right" in b else None,
                                sup_norm=b.get("sup_norm"))
    oname, oracle = _oracle(cfg, mesh, flux, prof)
    return Problem(cfg=cfg, mesh=mesh, flux=flux, scheme=scheme, u0=u0, T=T,
                   snapshot_times=sorted(set(float(t) for t in cfg.get("snapshot_times", []))),
                   seed=seed, spacetime=spacetime, boundary=boundary, profile=prof,
                   oracle=oracle, oracle_name=oname)


def solve(problem: Problem, snapshot_times=None, u0=None, u_range=None, record_steps=False):
    times = problem.snapshot_times if snapshot_times is None else snapshot_times
    u0 = problem.u0 if u0 is None else u0
    if problem.spacetime is not None:
        bd = problem.boundary
        if u0 is not problem.u0:
            bd = BoundaryData(initial=u0, left=bd.left, right=bd.right, sup_norm=bd.sup_norm)
        return evolve_foliated(problem.spacetime, problem.flux, bd, problem.scheme,
                               snapshot_times=times, u_range=u_range, record_steps=record_steps)
    return evolve(State(problem.mesh, u0), problem.flux, problem.scheme, problem.T,
                  snapshot_times=times, u_range=u_range, record_steps=record_steps)


# -- output bookkeeping --------------------------------------------------------------

class Outputs:
    def __init__(self, out_dir: Path, command: str, argv: list):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list = []
        self.manifest = {"tool": "manifold-fv", "version": __version__, "command": command,
                         "argv": argv, "python": platform.python_version(), "status": "running",
                         "error": None, "verdicts": {}, "files": []}
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.files.append(p)
        return p

    def finish(self, status: str, error: Optional[str] = None) -> Path:
        self.manifest["status"] = status
        self.manifest["error"] = error
        self.manifest["wall_clock_seconds"] = time.perf_counter() - self.t0
        self.manifest["files"] = [{"path": p.name, "sha256": sha256_file(p), "bytes": p.stat().st_size}
                                  for p in self.files if p.exists()]
        mp = self.dir / "manifest.json"
        mp.write_text(json.dumps(self.manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
        return mp


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _seed_comment(problem: Problem) -> str:
    return f"seed={problem.seed}"


def write_report(path: Path, lines: list):
    path.write_text("\n".join(lines) + "\n")


def _tolerances(cfg: dict, scale: Optional[float]) -> dict:
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(cfg.get("tolerances", {}))
    if scale is not None:
        tol["scale"] = float(scale)
    return tol


# -- commands --------------------------------------------------------------------------

def cmd_run(cfg: dict, out: Outputs, seed: int, tol_scale: Optional[float] = None) -> int:
    problem = build_problem(cfg, seed)
    out.manifest.update(config=cfg, seed=seed, mesh_signature=problem.mesh.signature())
    traj = solve(problem)
    out.manifest["snapshot_times"] = list(traj.times)
    snaps = []
    for i, (t, u) in enumerate(zip(traj.times, traj.states)):
        stem = f"snapshot_{i:04d}"
        write_mesh_vtk(out.path(stem + ".vtk"), problem.mesh, u, title=f"t={t!r} seed={seed}")
        write_snapshot_csv_rel(out.path(stem + ".csv"), problem, traj, i)
        snaps.append({"t": t, "csv": stem + ".csv", "vtk": stem + ".vtk"})
    out.manifest["snapshots"] = snaps
    extra = {}
    errs = []
    if problem.oracle is not None:
        col = np.full(len(traj.step_t), np.nan)
        for t, u in zip(traj.times, traj.states):
            e = an.cell_error(problem.mesh, u, lambda x: problem.oracle(t, x))
            errs.append((t, e))
            col[int(np.argmin(np.abs(np.asarray(traj.step_t) - t)))] = e
        extra["l1_error_oracle"] = col
    write_diagnostics_csv(out.path("diagnostics.csv"), traj, extra, comment=_seed_comment(problem))
    drift = an.conservation_check(traj) if problem.mesh.closed else None
    bal = an.balance_check(traj) if not problem.mesh.closed else None
    out.manifest["verdicts"] = {"mass_drift": drift, "boundary_balance": bal,
                                "oracle": problem.oracle_name,
                                "final_oracle_l1_error": errs[-1][1] if errs else None,
                                "n_steps": traj.meta.get("n_steps"),
                                "backend": traj.meta.get("backend")}
    lines = [f"manifold-fv {__version__} run", f"seed {seed}", problem.mesh.summary(),
             f"flux {problem.flux.name}", f"scheme {problem.scheme.numerical_flux} cfl={problem.scheme.cfl!r} "
             f"mode={problem.scheme.mode}", f"T {problem.T!r}", f"steps {traj.meta.get('n_steps')}",
             f"snapshots {len(traj.times)}"]
    if drift is not None:
        lines.append(f"relative mass drift {drift:.17g}")
    if bal is not None:
        lines.append(f"boundary balance residual {bal:.17g}")
    for t, e in errs:
        lines.append(f"L1 error vs {problem.oracle_name} at t={t:.17g}: {e:.17g}")
    write_report(out.path("report.txt"), lines)
    return EXIT_OK


def write_snapshot_csv_rel(path, problem: Problem, traj, i: int):
    from .io import write_snapshot_csv
    return write_snapshot_csv(path, problem.mesh, traj.states[i], traj.measure_at(i),
                              comment=f"seed={problem.seed} t={traj.times[i]!r}")


def cmd_converge(cfg: dict, out: Outputs, seed: int, levels: int,
                 tol_scale: Optional[float] = None) -> int:
    if levels < 3:
        raise UsageError(f"convergence studies need at least 3 levels, got {levels}")
    base = build_problem(cfg, seed)
    if base.oracle is None:
        raise ConfigError([f"no exact oracle registered for flux {cfg['flux']['name']!r} with "
                           f"initial profile {cfg['initial']['profile']!r}"])
    out.manifest.update(config=cfg, seed=seed, levels=levels, oracle=base.oracle_name)
    rows = []
    for lev in range(levels):
        p = base if lev == 0 else build_problem(cfg, seed, refine=lev)
        tr = solve(p, snapshot_times=[])
        err = an.cell_error(p.mesh, tr.states[-1], lambda x: p.oracle(p.T, x))
        rows.append((lev, p.h, p.mesh.n_cells, tr.meta.get("n_steps"), err))
    rate = an.convergence_rate([(r[1], r[4]) for r in rows])
    decreasing = all(rows[i + 1][4] < rows[i][4] for i in range(len(rows) - 1))
    write_csv(out.path("converge.csv"), ["level", "h", "n_cells", "n_steps", "l1_error"], rows,
              comment=f"seed={seed}")
    out.manifest["verdicts"] = {"rate": rate, "errors_strictly_decreasing": decreasing}
    lines = [f"manifold-fv {__version__} converge", f"seed {seed}", f"oracle {base.oracle_name}",
             "level h n_cells steps l1_error"]
    lines += [f"{r[0]} {r[1]:.17g} {r[2]} {r[3]} {r[4]:.17g}" for r in rows]
    lines.append(f"fitted rate {rate:.17g}")
    lines.append(f"errors strictly decreasing: {decreasing}")
    write_report(out.path("report.txt"), lines)
    return EXIT_OK


@dataclass
class Check:
    name: str
    status: str
    value: float
    tolerance: float
    detail: str = ""

    @property
    def hard_failure(self) -> bool:
        return self.status == "FAIL"


def _status(ok: bool) -> str:
    return "pass" if ok else "FAIL"


def _boundary_values(problem: Problem) -> list:
    vals = []
    if problem.boundary is not None:
        for tag in problem.spacetime.timelike_tags:
            vals += [problem.boundary.value(tag, t) for t in np.linspace(0.0, problem.T, 201)]
    return vals


def cmd_verify(cfg: dict, out: Outputs, seed: int, tol_scale: Optional[float] = None) -> int:
    tol = _tolerances(cfg, tol_scale)
    problem = build_problem(cfg, seed)
    out.manifest.update(config=cfg, seed=seed, tolerances=tol, mesh_signature=problem.mesh.signature())
    nq = int(cfg.get("quadrature_snapshots", 41))
    times = sorted(set(problem.snapshot_times) | set(np.linspace(0.0, problem.T, nq).tolist()))
    traj = solve(problem, snapshot_times=times)
    checks = []
    compatible = an.contraction_claimed(problem.flux, problem.scheme)
    mesh = problem.mesh
    h = mesh.h

    if mesh.closed:
        drift = an.conservation_check(traj)
        checks.append(Check("conservation", _status(drift <= tol["conservation"]) if problem.scheme.mode == "corrected"
                            else "not claimed", drift, tol["conservation"]))
    else:
        bal = an.balance_check(traj)
        checks.append(Check("boundary-balance", _status(bal <= tol["balance"]), bal, tol["balance"]))

    mp = an.max_principle_check(traj, _boundary_values(problem))
    checks.append(Check("max-principle", _status(mp.ok) if compatible else "not claimed",
                        max(mp.lower - mp.observed_min, mp.observed_max - mp.upper), 0.0,
                        f"range [{mp.lower:.17g}, {mp.upper:.17g}] observed "
                        f"[{mp.observed_min:.17g}, {mp.observed_max:.17g}]"))

    rng = np.random.default_rng(seed + 1)
    span = float(np.ptp(problem.u0)) or 1.0
    v0 = problem.u0 + 0.25 * span * rng.uniform(-1.0, 1.0, mesh.n_cells)
    vals = np.concatenate([problem.u0, v0, _boundary_values(problem)])
    u_range = (float(vals.min()), float(vals.max()))
    tu = solve(problem, snapshot_times=[], u_range=u_range, record_steps=True)
    tv = solve(problem, snapshot_times=[], u0=v0, u_range=u_range, record_steps=True)
    cr = an.contraction_check(tu, tv, slack=tol["contraction_slack"])
    checks.append(Check("contraction", cr.status, cr.max_increase, tol["contraction_slack"],
                        "" if cr.claimed else "geometry-incompatible flux: distance may grow"))
    write_csv(out.path("contraction.csv"), ["t", "l1_distance"], zip(tu.times, cr.distances),
              comment=f"seed={seed}")

    bumps = an.standard_battery(mesh, problem.T)
    rep = an.entropy_battery(traj, bumps=bumps, tol_scale=tol["scale"])
    kw, bw, rw = rep.worst_case()
    checks.append(Check("entropy-residual", _status(rep.passed), rep.worst, rep.tolerance,
                        f"worst k={kw:.17g} bump={bw}; tol = {an.ENTROPY_TOL_CONSTANT!r}*sqrt(h)*"
                        f"{tol['scale']!r}"))
    rows = [(float(rep.ks[j]), b.ident, rep.residuals[j, i]) for j in range(rep.ks.size)
            for i, b in enumerate(bumps)]
    write_csv(out.path("entropy_residuals.csv"), ["k", "test_function", "residual"], rows,
              comment=f"seed={seed}")

    if problem.spacetime is not None and problem.spacetime.timelike_tags:
        dts = np.diff(traj.times)
        cells, steps = default_trace_window(h, float(dts.min()))
        ttol = an.tol_trace(h, tol["scale"])
        mrows = []
        worst = 0.0
        for side in problem.spacetime.timelike_tags:
            for r in check_traces(traj, side, cells, steps)[1:]:
                ok = r.violation <= ttol
                worst = max(worst, r.violation)
                mrows.append((r.t, r.face, side, r.trace, r.u_B, ok, r.worst_k, r.violation))
        write_csv(out.path("membership.csv"),
                  ["t", "face", "side", "trace", "u_B", "admissible", "worst_k", "violation"], mrows,
                  comment=f"seed={seed}")
        checks.append(Check("boundary-membership", _status(worst <= ttol), worst, ttol,
                            f"window {cells} cells x {steps} snapshots"))

    write_csv(out.path("checks.csv"), ["check", "status", "value", "tolerance", "detail"],
              [(c.name, c.status, c.value, c.tolerance, c.detail) for c in checks],
              comment=f"seed={seed}")
    out.manifest["verdicts"] = {c.name: c.status for c in checks}
    lines = [f"manifold-fv {__version__} verify", f"seed {seed}", mesh.summary(),
             f"flux {problem.flux.name}; scheme {problem.scheme.numerical_flux} "
             f"mode={problem.scheme.mode} cfl={problem.scheme.cfl!r}",
             f"tolerances {json.dumps(tol, sort_keys=True)}"]
    for c in checks:
        lines.append(f"{c.status:>12}  {c.name}: value={c.value:.17g} tol={c.tolerance:.17g} {c.detail}".rstrip())
    failed = any(c.hard_failure for c in checks)
    lines.append("overall: " + ("FAIL" if failed else "pass"))
    write_report(out.path("report.txt"), lines)
    return EXIT_CHECK if failed else EXIT_OK


def _load_manifest(run_dir: Path) -> dict:
    p = Path(run_dir) / "manifest.json"
    try:
        return json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read manifest in {run_dir}: {exc}") from exc


def cmd_compare(run_a: Path, run_b: Path, out: Outputs, slack: float = 1e-12) -> int:
    ma, mb = _load_manifest(run_a), _load_manifest(run_b)
    for m, d in ((ma, run_a), (mb, run_b)):
        if m.get("command") != "run" or "snapshots" not in m:
            raise UsageError(f"{d} is not the output of a completed run")
    if ma.get("mesh_signature") != mb.get("mesh_signature"):
        raise UsageError(f"runs live on different meshes: {ma.get('mesh_signature')} vs "
                         f"{mb.get('mesh_signature')}")
    if ma.get("snapshot_times") != mb.get("snapshot_times"):
        raise UsageError("runs have different snapshot times")
    out.manifest.update(run_a=str(run_a), run_b=str(run_b))
    rows = []
    for sa, sb in zip(ma["snapshots"], mb["snapshots"]):
        ua, wa = read_snapshot_csv(Path(run_a) / sa["csv"])
        ub, _ = read_snapshot_csv(Path(run_b) / sb["csv"])
        rows.append((sa["t"], float(np.sum(wa * np.abs(ua - ub)))))
    d = np.array([r[1] for r in rows])
    inc = float(np.max(np.diff(d))) if d.size > 1 else 0.0
    ok = inc <= slack
    write_csv(out.path("compare.csv"), ["t", "l1_distance"], rows)
    out.manifest["verdicts"] = {"nonincreasing": ok, "max_increase": inc}
    write_report(out.path("report.txt"), [f"manifold-fv {__version__} compare",
                                          f"{run_a} vs {run_b}",
                                          f"max increase {inc:.17g} (slack {slack!r})",
                                          "nonincreasing: " + ("pass" if ok else "FAIL")])
    return EXIT_OK if ok else EXIT_CHECK


# -- entry point -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="manifold-fv",
                                 description="Finite volume solver and checks for scalar conservation "
                                             "laws on manifolds.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, hlp in (("run", "evolve one configuration and write snapshots"),
                      ("converge", "refinement study against an exact solution"),
                      ("verify", "run the property check battery")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tolerance-scale", type=float, default=None)
        if name == "converge":
            p.add_argument("--levels", type=int, default=None)
    p = sub.add_parser("compare", help="L1 distances between two runs")
    p.add_argument("run_a", type=Path)
    p.add_argument("run_b", type=Path)
    p.add_argument("--out", required=True, type=Path)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    out = Outputs(args.out, args.command, argv)
    code, status, error = EXIT_OK, "ok", None
    try:
        if args.command == "compare":
            code = cmd_compare(args.run_a, args.run_b, out)
        else:
            if args.tolerance_scale is not None and not args.tolerance_scale > 0:
                raise UsageError("--tolerance-scale must be positive")
            cfg = load_config(args.config)
            seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
            if seed < 0:
                raise UsageError("--seed must be nonnegative")
            if args.command == "run":
                code = cmd_run(cfg, out, seed, args.tolerance_scale)
            elif args.command == "converge":
                levels = args.levels if args.levels is not None else int(cfg.get("levels", 3))
                code = cmd_converge(cfg, out, seed, levels, args.tolerance_scale)
            else:
                code = cmd_verify(cfg, out, seed, args.tolerance_scale)
        status = "ok" if code == EXIT_OK else "check-failure"
    except ConfigError as exc:
        code, status, error = EXIT_CONFIG, "config-error", exc.errors
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
    except (UsageError, BoundaryError) as exc:
        code, status, error = EXIT_CONFIG, "usage-error", str(exc)
        print(f"error: {exc}", file=sys.stderr)
    except SolverAbort as exc:
        code, status, error = EXIT_ABORT, "solver-abort", str(exc)
        print(f"solver abort: {exc}", file=sys.stderr)
    except Exception as exc:  # recorded, then re-raised after the manifest is written
        out.finish("internal-error", "".join(traceback.format_exception(exc)))
        raise
    out.finish(status, error)
    return code


if __name__ == "__main__":
    sys.exit(main())
