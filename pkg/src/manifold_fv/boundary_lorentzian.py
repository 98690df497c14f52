"""Boundary entropy flux, admissible trace sets and the foliated 1+1 solver.

Normals are outward unit 1-forms.  On the strip with metric
-dt^2 + a(t)^2 dx^2 they are

* initial leaf H_0:  N = -dt
* final leaf H_T:    N = +dt
* left side x = 0:   N = -a(t) dx
* right side x = 1:  N = +a(t) dx

and the spacetime flux is f(u) = (u, h(u) X) in (t, x) components.

For a Kruzkov pair the boundary entropy flux collapses to
E_N(u_B, v) = sgn(u_B - k) <N, f(v) - f(k)>, and v is admissible for k
iff (sgn(v - k) - sgn(u_B - k)) <N, f(v) - f(k)> >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate

from . import _kernels
from .flux_model import FluxField, sgn
from .fv_core import (SchemeConfig, SchemeError, SolverAbort, Trajectory, _check_finite,
                      scheme_speeds, snapshot_schedule)
from .geometry import FoliatedSpacetime

Number = Union[float, int]


class BoundaryError(ValueError):
    pass


def _as_time_closure(v) -> Callable[[float], float]:
    if v is None:
        return None
    if callable(v):
        return v
    val = float(v)
    return lambda t: val


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Prescribed u_B on the boundary of a strip: initial leaf plus time-like sides."""

    initial: Union[Callable, np.ndarray]
    left: Optional[Union[Callable, Number]] = None
    right: Optional[Union[Callable, Number]] = None
    sup_norm: Optional[float] = None

    def initial_values(self, mesh) -> np.ndarray:
        if callable(self.initial):
            return np.asarray(self.initial(mesh.cell_center[:, 0]), dtype=float).reshape(mesh.n_cells)
        u = np.asarray(self.initial, dtype=float).reshape(-1)
        if u.shape[0] != mesh.n_cells:
            raise BoundaryError("initial leaf data does not match the mesh")
        return u

    def side(self, tag: str) -> Callable[[float], float]:
        fn = _as_time_closure(self.left if tag == "left" else self.right)
        if fn is None:
            raise BoundaryError(f"no boundary data on the {tag} side")
        return fn

    def value(self, tag: str, t: float) -> float:
        v = float(self.side(tag)(t))
        if not np.isfinite(v):
            raise BoundaryError(f"non-finite boundary value on {tag} at t={t}")
        if self.sup_norm is not None and abs(v) > self.sup_norm * (1 + 1e-12):
            raise BoundaryError(f"boundary value {v} on {tag} exceeds the declared sup norm")
        return v


@dataclass(frozen=True, eq=False)
class FoliatedFlux:
    """Spacetime flux f(u) = (sigma u, h(u) X) on a strip, sigma > 0 for future orientation."""

    spatial: FluxField
    sigma: float = 1.0

    def evaluate(self, u, x=None) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        xs = self.spatial.mesh.cell_center[:1] if x is None else np.atleast_2d(x)
        sp = self.spatial.evaluate(u, xs)[..., 0]
        return np.stack([self.sigma * u, sp], axis=-1)

    def du(self, u, x=None) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        xs = self.spatial.mesh.cell_center[:1] if x is None else np.atleast_2d(x)
        sp = self.spatial.du(u, xs)[..., 0]
        return np.stack([self.sigma * np.ones_like(u), sp], axis=-1)


def _normal_flux(flux, N, x=None) -> Callable:
    N = np.atleast_1d(np.asarray(N, dtype=float))

    def g(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if isinstance(flux, FoliatedFlux):
            vals = flux.evaluate(u, x)
        else:
            xs = flux.mesh.cell_center[:1] if x is None else np.atleast_2d(x)
            vals = flux.evaluate(u, xs)
        return vals.reshape(u.shape[0], -1) @ N

    return g


def _normal_speed(flux, N, x=None) -> Callable:
    N = np.atleast_1d(np.asarray(N, dtype=float))

    def gp(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if isinstance(flux, FoliatedFlux):
            vals = flux.du(u, x)
        else:
            xs = flux.mesh.cell_center[:1] if x is None else np.atleast_2d(x)
            vals = flux.du(u, xs)
        return vals.reshape(u.shape[0], -1) @ N

    return gp


def boundary_entropy_flux(flux, k: float, N, u_B: float, ubar, x=None):
    """E_N(u_B, v) = <N, F(u_B)> + U'(u_B) <N, f(v) - f(u_B)> for the Kruzkov pair at k.

    U'(u_B) = sgn(u_B - k) with sgn(0) = 0.
    """
    g = _normal_flux(flux, N, x)
    v = np.atleast_1d(np.asarray(ubar, dtype=float))
    gB, gk, gv = g([u_B])[0], g([k])[0], g(v)
    s = float(np.sign(u_B - k))
    out = s * (gB - gk) + s * (gv - gB)
    return float(out[0]) if np.ndim(ubar) == 0 else out


def normal_entropy_flux(flux, k: float, N, ubar, x=None):
    """<N, F(v)> for the Kruzkov pair at k."""
    g = _normal_flux(flux, N, x)
    v = np.atleast_1d(np.asarray(ubar, dtype=float))
    out = sgn(v - k) * (g(v) - g([k])[0])
    return float(out[0]) if np.ndim(ubar) == 0 else out


def kruzkov_grid(lo: float, hi: float, n: int = 33, margin: float = 0.1) -> np.ndarray:
    span = max(hi - lo, 1e-12)
    return np.linspace(lo - margin * span, hi + margin * span, n)


@dataclass
class Membership:
    admissible: bool
    worst_k: float
    violation: float


def _violations(g, u_B: float, v: np.ndarray, k: np.ndarray) -> np.ndarray:
    """E_N(u_B, v) - <N, F(v)> on the (v, k) grid, shape (len(v), len(k))."""
    gv = g(v)[:, None]
    gk = g(k)[None, :]
    sB = np.sign(u_B - k)[None, :]
    sv = np.sign(v[:, None] - k[None, :])
    return (sB - sv) * (gv - gk)


def admissible_membership(flux, N, u_B: float, ubar: float, k_grid: Optional[Sequence] = None,
                          tol: float = 1e-12, x=None, include_data: bool = True) -> Membership:
    """Is ``ubar`` in E_N(u_B)?  Checks E_N(u_B, v) <= <N, F(v)> + tol for every k.

    ``include_data`` adds k = u_B and k = ubar to the grid; k = u_B is the
    index that decides the singleton case.
    """
    if k_grid is None:
        k_grid = kruzkov_grid(min(u_B, ubar), max(u_B, ubar))
    k = np.asarray(k_grid, dtype=float).ravel()
    if include_data:
        k = np.concatenate([k, [u_B, ubar]])
    g = _normal_flux(flux, N, x)
    viol = _violations(g, float(u_B), np.array([float(ubar)]), k)[0]
    i = int(np.argmax(viol))
    worst = float(viol[i])
    return Membership(admissible=worst <= tol, worst_k=float(k[i]), violation=max(worst, 0.0))


def admissible_set(flux, N, u_B: float, v_grid, k_grid, tol: float = 1e-12, x=None,
                   include_data: bool = True) -> np.ndarray:
    """Brute-force E_N(u_B) on ``v_grid``: boolean mask."""
    v = np.asarray(v_grid, dtype=float).ravel()
    k = np.asarray(k_grid, dtype=float).ravel()
    g = _normal_flux(flux, N, x)
    out = np.empty(v.shape[0], dtype=bool)
    for i, vi in enumerate(v):
        kk = np.concatenate([k, [u_B, vi]]) if include_data else k
        out[i] = _violations(g, float(u_B), np.array([vi]), kk)[0].max() <= tol
    return out


@dataclass
class BoundaryFaceClass:
    face: Optional[int]
    kind: str
    speeds: np.ndarray
    samples: np.ndarray

    @property
    def outflow(self) -> bool:
        return self.kind in ("outflow", "spacelike-final")


def classify_boundary_face(flux, N, u_range, samples: int = 65, face: Optional[int] = None,
                           x=None, spacelike: Optional[str] = None) -> BoundaryFaceClass:
    """Sign pattern of <N, d_u f(v)> over the sampled range.

    Outflow when positive for every sample, inflow when negative for every
    sample, else sonic/mixed.  ``spacelike`` ("initial"/"final") labels leaf
    faces instead.
    """
    us = np.linspace(float(u_range[0]), float(u_range[1]), samples)
    sp = _normal_speed(flux, N, x)(us)
    if np.all(sp > 0.0):
        kind = "outflow"
    elif np.all(sp < 0.0):
        kind = "inflow"
    else:
        kind = "sonic/mixed"
    if spacelike is not None:
        if spacelike not in ("initial", "final"):
            raise BoundaryError(f"unknown space-like part {spacelike!r}")
        kind = f"spacelike-{spacelike}"
    return BoundaryFaceClass(face=face, kind=kind, speeds=sp, samples=us)


def godunov_boundary_flux(flux: FluxField, face: int, u_inside: float, u_B: float,
                          scale: float = 1.0) -> float:
    """Exact Riemann flux out of the interior cell with ghost state u_B."""
    mesh = flux.mesh
    if mesh.dimension != 1:
        raise BoundaryError("boundary Riemann fluxes are only implemented in 1D")
    if mesh.face_neighbor[face] >= 0:
        raise BoundaryError(f"face {face} is not a boundary face")
    sc = flux.scalar
    if sc.convex is None:
        raise BoundaryError("boundary Riemann flux needs a convex or concave scalar flux")
    s = scale * flux.face_speeds()[face]
    q, _, _ = _kernels.face_fluxes_numpy(np.array([u_inside], float), np.array([u_B], float),
                                         np.array([s]), np.array([0.0]), sc.h, _kernels.GODUNOV,
                                         sc.convex, sc.critical_point)
    return float(q[0])


def side_normal(spacetime: FoliatedSpacetime, tag: str, t: float) -> np.ndarray:
    a = spacetime.a(t)
    if tag == "left":
        return np.array([0.0, -a])
    if tag == "right":
        return np.array([0.0, a])
    if tag == "initial":
        return np.array([-1.0, 0.0])
    if tag == "final":
        return np.array([1.0, 0.0])
    raise BoundaryError(f"unknown boundary part {tag!r}")


def check_future_timelike(spacetime: FoliatedSpacetime, flux: FoliatedFlux, u_range,
                          samples: int = 33) -> dict:
    """Leaf-time component of d_u f must be uniformly positive.

    Also reports max a(t)|h'(u)|/sigma; values above 1 mean d_u f leaves the
    light cone (the scheme still runs, only the strict time-like reading fails).
    """
    us = np.linspace(float(u_range[0]), float(u_range[1]), samples)
    ts = np.linspace(0.0, spacetime.T, samples)
    d = flux.du(us)
    tcomp = d[:, 0]
    if not np.all(tcomp > 0.0):
        i = int(np.argmin(tcomp))
        raise BoundaryError(
            f"flux is not future-oriented: time component {tcomp[i]!r} at u={us[i]!r}, "
            f"x={float(spacetime.mesh.cell_center[0, 0])!r}, t=0.0")
    ratio = max(spacetime.a(t) for t in ts) * float(np.max(np.abs(d[:, 1]))) / float(tcomp.min())
    return {"min_time_component": float(tcomp.min()), "causal_ratio": ratio,
            "strictly_timelike": ratio < 1.0}


def evolve_foliated(spacetime: FoliatedSpacetime, flux: Union[FluxField, FoliatedFlux],
                    boundary: BoundaryData, scheme: SchemeConfig,
                    snapshot_times: Optional[Sequence[float]] = None, u_range=None,
                    record_steps: bool = False, max_steps: int = 10_000_000,
                    backend: Optional[str] = None) -> Trajectory:
    """Leafwise monotone update of div_g f(u) = 0 on the strip.

    With leaf measure a(t)|K| the balance over one step reads

        a(t_{n+1}) |K| sigma u^{n+1} = a(t_n) |K| sigma u^n - dt sum_e q_e,

    where q_e uses face speeds scaled by a(t_n + dt/2).  Time-like sides use
    the exact Riemann flux against the ghost state u_B(t_n).
    """
    ff = flux if isinstance(flux, FoliatedFlux) else FoliatedFlux(flux)
    spatial = ff.spatial
    mesh = spacetime.mesh
    if spatial.mesh is not mesh:
        raise BoundaryError("flux must live on the strip's spatial mesh")
    scheme.check_mesh(mesh, spatial)
    u = boundary.initial_values(mesh).copy()
    T = spacetime.T
    schedule = snapshot_schedule(T, snapshot_times)
    bfaces = mesh.boundary_faces()
    tags = [mesh.face_tag[e] for e in bfaces]
    for tag in set(tags):
        boundary.side(tag)
    probe = [float(u.min()), float(u.max())]
    for tag in set(tags):
        probe += [boundary.value(tag, t) for t in np.linspace(0.0, T, 17)]
    lo0, hi0 = (min(probe), max(probe)) if u_range is None else (float(u_range[0]), float(u_range[1]))
    info = check_future_timelike(spacetime, ff, (lo0, hi0))
    if spatial.scalar.convex is None and bfaces.size:
        raise SchemeError("time-like boundaries need a convex or concave scalar flux")

    speeds0 = scheme_speeds(spatial, scheme)
    sigma = ff.sigma
    measure = mesh.cell_measure
    ghost = np.zeros(mesh.n_faces)
    incremental = scheme.mode == "corrected"
    lam_unit = np.abs(speeds0)
    den_unit = 0.5 * np.bincount(mesh.face_owner, weights=lam_unit, minlength=mesh.n_cells)
    inner = mesh.face_neighbor >= 0
    den_unit += 0.5 * np.bincount(mesh.face_neighbor[inner], weights=lam_unit[inner],
                                  minlength=mesh.n_cells)
    traj = Trajectory(mesh=mesh, flux=spatial, scheme=scheme)
    traj.meta.update(kind="foliated", boundary=boundary, spacetime=spacetime, sigma=sigma,
                     timelike=info, backend=backend or _kernels.BACKEND)
    t = 0.0
    a_now = spacetime.a(0.0)
    traj.record(t, u, a_now * measure)
    traj.diag(t, 0.0, u, sigma * a_now * measure, 0.0)
    outflow = 0.0
    next_i = 1
    n = 0
    sc = spatial.scalar
    while next_i < len(schedule):
        target = schedule[next_i]
        gap = target - t
        for e, tag in zip(bfaces, tags):
            ghost[e] = boundary.value(tag, t)
        if u_range is None:
            lo, hi = float(u.min()), float(u.max())
            if bfaces.size:
                lo, hi = min(lo, float(ghost[bfaces].min())), max(hi, float(ghost[bfaces].max()))
        else:
            lo, hi = float(u_range[0]), float(u_range[1])
        lip = spatial.lipschitz(lo, hi)
        den = den_unit * lip
        pos = den > 0.0
        if np.any(pos):
            dt = scheme.cfl * (a_now / spacetime.a_max) * sigma * float(np.min(measure[pos] / den[pos]))
        else:
            dt = gap
        landing = dt >= gap * (1.0 - 1e-12)
        if landing:
            dt = gap
        a_mid = spacetime.a(t + 0.5 * dt)
        a_next = spacetime.a(target) if landing else spacetime.a(t + dt)
        speeds = speeds0 * a_mid
        acc, q = _kernels.face_loop(mesh.face_owner, mesh.face_neighbor, speeds,
                                    np.abs(speeds) * lip, u, ghost, sc, scheme.code,
                                    incremental, backend=backend)
        if bfaces.size:
            a_in = u[mesh.face_owner[bfaces]]
            qb, _, _ = _kernels.face_fluxes_numpy(a_in, ghost[bfaces], speeds[bfaces],
                                                  np.zeros(bfaces.size), sc.h, _kernels.GODUNOV,
                                                  sc.convex, sc.critical_point)
            np.add.at(acc, mesh.face_owner[bfaces], qb - q[bfaces])
            outflow += dt * float(np.sum(qb))
        new = (a_now / a_next) * u - (dt / (sigma * a_next * measure)) * acc
        n += 1
        _check_finite(new, n)
        u = new
        t = target if landing else t + dt
        a_now = a_next
        traj.diag(t, dt, u, sigma * a_now * measure, outflow)
        if landing:
            traj.record(t, u, a_now * measure)
            next_i += 1
        elif record_steps:
            traj.record(t, u, a_now * measure)
        if n >= max_steps:
            raise SolverAbort(f"step limit {max_steps} reached at t={t}", step=n)
    traj.meta["n_steps"] = n
    return traj


@dataclass
class TraceEstimate:
    face: int
    side: str
    t: float
    t_window: tuple
    value: float
    window_cells: int
    window_steps: int


def default_trace_window(h: float, snapshot_dt: float, c_time: float = 0.25) -> tuple:
    """(window_cells, window_steps): 2 cells in space, c_time*sqrt(h) in time."""
    steps = max(1, int(round(c_time * np.sqrt(h) / snapshot_dt)))
    return 2, steps


def extract_weak_trace(traj: Trajectory, boundary_side: str, window_cells: int = 2,
                       window_steps: int = 1) -> list:
    """Space-time windowed averages next to one boundary side, one per snapshot."""
    mesh = traj.mesh
    if window_cells < 1 or window_steps < 1:
        raise BoundaryError("trace windows must be at least one cell and one snapshot")
    if window_cells > mesh.n_cells or window_steps > len(traj.times):
        raise BoundaryError("trace window exceeds the mesh or the trajectory")
    faces = mesh.boundary_faces(boundary_side)
    if faces.size != 1:
        raise BoundaryError(f"no boundary side {boundary_side!r} on this mesh")
    face = int(faces[0])
    # cells ordered by distance from the boundary face
    xb = mesh.face_nodes[face, 0]
    order = np.argsort(mesh.distance(mesh.cell_center, xb), kind="stable")[:window_cells]
    out = []
    nt = len(traj.times)
    half = window_steps // 2
    for n in range(nt):
        lo = min(max(0, n - half), nt - window_steps)
        hi = lo + window_steps
        vals = []
        for j in range(lo, hi):
            w = traj.measure_at(j)[order]
            vals.append(float(np.sum(w * traj.states[j][order]) / np.sum(w)))
        out.append(TraceEstimate(face=face, side=boundary_side, t=traj.times[n],
                                 t_window=(traj.times[lo], traj.times[hi - 1]),
                                 value=float(np.mean(vals)), window_cells=window_cells,
                                 window_steps=window_steps))
    return out


@dataclass
class TraceCheck:
    t: float
    face: int
    side: str
    trace: float
    u_B: float
    admissible: bool
    worst_k: float
    violation: float


def check_traces(traj: Trajectory, side: str, window_cells: int = 2, window_steps: int = 1,
                 n_k: int = 33, tol: float = 1e-12) -> list:
    """Membership of every windowed trace in E_N(u_B(t)) at its snapshot time."""
    boundary: BoundaryData = traj.meta["boundary"]
    spacetime: FoliatedSpacetime = traj.meta["spacetime"]
    ff = FoliatedFlux(traj.flux, traj.meta.get("sigma", 1.0))
    rows = []
    for tr in extract_weak_trace(traj, side, window_cells, window_steps):
        uB = boundary.value(side, tr.t)
        N = side_normal(spacetime, side, tr.t)
        kg = kruzkov_grid(min(uB, tr.value), max(uB, tr.value), n_k)
        m = admissible_membership(ff, N, uB, tr.value, kg, tol=tol)
        rows.append(TraceCheck(t=tr.t, face=tr.face, side=side, trace=tr.value, u_B=uB,
                               admissible=m.admissible, worst_k=m.worst_k, violation=m.violation))
    return rows


def boundary_distance(spacetime: FoliatedSpacetime, bu: BoundaryData, bv: BoundaryData, T: float,
                      flux: Optional[FluxField] = None, u_range=None, suppress_outflow: bool = False,
                      n_quad: int = 2001) -> float:
    """L1 distance of boundary data over (dM)_T: initial leaf plus time-like sides up to T.

    With ``suppress_outflow`` the sides along which d_u f points outward for
    every sampled u are left out.
    """
    mesh = spacetime.mesh
    d = float(np.sum(spacetime.leaf_measures(0.0) * np.abs(bu.initial_values(mesh) - bv.initial_values(mesh))))
    if T <= 0.0:
        return d
    ts = np.linspace(0.0, T, n_quad)
    for tag in spacetime.timelike_tags:
        if suppress_outflow:
            if flux is None or u_range is None:
                raise BoundaryError("suppressing outflow parts needs the flux and a data range")
            cls = classify_boundary_face(FoliatedFlux(flux), side_normal(spacetime, tag, 0.0), u_range)
            if cls.kind == "outflow":
                continue
        diff = np.array([abs(bu.value(tag, t) - bv.value(tag, t)) for t in ts])
        d += float(integrate.trapezoid(diff, ts))
    return d


def measure_CT(traj_u: Trajectory, traj_v: Trajectory, bu: BoundaryData, bv: BoundaryData,
               suppress_outflow: bool = False, u_range=None) -> np.ndarray:
    """Running constant C_T = max_{t <= T} ||u(t) - v(t)||_{L1(H_t)} / ||u_B - v_B||_{(dM)_t}."""
    if traj_u.times != traj_v.times:
        raise BoundaryError("trajectories must share snapshot times")
    st = traj_u.meta["spacetime"]
    out = []
    running = 0.0
    for n, t in enumerate(traj_u.times):
        num = float(np.sum(traj_u.measure_at(n) * np.abs(traj_u.states[n] - traj_v.states[n])))
        den = boundary_distance(st, bu, bv, t, flux=traj_u.flux, u_range=u_range,
                                suppress_outflow=suppress_outflow)
        if den > 0.0:
            running = max(running, num / den)
        elif num > 0.0:
            running = float("inf")
        out.append(running)
    return np.array(out)
