"""Explicit first-order monotone finite volume scheme.

Update for cell K over one forward Euler step::

    u_K^{n+1} = u_K^n - dt/|K| sum_{e in dK} q_{K,e}(u_K, u_L) + dt s_K

Two compatibility modes:

``corrected``
    Face speeds are projected onto the discretely divergence-free set
    (sum over every cell of the outward speeds is zero), so constants are
    exact solutions.  The flux sum is evaluated in incremental form
    ``q - phi_e(u_K)``, which keeps constant neighbourhoods bitwise fixed.
    No source.
``source-term``
    Raw face speeds in conservative form; when the field carries an
    analytic divergence, the discrete divergence at the frozen state is
    swapped for the analytic one through ``s_K``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from . import _kernels
from .flux_model import FluxField
from .geometry import Mesh

log = logging.getLogger(__name__)

NUMERICAL_FLUXES = {"lax-friedrichs": _kernels.LAX_FRIEDRICHS, "godunov-1d": _kernels.GODUNOV}
MODES = ("corrected", "source-term")


class SchemeError(ValueError):
    pass


class SolverAbort(RuntimeError):
    def __init__(self, message, cell=None, step=None):
        super().__init__(message)
        self.cell = cell
        self.step = step


@dataclass(frozen=True)
class SchemeConfig:
    numerical_flux: str = "lax-friedrichs"
    cfl: float = 0.5
    mode: str = "corrected"
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.numerical_flux not in NUMERICAL_FLUXES:
            raise SchemeError(f"unknown numerical flux {self.numerical_flux!r}")
        if not (0.0 < self.cfl <= 1.0):
            raise SchemeError(f"CFL number must lie in (0, 1], got {self.cfl}")
        if self.mode not in MODES:
            raise SchemeError(f"unknown compatibility mode {self.mode!r}")

    @property
    def code(self) -> int:
        return NUMERICAL_FLUXES[self.numerical_flux]

    def check_mesh(self, mesh: Mesh, flux: FluxField):
        if self.numerical_flux == "godunov-1d":
            if mesh.dimension != 1:
                raise SchemeError("godunov-1d only runs on 1D meshes")
            if flux.scalar.convex is None:
                raise SchemeError("godunov-1d needs a convex or concave scalar flux")


@dataclass
class State:
    mesh: Mesh
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=float)
        if self.u.shape != (self.mesh.n_cells,):
            raise ValueError(f"state has {self.u.shape} values for {self.mesh.n_cells} cells")
        if not np.all(np.isfinite(self.u)):
            raise ValueError("state contains non-finite values")

    @property
    def mass(self) -> float:
        return float(np.sum(self.mesh.cell_measure * self.u))


@dataclass
class Trajectory:
    """Snapshots of one run plus per-step diagnostics."""

    mesh: Mesh
    flux: FluxField
    scheme: SchemeConfig
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    measures: list = field(default_factory=list)
    step_t: list = field(default_factory=list)
    step_dt: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    umin: list = field(default_factory=list)
    umax: list = field(default_factory=list)
    l1: list = field(default_factory=list)
    boundary_outflow: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def record(self, t, u, measure):
        if self.times and not t > self.times[-1]:
            raise ValueError("trajectory times must increase strictly")
        self.times.append(float(t))
        self.states.append(np.array(u, copy=True))
        self.measures.append(measure)

    def diag(self, t, dt, u, measure, outflow):
        self.step_t.append(float(t))
        self.step_dt.append(float(dt))
        self.mass.append(float(np.sum(measure * u)))
        self.umin.append(float(u.min()))
        self.umax.append(float(u.max()))
        self.l1.append(float(np.sum(measure * np.abs(u))))
        self.boundary_outflow.append(float(outflow))

    @property
    def u(self) -> np.ndarray:
        return np.array(self.states)

    @property
    def u0(self) -> np.ndarray:
        return self.states[0]

    def measure_at(self, n: int) -> np.ndarray:
        m = self.measures[n]
        return self.mesh.cell_measure if m is None else m

    def state(self, n: int = -1) -> State:
        return State(self.mesh, self.states[n], self.times[n])

    def snapshot_index(self, t: float, tol: float = 1e-12) -> int:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return i


# -- compatibility correction ----------------------------------------------

def _incidence(mesh: Mesh) -> sparse.csr_matrix:
    inner = np.flatnonzero(mesh.face_neighbor >= 0)
    rows = np.concatenate([mesh.face_owner[inner], mesh.face_neighbor[inner]])
    cols = np.concatenate([inner, inner])
    vals = np.concatenate([np.ones(inner.size), -np.ones(inner.size)])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(mesh.n_cells, mesh.n_faces))


def project_divergence_free(mesh: Mesh, speeds: np.ndarray, sweeps: int = 2) -> np.ndarray:
    """Smallest antisymmetric correction making every cell's outward speed sum vanish.

    Solves the dual-graph Laplacian L p = d for the cell defects d and
    subtracts the discrete gradient of p from the face speeds.  Only valid
    on closed meshes, where sum_K d_K = 0.
    """
    if not mesh.closed:
        raise ValueError("divergence-free projection needs a closed mesh")
    B = _incidence(mesh)
    L = (B @ B.T).tolil()
    L[0, :] = 0.0
    L[0, 0] = 1.0
    L = L.tocsc()
    s = np.array(speeds, dtype=float)
    for _ in range(sweeps):
        d = B @ s
        rhs = d.copy()
        rhs[0] = 0.0
        p = spsolve(L, rhs)
        s = s - B.T @ p
    return s


def compatible_speeds(flux: FluxField) -> np.ndarray:
    """Face speeds used by corrected mode (cached on the flux)."""
    cache = flux._cache
    if "corrected" not in cache:
        raw = flux.face_speeds()
        mesh = flux.mesh
        if mesh.closed:
            d = flux.cell_defects(raw)
            if np.max(np.abs(d), initial=0.0) == 0.0:
                s = raw
            else:
                s = project_divergence_free(mesh, raw)
        else:
            s = raw
        s = np.ascontiguousarray(s)
        s.setflags(write=False)
        cache["corrected"] = s
        cache["defect_raw"] = float(np.max(np.abs(flux.cell_defects(raw)) / mesh.cell_measure,
                                           initial=0.0))
        cache["defect_corrected"] = float(np.max(np.abs(flux.cell_defects(s)) / mesh.cell_measure,
                                                 initial=0.0))
    return cache["corrected"]


def scheme_speeds(flux: FluxField, scheme: SchemeConfig) -> np.ndarray:
    return compatible_speeds(flux) if scheme.mode == "corrected" else flux.face_speeds()


# -- fluxes ------------------------------------------------------------------

def face_flux(mesh: Mesh, flux: FluxField, face: int, owner: int, ubar: float,
              speeds: Optional[np.ndarray] = None) -> float:
    """phi_e(u) = h(u) s_e, seen from ``owner`` (antisymmetric under owner swap)."""
    mesh._check_face(face)
    s = (flux.face_speeds() if speeds is None else speeds)[face]
    if owner == mesh.face_owner[face]:
        sign = 1.0
    elif owner == mesh.face_neighbor[face]:
        sign = -1.0
    else:
        raise KeyError(f"cell {owner} is not adjacent to face {face}")
    return float(sign * s * np.asarray(flux.scalar.h(np.array([ubar])))[0])


def numerical_flux(flux: FluxField, face: int, uK: float, uL: float, scheme: SchemeConfig,
                   owner: Optional[int] = None, lip: Optional[float] = None,
                   speeds: Optional[np.ndarray] = None) -> float:
    """Two-point monotone flux q_{K,e}(uK, uL) out of ``owner`` (default: the face owner)."""
    mesh = flux.mesh
    scheme.check_mesh(mesh, flux)
    s = float((scheme_speeds(flux, scheme) if speeds is None else speeds)[face])
    if owner is not None and owner == mesh.face_neighbor[face]:
        s = -s
    if lip is None:
        lip = flux.lipschitz(min(uK, uL), max(uK, uL))
    sc = flux.scalar
    q, _, _ = _kernels.face_fluxes_numpy(np.array([uK], float), np.array([uL], float),
                                         np.array([s]), np.array([abs(s) * lip]), sc.h,
                                         scheme.code, sc.convex, sc.critical_point)
    return float(q[0])


def _data_range(u: np.ndarray, u_range) -> tuple:
    if u_range is not None:
        return float(u_range[0]), float(u_range[1])
    return float(u.min()), float(u.max())


def _dt_denominator(mesh: Mesh, flux: FluxField, speeds: np.ndarray, lip: float,
                    scheme: SchemeConfig) -> np.ndarray:
    lam = np.abs(speeds) * lip
    den = 0.5 * np.bincount(mesh.face_owner, weights=lam, minlength=mesh.n_cells)
    inner = mesh.face_neighbor >= 0
    den += 0.5 * np.bincount(mesh.face_neighbor[inner], weights=lam[inner], minlength=mesh.n_cells)
    d = flux.cell_defects(speeds)
    den += 0.5 * lip * np.abs(d)
    if scheme.mode == "source-term":
        div = flux.analytic_divergence()
        if div is not None:
            den += lip * np.abs(d - mesh.cell_measure * div)
    return den


def cfl_timestep(mesh: Mesh, flux: FluxField, state, cfl: float, u_range=None,
                 cap: Optional[float] = None, scheme: Optional[SchemeConfig] = None) -> float:
    """Largest monotone step: dt = cfl * min_K |K| / (1/2 sum_e lambda_e + defect terms).

    lambda_e = |s_e| Lip(h) over the data range (``u_range`` caps it).  For a
    divergence-free field this is cfl * min_K 2|K| / sum_e lambda_e.
    """
    if not (0.0 < cfl <= 1.0):
        raise SchemeError(f"CFL number must lie in (0, 1], got {cfl}")
    scheme = scheme or SchemeConfig(cfl=cfl)
    u = state.u if isinstance(state, State) else np.asarray(state, dtype=float)
    lo, hi = _data_range(u, u_range)
    lip = flux.lipschitz(lo, hi)
    den = _dt_denominator(mesh, flux, scheme_speeds(flux, scheme), lip, scheme)
    pos = den > 0.0
    if not np.any(pos):
        return float(cap) if cap is not None else float("inf")
    dt = cfl * float(np.min(mesh.cell_measure[pos] / den[pos]))
    return min(dt, float(cap)) if cap is not None else dt


def _source(flux: FluxField, scheme: SchemeConfig, u: np.ndarray, speeds: np.ndarray):
    if scheme.mode != "source-term":
        return None
    div = flux.analytic_divergence()
    if div is None:
        return None
    mesh = flux.mesh
    hu = np.asarray(flux.scalar.h(u), dtype=float)
    return hu * (flux.cell_defects(speeds) / mesh.cell_measure - div)


def advance(u: np.ndarray, flux: FluxField, scheme: SchemeConfig, dt: float, lip: float,
            speeds: np.ndarray, ghost: Optional[np.ndarray] = None,
            incremental: Optional[bool] = None, backend: Optional[str] = None):
    """Flux sums for one step: returns (acc, face fluxes) with acc_K = sum_e q_{K,e}."""
    mesh = flux.mesh
    if ghost is None:
        ghost = np.zeros(mesh.n_faces)
    if incremental is None:
        incremental = scheme.mode == "corrected"
    lam = np.abs(speeds) * lip
    return _kernels.face_loop(mesh.face_owner, mesh.face_neighbor, speeds, lam, u, ghost,
                              flux.scalar, scheme.code, incremental, backend=backend)


def step(state: State, flux: FluxField, scheme: SchemeConfig, dt: float, u_range=None,
         ghost: Optional[np.ndarray] = None, step_index: int = 0,
         backend: Optional[str] = None) -> State:
    mesh = flux.mesh
    scheme.check_mesh(mesh, flux)
    u = state.u
    lo, hi = _data_range(u, u_range)
    if ghost is not None:
        lo, hi = min(lo, float(ghost.min())), max(hi, float(ghost.max()))
    lip = flux.lipschitz(lo, hi)
    speeds = scheme_speeds(flux, scheme)
    acc, _ = advance(u, flux, scheme, dt, lip, speeds, ghost, backend=backend)
    new = u - (dt / mesh.cell_measure) * acc
    src = _source(flux, scheme, u, speeds)
    if src is not None:
        new = new + dt * src
    _check_finite(new, step_index)
    return State(mesh, new, state.t + dt)


def _check_finite(u: np.ndarray, step_index: int):
    bad = np.flatnonzero(~np.isfinite(u))
    if bad.size:
        k = int(bad[0])
        raise SolverAbort(f"non-finite value in cell {k} at step {step_index}", cell=k, step=step_index)
    if np.max(np.abs(u)) > 1e150:
        k = int(np.argmax(np.abs(u)))
        raise SolverAbort(f"overflow in cell {k} at step {step_index}", cell=k, step=step_index)


def snapshot_schedule(T: float, snapshot_times: Optional[Sequence[float]]) -> list:
    if not T > 0.0:
        raise SchemeError(f"horizon T must be positive, got {T}")
    ts = {0.0, float(T)}
    if snapshot_times is not None:
        for t in snapshot_times:
            t = float(t)
            if t < 0.0 or t > T:
                raise SchemeError(f"snapshot time {t} outside [0, {T}]")
            ts.add(t)
    return sorted(ts)


def evolve(state0: State, flux: FluxField, scheme: SchemeConfig, T: float,
           snapshot_times: Optional[Sequence[float]] = None, u_range=None,
           record_steps: bool = False, max_steps: int = 10_000_000,
           backend: Optional[str] = None) -> Trajectory:
    """March to ``T`` landing exactly on every snapshot time.

    ``u_range`` fixes the data range used by the CFL bound and the
    Lax-Friedrichs viscosity; two runs with the same ``u_range`` then share
    their whole step sequence.
    """
    mesh = flux.mesh
    scheme.check_mesh(mesh, flux)
    schedule = snapshot_schedule(T, snapshot_times)
    traj = Trajectory(mesh=mesh, flux=flux, scheme=scheme)
    speeds = scheme_speeds(flux, scheme)
    traj.meta.update(
        defect_raw=flux._cache.get("defect_raw"),
        defect_corrected=flux._cache.get("defect_corrected"),
        backend=backend or _kernels.BACKEND,
        u_range=None if u_range is None else tuple(float(v) for v in u_range),
    )
    u = state0.u.copy()
    t = float(state0.t)
    traj.record(t, u, None)
    traj.diag(t, 0.0, u, mesh.cell_measure, 0.0)
    next_i = 1
    n = 0
    while next_i < len(schedule):
        target = schedule[next_i]
        gap = target - t
        cap = gap if next_i == 1 else min(gap, schedule[next_i] - schedule[next_i - 1])
        dt = cfl_timestep(mesh, flux, u, scheme.cfl, u_range=u_range, cap=cap, scheme=scheme)
        landing = dt >= gap * (1.0 - 1e-12)
        if landing:
            dt = gap
        lo, hi = _data_range(u, u_range)
        lip = flux.lipschitz(lo, hi)
        acc, _ = advance(u, flux, scheme, dt, lip, speeds, backend=backend)
        new = u - (dt / mesh.cell_measure) * acc
        src = _source(flux, scheme, u, speeds)
        if src is not None:
            new = new + dt * src
        n += 1
        _check_finite(new, n)
        u = new
        t = target if landing else t + dt
        traj.diag(t, dt, u, mesh.cell_measure, 0.0)
        if landing:
            traj.record(t, u, None)
            next_i += 1
        elif record_steps:
            traj.record(t, u, None)
        if n >= max_steps:
            raise SolverAbort(f"step limit {max_steps} reached at t={t}", step=n)
    traj.meta["n_steps"] = n
    return traj
