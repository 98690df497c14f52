"""Agreement of the compiled, vectorised and reference face loops."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from manifold_fv import _kernels
from manifold_fv.flux_model import named_flux, weight_closure
from manifold_fv.fv_core import SchemeConfig, State, evolve, scheme_speeds
from manifold_fv.geometry import build_circle_mesh, build_interval_mesh, build_sphere_mesh, build_torus_mesh

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not importable")


def _loop(flux, scheme, u, backend, ghost=None):
    m = flux.mesh
    s = scheme_speeds(flux, scheme)
    lip = flux.lipschitz(u.min(), u.max())
    g = np.zeros(m.n_faces) if ghost is None else ghost
    return _kernels.face_loop(m.face_owner, m.face_neighbor, s, np.abs(s) * lip, u, g,
                              flux.scalar, scheme.code, scheme.mode == "corrected", backend=backend)


CASES = [
    ("advection-circle", lambda: build_circle_mesh(37), "godunov-1d"),
    ("burgers-circle", lambda: build_circle_mesh(41, weight=weight_closure("sine")), "godunov-1d"),
    ("burgers-circle", lambda: build_circle_mesh(41), "lax-friedrichs"),
    ("torus-weighted-burgers", lambda: build_torus_mesh(9, 7, weight=weight_closure("sine")),
     "lax-friedrichs"),
    ("sphere-rotation", lambda: build_sphere_mesh(2), "lax-friedrichs"),
]


@pytest.mark.parametrize("name,mesh_fn,nf", CASES)
@pytest.mark.parametrize("mode", ["corrected", "source-term"])
def test_numpy_matches_python(name, mesh_fn, nf, mode, rng):
    flux = named_flux(name, mesh_fn())
    scheme = SchemeConfig(numerical_flux=nf, mode=mode)
    u = rng.uniform(-2, 2, flux.mesh.n_cells)
    a1, q1 = _loop(flux, scheme, u, "numpy")
    a2, q2 = _loop(flux, scheme, u, "python")
    assert np.allclose(a1, a2, rtol=0, atol=1e-14)
    assert np.allclose(q1, q2, rtol=0, atol=1e-14)


@needs_numba
@pytest.mark.parametrize("name,mesh_fn,nf", CASES)
def test_numba_matches_numpy(name, mesh_fn, nf, rng):
    flux = named_flux(name, mesh_fn())
    scheme = SchemeConfig(numerical_flux=nf)
    u = rng.uniform(-2, 2, flux.mesh.n_cells)
    a1, q1 = _loop(flux, scheme, u, "numpy")
    a2, q2 = _loop(flux, scheme, u, "numba")
    assert np.allclose(a1, a2, rtol=0, atol=1e-14)
    assert np.allclose(q1, q2, rtol=0, atol=1e-14)


@needs_numba
def test_ghost_values_agree(rng):
    m = build_interval_mesh(20)
    flux = named_flux("burgers-strip", m)
    scheme = SchemeConfig(numerical_flux="godunov-1d")
    u = rng.uniform(-1, 1, 20)
    ghost = np.zeros(m.n_faces)
    ghost[m.boundary_faces()] = [0.8, -0.3]
    a1, _ = _loop(flux, scheme, u, "numpy", ghost)
    a2, _ = _loop(flux, scheme, u, "numba", ghost)
    assert np.allclose(a1, a2, atol=1e-15)


@needs_numba
def test_full_runs_agree():
    m = build_circle_mesh(64)
    flux = named_flux("burgers-circle", m)
    s0 = State(m, np.sin(2 * np.pi * m.cell_center[:, 0]))
    sch = SchemeConfig(numerical_flux="godunov-1d", cfl=0.9)
    a = evolve(s0, flux, sch, 0.3, backend="numpy")
    b = evolve(s0, flux, sch, 0.3, backend="numba")
    assert a.meta["n_steps"] == b.meta["n_steps"]
    assert np.max(np.abs(a.states[-1] - b.states[-1])) <= 1e-13


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), s=st.floats(-2, 2))
def test_godunov_bracketed_by_endpoint_values(a, b, s):
    h = lambda v: 0.5 * v * v  # noqa: E731
    q, _, _ = _kernels.face_fluxes_numpy(np.array([a]), np.array([b]), np.array([s]),
                                         np.array([abs(s) * 3]), h, _kernels.GODUNOV, True, 0.0)
    grid = np.append(np.linspace(min(a, b), max(a, b), 2001), np.clip(0.0, min(a, b), max(a, b)))
    vals = s * h(grid)
    assert vals.min() - 1e-9 <= q[0] <= vals.max() + 1e-9


def test_env_flag_selects_numpy():
    env = dict(os.environ, MANIFOLD_FV_NUMBA="0")
    out = subprocess.run([sys.executable, "-c",
                          "from manifold_fv import _kernels; print(_kernels.BACKEND, _kernels.HAVE_NUMBA)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "False"]


@needs_numba
def test_default_backend_is_numba():
    env = {k: v for k, v in os.environ.items() if k != "MANIFOLD_FV_NUMBA"}
    out = subprocess.run([sys.executable, "-c", "from manifold_fv import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"
