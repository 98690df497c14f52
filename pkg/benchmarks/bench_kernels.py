"""Face-loop timing: numba kernel vs the vectorised numpy path.

    python3 benchmarks/bench_kernels.py --repeat 20
"""

import argparse
import time

import numpy as np

from manifold_fv import _kernels
from manifold_fv.flux_model import named_flux
from manifold_fv.fv_core import SchemeConfig, advance, scheme_speeds
from manifold_fv.geometry import build_circle_mesh, build_sphere_mesh, build_torus_mesh


def _time(fn, repeat):
    fn()  # warm-up (and JIT compile)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases():
    m = build_circle_mesh(200_000)
    yield "circle n=200000 burgers LF", named_flux("burgers-circle", m), SchemeConfig()
    yield "circle n=200000 burgers godunov", named_flux("burgers-circle", m), SchemeConfig("godunov-1d")
    m = build_torus_mesh(256, 256)
    yield "torus 256x256 burgers LF", named_flux("torus-weighted-burgers", m), SchemeConfig()
    m = build_sphere_mesh(6)
    yield "sphere level 6 rotation LF", named_flux("sphere-rotation", m), SchemeConfig()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=10)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"numba available: {_kernels.HAVE_NUMBA}")
    print(f"{'case':36s} {'faces':>8s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, flux, scheme in cases():
        mesh = flux.mesh
        u = rng.uniform(-1, 1, mesh.n_cells)
        speeds = scheme_speeds(flux, scheme)
        acc_np, _ = advance(u, flux, scheme, 0.0, 1.0, speeds, backend="numpy")
        t_np = _time(lambda: advance(u, flux, scheme, 0.0, 1.0, speeds, backend="numpy"), args.repeat)
        if _kernels.HAVE_NUMBA:
            acc_nb, _ = advance(u, flux, scheme, 0.0, 1.0, speeds, backend="numba")
            diff = float(np.max(np.abs(acc_nb - acc_np)))
            t_nb = _time(lambda: advance(u, flux, scheme, 0.0, 1.0, speeds, backend="numba"), args.repeat)
            print(f"{name:36s} {mesh.n_faces:8d} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} "
                  f"{t_np / t_nb:8.2f}   max |diff| {diff:.2e}")
        else:
            print(f"{name:36s} {mesh.n_faces:8d} {1e3 * t_np:10.3f} {'-':>10s}")


if __name__ == "__main__":
    main()
