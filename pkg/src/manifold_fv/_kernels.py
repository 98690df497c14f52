"""Face-loop kernels of the finite volume update.

Two interchangeable implementations: a numba ``@njit`` loop and a
vectorised numpy path.  ``MANIFOLD_FV_NUMBA=0`` in the environment selects
the numpy path at import time; so does a missing numba.  Custom scalar
fluxes (python closures) always take the numpy path.
"""

from __future__ import annotations

import os

import numpy as np

H_LINEAR = 0
H_BURGERS = 1
H_CUSTOM = -1

LAX_FRIEDRICHS = 0
GODUNOV = 1

try:
    if os.environ.get("MANIFOLD_FV_NUMBA", "1").strip().lower() in ("0", "false", "no", "off"):
        raise ImportError("numba disabled by MANIFOLD_FV_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def _h_builtin(kind, u):
    if kind == H_LINEAR:
        return u
    return 0.5 * u * u


def _face_loop_py(owner, neighbor, speed, lam, u, ghost, kind, scheme, incremental, acc, qout):
    acc[:] = 0.0
    for e in range(owner.shape[0]):
        k = owner[e]
        l = neighbor[e]
        a = u[k]
        b = u[l] if l >= 0 else ghost[e]
        s = speed[e]
        ha = _h_builtin(kind, a)
        hb = _h_builtin(kind, b)
        if scheme == LAX_FRIEDRICHS:
            q = 0.5 * s * (ha + hb) - 0.5 * lam[e] * (b - a)
        else:
            lo = min(a, b)
            hi = max(a, b)
            hmax = max(ha, hb)
            if kind == H_BURGERS:
                c = min(max(0.0, lo), hi)
                hmin = min(min(ha, hb), 0.5 * c * c)
            else:
                hmin = min(ha, hb)
            if a <= b:
                q = s * hmin if s >= 0.0 else s * hmax
            else:
                q = s * hmax if s >= 0.0 else s * hmin
        qout[e] = q
        if incremental:
            acc[k] += q - s * ha
            if l >= 0:
                acc[l] += s * hb - q
        else:
            acc[k] += q
            if l >= 0:
                acc[l] -= q


if HAVE_NUMBA:
    _h_builtin_jit = njit(cache=True, inline="always")(_h_builtin)

    @njit(cache=True)
    def _face_loop_numba(owner, neighbor, speed, lam, u, ghost, kind, scheme, incremental, acc, qout):
        for i in range(acc.shape[0]):
            acc[i] = 0.0
        for e in range(owner.shape[0]):
            k = owner[e]
            l = neighbor[e]
            a = u[k]
            b = u[l] if l >= 0 else ghost[e]
            s = speed[e]
            if kind == 0:
                ha = a
                hb = b
            else:
                ha = 0.5 * a * a
                hb = 0.5 * b * b
            if scheme == 0:
                q = 0.5 * s * (ha + hb) - 0.5 * lam[e] * (b - a)
            else:
                lo = min(a, b)
                hi = max(a, b)
                hmax = max(ha, hb)
                if kind == 1:
                    c = min(max(0.0, lo), hi)
                    hmin = min(min(ha, hb), 0.5 * c * c)
                else:
                    hmin = min(ha, hb)
                if a <= b:
                    q = s * hmin if s >= 0.0 else s * hmax
                else:
                    q = s * hmax if s >= 0.0 else s * hmin
            qout[e] = q
            if incremental:
                acc[k] += q - s * ha
                if l >= 0:
                    acc[l] += s * hb - q
            else:
                acc[k] += q
                if l >= 0:
                    acc[l] -= q
else:  # pragma: no cover - exercised only without numba
    _face_loop_numba = None


def face_fluxes_numpy(a, b, speed, lam, h, scheme, convex=None, critical=None):
    """Two-point numerical flux for all faces at once.

    ``h`` is a vectorised scalar flux; ``convex`` is True/False for convex or
    concave ``h`` (needed by Godunov) and ``critical`` its extremum, or None
    when ``h`` is monotone.
    """
    ha = h(a)
    hb = h(b)
    if scheme == LAX_FRIEDRICHS:
        return 0.5 * speed * (ha + hb) - 0.5 * lam * (b - a), ha, hb
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    hmin = np.minimum(ha, hb)
    hmax = np.maximum(ha, hb)
    if critical is not None:
        hc = h(np.clip(critical, lo, hi))
        if convex:
            hmin = np.minimum(hmin, hc)
        else:
            hmax = np.maximum(hmax, hc)
    pos = speed >= 0.0
    q_up = np.where(pos, speed * hmin, speed * hmax)
    q_down = np.where(pos, speed * hmax, speed * hmin)
    return np.where(a <= b, q_up, q_down), ha, hb


def _face_loop_numpy(owner, neighbor, speed, lam, u, ghost, h, scheme, incremental, acc, qout,
                     convex=None, critical=None):
    interior = neighbor >= 0
    a = u[owner]
    b = np.where(interior, u[np.where(interior, neighbor, 0)], ghost)
    q, ha, hb = face_fluxes_numpy(a, b, speed, lam, h, scheme, convex, critical)
    qout[:] = q
    n = acc.shape[0]
    own = q - speed * ha if incremental else q
    nbr = (speed * hb - q) if incremental else -q
    acc[:] = np.bincount(owner, weights=own, minlength=n)
    acc += np.bincount(neighbor[interior], weights=nbr[interior], minlength=n)


def _builtin_h(kind):
    if kind == H_LINEAR:
        return lambda v: v
    return lambda v: 0.5 * v * v


def face_loop(owner, neighbor, speed, lam, u, ghost, scalar_flux, scheme, incremental,
              backend=None):
    """Accumulate per-cell outward flux sums; returns (acc, face fluxes)."""
    acc = np.empty(u.shape[0])
    qout = np.empty(owner.shape[0])
    kind = scalar_flux.kind
    backend = backend or BACKEND
    if kind != H_CUSTOM and backend == "numba" and HAVE_NUMBA:
        _face_loop_numba(owner, neighbor, speed, lam, u, ghost, kind, scheme, bool(incremental),
                         acc, qout)
    elif kind != H_CUSTOM and backend == "python":
        _face_loop_py(owner, neighbor, speed, lam, u, ghost, kind, scheme, bool(incremental),
                      acc, qout)
    else:
        h = scalar_flux.h if kind == H_CUSTOM else _builtin_h(kind)
        _face_loop_numpy(owner, neighbor, speed, lam, u, ghost, h, scheme, incremental, acc, qout,
                         scalar_flux.convex, scalar_flux.critical_point)
    return acc, qout
