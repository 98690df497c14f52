"""Parameter-dependent flux fields, entropy pairs and structural checks.

Every flux here has product form f(u, x) = h(u) X(x): a scalar flux ``h``
times a vector field ``X`` on the mesh.  Geometry compatibility then reduces
to div_w X = 0.  The vector field hands the solver its face-integrated,
weight-scaled normal components ("face speeds")

    s_e = sum_q w_q <N, X(x_q)> wbar(x_q),

so that the face flux at a constant state u is h(u) s_e.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from . import _kernels
from .geometry import Mesh, MeshError


class FluxError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScalarFlux:
    """Scalar flux h(u) with derivative.

    ``convex`` is True (convex), False (concave) or None (neither, or
    unknown); ``critical_point`` is where h' vanishes, None when h is
    monotone.  ``kind`` selects a compiled kernel for the built-in fluxes.
    """

    h: Callable
    dh: Callable
    name: str = "custom"
    kind: int = _kernels.H_CUSTOM
    convex: Optional[bool] = None
    critical_point: Optional[float] = None
    d2h: Optional[Callable] = None

    def lipschitz(self, lo: float, hi: float, n: int = 257) -> float:
        """max |h'| over [lo, hi]."""
        if self.kind == _kernels.H_LINEAR:
            return 1.0
        if self.kind == _kernels.H_BURGERS:
            return float(max(abs(lo), abs(hi)))
        pts = np.linspace(lo, hi, n)
        if self.convex is not None:
            pts = np.array([lo, hi])
        return float(np.max(np.abs(self.dh(pts))))


def linear_flux() -> ScalarFlux:
    return ScalarFlux(h=lambda u: 1.0 * np.asarray(u, dtype=float),
                      dh=lambda u: np.ones_like(np.asarray(u, dtype=float)),
                      d2h=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
                      name="linear", kind=_kernels.H_LINEAR, convex=True, critical_point=None)


def burgers_flux() -> ScalarFlux:
    return ScalarFlux(h=lambda u: 0.5 * np.asarray(u, dtype=float) ** 2,
                      dh=lambda u: 1.0 * np.asarray(u, dtype=float),
                      d2h=lambda u: np.ones_like(np.asarray(u, dtype=float)),
                      name="burgers", kind=_kernels.H_BURGERS, convex=True, critical_point=0.0)


def zero_flux() -> ScalarFlux:
    return ScalarFlux(h=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
                      dh=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
                      name="zero", convex=True, critical_point=None)


def scalar_flux(h: Callable, dh: Optional[Callable], *, convex=None, critical_point=None,
                name="custom") -> ScalarFlux:
    if h is None or dh is None:
        raise FluxError("a scalar flux needs both h and its derivative dh")
    return ScalarFlux(h=h, dh=dh, name=name, convex=convex, critical_point=critical_point)


# -- vector fields -----------------------------------------------------------

class VectorField:
    """Base class: a tangent vector field on a mesh."""

    def __call__(self, mesh: Mesh, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cell_vectors(self, mesh: Mesh) -> np.ndarray:
        return self(mesh, mesh.cell_center)

    def face_speeds(self, mesh: Mesh) -> np.ndarray:
        nodes = mesh.face_nodes
        nf, nq, d = nodes.shape
        X = self(mesh, nodes.reshape(nf * nq, d)).reshape(nf, nq, -1)
        wbar = mesh.volume_form.at_faces(mesh)
        normal_comp = np.einsum("fqd,fd->fq", X, mesh.face_normal)
        return np.sum(mesh.face_node_weights * normal_comp * wbar, axis=1)

    def divergence(self, mesh: Mesh) -> Optional[np.ndarray]:
        """Analytic div_w X at cell centres, or None when unknown."""
        return None


@dataclass(frozen=True)
class WeightedConstantField(VectorField):
    """X = V / wbar for a constant chart vector V.

    wbar X = V is constant, so div_w X = 0 exactly for any weight, including
    piecewise-constant weights with jumps.
    """

    V: tuple

    def __call__(self, mesh, x):
        V = np.asarray(self.V, dtype=float)
        w = _weight_at(mesh, x)
        return V[None, :] / w[:, None]

    def cell_vectors(self, mesh):
        V = np.asarray(self.V, dtype=float)
        return V[None, :] / mesh.weights[:, None]

    def face_speeds(self, mesh):
        V = np.asarray(self.V, dtype=float)
        return mesh.face_measure * (mesh.face_normal @ V)

    def divergence(self, mesh):
        return np.zeros(mesh.n_cells)


@dataclass(frozen=True)
class ChartField(VectorField):
    """Field given by a closure of chart coordinates, optionally with analytic divergence."""

    func: Callable
    div: Optional[Callable] = None

    def __call__(self, mesh, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float).reshape(x.shape[0], -1)

    def divergence(self, mesh):
        if self.div is None:
            return None
        return np.asarray(self.div(mesh.cell_center), dtype=float).reshape(mesh.n_cells)


@dataclass(frozen=True)
class RotationField(VectorField):
    """Solid-body rotation omega * axis x x on the unit sphere (a Killing field)."""

    axis: tuple
    angular_speed: float = 1.0

    def __call__(self, mesh, x):
        a = np.asarray(self.axis, dtype=float)
        return self.angular_speed * np.cross(a[None, :], x)

    def divergence(self, mesh):
        return np.zeros(mesh.n_cells)


def _weight_at(mesh: Mesh, x: np.ndarray) -> np.ndarray:
    vf = mesh.volume_form
    if vf.mode == "smooth":
        return np.asarray(vf.closure(x), dtype=float).reshape(x.shape[0])
    idx = np.array([mesh.nearest_cell(p) for p in x], dtype=np.int64)
    return vf.weights[idx]


# -- flux fields -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FluxField:
    """f(u, x) = h(u) X(x) on a given mesh."""

    mesh: Mesh
    scalar: ScalarFlux
    field: VectorField
    name: str = "product"
    params: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def evaluate(self, u, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        X = self.field(self.mesh, x)
        hu = np.asarray(self.scalar.h(np.asarray(u, dtype=float)), dtype=float)
        return hu[..., None] * X

    def du(self, u, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        X = self.field(self.mesh, x)
        return np.asarray(self.scalar.dh(np.asarray(u, dtype=float)), dtype=float)[..., None] * X

    def face_speeds(self) -> np.ndarray:
        if "speeds" not in self._cache:
            s = np.ascontiguousarray(self.field.face_speeds(self.mesh), dtype=float)
            s.setflags(write=False)
            self._cache["speeds"] = s
        return self._cache["speeds"]

    def cell_vectors(self) -> np.ndarray:
        if "cellvec" not in self._cache:
            self._cache["cellvec"] = self.field.cell_vectors(self.mesh)
        return self._cache["cellvec"]

    def cell_defects(self, speeds: Optional[np.ndarray] = None) -> np.ndarray:
        """Discrete divergence of X per cell: sum of outward face speeds."""
        s = self.face_speeds() if speeds is None else speeds
        m = self.mesh
        d = np.bincount(m.face_owner, weights=s, minlength=m.n_cells)
        inner = m.face_neighbor >= 0
        d -= np.bincount(m.face_neighbor[inner], weights=s[inner], minlength=m.n_cells)
        return d

    def analytic_divergence(self) -> Optional[np.ndarray]:
        return self.field.divergence(self.mesh)

    def lipschitz(self, lo: float, hi: float) -> float:
        return self.scalar.lipschitz(lo, hi)


def make_product_flux(h, X: VectorField, mesh: Mesh, dh: Optional[Callable] = None,
                      name: str = "product", **params) -> FluxField:
    """f(u, x) = h(u) X(x).  ``h`` is a ScalarFlux or a closure paired with ``dh``."""
    if not isinstance(h, ScalarFlux):
        if dh is None:
            raise FluxError("make_product_flux: the derivative of h is required")
        h = scalar_flux(h, dh)
    if not isinstance(X, VectorField):
        raise FluxError("X must be a VectorField")
    return FluxField(mesh=mesh, scalar=h, field=X, name=name, params=dict(params))


def make_rotation_flux_sphere(h, mesh: Mesh, axis=(0.0, 0.0, 1.0), angular_speed: float = 1.0,
                              dh: Optional[Callable] = None) -> FluxField:
    if mesh.topology != "sphere":
        raise FluxError("rotation flux needs a sphere mesh")
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        raise FluxError("rotation axis must be nonzero")
    X = RotationField(axis=tuple(axis / norm), angular_speed=float(angular_speed))
    return make_product_flux(h, X, mesh, dh=dh, name="sphere-rotation",
                             axis=tuple(axis / norm), angular_speed=float(angular_speed))


# -- certificates ------------------------------------------------------------

@dataclass
class CompatibilityReport:
    defect: float
    compatible: bool
    tolerance: float
    cell_defects: np.ndarray
    worst_cell: int
    corrected: bool

    def text(self) -> str:
        return (f"geometry compatibility: max discrete divergence {self.defect:.17g} "
                f"(tol {self.tolerance:.3g}, corrected={self.corrected}) -> "
                f"{'compatible' if self.compatible else 'not compatible'}; worst cell {self.worst_cell}\n")


def check_geometry_compatibility(mesh: Mesh, flux: FluxField, u_samples: Sequence[float],
                                 tol: float = 1e-10, speeds: Optional[np.ndarray] = None,
                                 corrected: bool = False) -> CompatibilityReport:
    """max over cells and samples of |sum_e phi_e(u)| / |K|.

    ``corrected=True`` evaluates with the solver's compatibility-corrected
    face speeds.
    """
    if speeds is None and corrected:
        from .fv_core import compatible_speeds
        speeds = compatible_speeds(flux)
    d = flux.cell_defects(speeds) / mesh.cell_measure
    hu = np.abs(np.asarray(flux.scalar.h(np.asarray(u_samples, dtype=float)), dtype=float))
    per_cell = np.abs(d) * (hu.max() if hu.size else 0.0)
    worst = int(np.argmax(per_cell))
    D = float(per_cell[worst])
    return CompatibilityReport(defect=D, compatible=D <= tol, tolerance=tol, cell_defects=d,
                               worst_cell=worst, corrected=corrected)


@dataclass
class GrowthCertificate:
    """Constants C_alpha with |<alpha, f(u)>| <= C_alpha (1 + |u|) on the samples.

    C_alpha = max(sup |<alpha, f(0)>|, sup |<alpha, f(u) - f(0)>| / |u|), an
    upper certificate for the bound that does not drift with the sampled
    range when f is linear in u.
    """

    alphas: np.ndarray
    constants: np.ndarray
    u_range: tuple
    n_samples: int
    superlinear: np.ndarray
    holds: bool

    def text(self) -> str:
        rows = [f"growth certificate on u in [{self.u_range[0]:.17g}, {self.u_range[1]:.17g}], "
                f"{self.n_samples} samples"]
        for a, c, s in zip(self.alphas, self.constants, self.superlinear):
            flag = "  superlinear growth flagged" if s else ""
            rows.append(f"  alpha={np.array2string(np.asarray(a), precision=6)}  C={c:.17g}{flag}")
        rows.append(f"  bound holds at every sample: {self.holds}")
        return "\n".join(rows) + "\n"


def check_growth(flux: FluxField, alpha_samples, u_range=(-1.0, 1.0), n_samples: int = 401,
                 points: Optional[np.ndarray] = None, ratio_tol: float = 0.05) -> GrowthCertificate:
    lo, hi = float(u_range[0]), float(u_range[1])
    us = np.linspace(lo, hi, n_samples)
    pts = flux.mesh.cell_center if points is None else np.atleast_2d(points)
    X = flux.field(flux.mesh, pts)
    hu = np.asarray(flux.scalar.h(us), dtype=float)
    h0 = float(np.asarray(flux.scalar.h(np.array([0.0])), dtype=float)[0])
    alphas = np.atleast_2d(np.asarray(alpha_samples, dtype=float))
    consts, superlin = [], []
    holds = True
    nz = us != 0.0
    for a in alphas:
        ax = np.abs(X @ a)                       # |<alpha, X(x)>| per point
        amax = float(ax.max()) if ax.size else 0.0
        base = abs(h0) * amax
        ratio = np.zeros_like(us)
        ratio[nz] = np.abs(hu[nz] - h0) / np.abs(us[nz]) * amax
        C = max(base, float(ratio.max(initial=0.0)))
        lhs = np.abs(hu) * amax
        holds &= bool(np.all(lhs <= C * (1.0 + np.abs(us)) * (1 + 1e-12) + 1e-300))
        # superlinear: the slope ratio keeps climbing towards the range ends
        m = max(abs(lo), abs(hi))
        inner = nz & (np.abs(us) <= 0.5 * m)
        outer_r = float(ratio.max(initial=0.0))
        inner_r = float(ratio[inner].max(initial=0.0)) if inner.any() else 0.0
        superlin.append(outer_r > (1.0 + ratio_tol) * inner_r and outer_r > 0.0)
        consts.append(C)
    return GrowthCertificate(alphas=alphas, constants=np.array(consts), u_range=(lo, hi),
                             n_samples=n_samples, superlinear=np.array(superlin), holds=holds)


# -- entropy pairs -----------------------------------------------------------

def sgn(x):
    return np.sign(x)


@dataclass(frozen=True, eq=False)
class EntropyPair:
    """Convex entropy U with flux F(u, x) = G(u) X(x) for a product flux."""

    U: Callable
    dU: Callable
    G: Callable
    flux: FluxField
    k: Optional[float] = None

    def F(self, u, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        X = self.flux.field(self.flux.mesh, x)
        return np.asarray(self.G(np.asarray(u, dtype=float)), dtype=float)[..., None] * X


def kruzkov_pair(flux: FluxField, k: float) -> EntropyPair:
    """U = |u - k|, F = sgn(u - k) (f(u) - f(k))."""
    k = float(k)
    h = flux.scalar.h
    hk = float(np.asarray(h(np.array([k])), dtype=float)[0])
    return EntropyPair(
        U=lambda u: np.abs(np.asarray(u, dtype=float) - k),
        dU=lambda u: sgn(np.asarray(u, dtype=float) - k),
        G=lambda u: sgn(np.asarray(u, dtype=float) - k) * (np.asarray(h(u), dtype=float) - hk),
        flux=flux,
        k=k,
    )


def entropy_pair_from_entropy(flux: FluxField, U: Callable, dU: Callable,
                              epsabs: float = 1e-12) -> EntropyPair:
    """Entropy flux by quadrature: G(u) = int_0^u U'(v) h'(v) dv."""
    dh = flux.scalar.dh

    def integrand(v):
        return float(np.asarray(dU(np.array([v])))[0] * np.asarray(dh(np.array([v])))[0])

    def G(u):
        u = np.asarray(u, dtype=float)
        flat = np.array([integrate.quad(integrand, 0.0, float(v), epsabs=epsabs, epsrel=1e-12)[0]
                         for v in u.ravel()])
        return flat.reshape(u.shape)

    return EntropyPair(U=U, dU=dU, G=G, flux=flux)


@dataclass
class PairResidual:
    residual: float
    n_checked: int
    skipped: list


def verify_entropy_pair(pair: EntropyPair, flux: FluxField, u_samples, x_samples=None,
                        step: float = 1e-4, kink_margin: Optional[float] = None) -> PairResidual:
    """max |dF/du - dU/du df/du| by central differences, componentwise."""
    us = np.asarray(u_samples, dtype=float).ravel()
    xs = flux.mesh.cell_center[:4] if x_samples is None else np.atleast_2d(x_samples)
    margin = 2.0 * step if kink_margin is None else kink_margin
    skipped = []
    worst = 0.0
    n = 0
    for u in us:
        if pair.k is not None and abs(u - pair.k) < margin:
            skipped.append(float(u))
            continue
        dF = (pair.F(np.array([u + step]), xs) - pair.F(np.array([u - step]), xs)) / (2 * step)
        rhs = np.asarray(pair.dU(np.array([u])), dtype=float)[0] * flux.du(np.array([u]), xs)
        worst = max(worst, float(np.max(np.abs(dF - rhs))))
        n += 1
    return PairResidual(residual=worst, n_checked=n, skipped=skipped)


# -- named families ----------------------------------------------------------

FLUX_FAMILIES = ("advection-circle", "burgers-circle", "torus-weighted-advection",
                 "torus-weighted-burgers", "torus-incompatible", "sphere-rotation",
                 "burgers-strip", "advection-strip")


def _scalar_by_name(name: str) -> ScalarFlux:
    if name == "linear":
        return linear_flux()
    if name == "burgers":
        return burgers_flux()
    if name == "zero":
        return zero_flux()
    raise FluxError(f"unknown scalar flux {name!r}")


def named_flux(name: str, mesh: Mesh, **params) -> FluxField:
    """Build one of the configured flux families on ``mesh``."""
    if name in ("advection-circle", "burgers-circle"):
        if mesh.topology not in ("circle", "interval"):
            raise FluxError(f"{name} needs a circle mesh")
        speed = float(params.get("speed", 1.0))
        h = linear_flux() if name == "advection-circle" else burgers_flux()
        return make_product_flux(h, WeightedConstantField((speed,)), mesh, name=name, speed=speed)
    if name in ("torus-weighted-advection", "torus-weighted-burgers"):
        if mesh.topology != "torus":
            raise FluxError(f"{name} needs a torus mesh")
        V = tuple(float(v) for v in params.get("velocity", (1.0, 0.5)))
        h = linear_flux() if name == "torus-weighted-advection" else burgers_flux()
        return make_product_flux(h, WeightedConstantField(V), mesh, name=name, velocity=V)
    if name == "torus-incompatible":
        if mesh.topology != "torus":
            raise FluxError(f"{name} needs a torus mesh")
        if mesh.volume_form.mode != "smooth":
            raise FluxError("torus-incompatible needs a smooth weight closure")
        V = np.asarray(params.get("velocity", (1.0, 0.0)), dtype=float)
        amp = float(params.get("amplitude", 1.0))
        base = float(params.get("base", 2.0))
        h = _scalar_by_name(params.get("h", "linear"))

        def div(x):
            # (1/w) d_j(w V^j) with w = base + amp sin(2 pi x^1)
            w = base + amp * np.sin(2 * np.pi * x[:, 0])
            return V[0] * 2 * np.pi * amp * np.cos(2 * np.pi * x[:, 0]) / w

        X = ChartField(func=lambda x: np.broadcast_to(V, (x.shape[0], 2)).copy(), div=div)
        return make_product_flux(h, X, mesh, name=name, velocity=tuple(V))
    if name == "sphere-rotation":
        h = _scalar_by_name(params.get("h", "linear"))
        return make_rotation_flux_sphere(h, mesh, axis=params.get("axis", (0.0, 0.0, 1.0)),
                                         angular_speed=float(params.get("angular_speed", 1.0)))
    if name in ("burgers-strip", "advection-strip"):
        if mesh.dimension != 1:
            raise FluxError(f"{name} needs a 1D spatial mesh")
        h = burgers_flux() if name == "burgers-strip" else linear_flux()
        return make_product_flux(h, WeightedConstantField((1.0,)), mesh, name=name)
    raise FluxError(f"unknown flux family {name!r}; known: {', '.join(FLUX_FAMILIES)}")


def weight_closure(kind: str, **params):
    """Named weight rules for configs: uniform, sine, checkerboard."""
    if kind == "uniform":
        return float(params.get("value", 1.0))
    if kind == "sine":
        base, amp = float(params.get("base", 2.0)), float(params.get("amplitude", 1.0))
        return lambda x: base + amp * np.sin(2 * np.pi * np.asarray(x)[:, 0])
    if kind == "checkerboard":
        lo, hi = float(params.get("low", 1.0)), float(params.get("high", 3.0))
        n = int(params.get("n", 10))

        def rule(x):
            x = np.asarray(x)
            idx = np.floor(x * n + 1e-9).astype(int).sum(axis=1)
            return np.where(idx % 2 == 0, lo, hi)
        rule.piecewise = True
        return rule
    raise MeshError(f"unknown weight rule {kind!r}")
