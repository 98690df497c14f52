"""Meshes on the supported manifolds and their volume-form data.

Four families are built here: the periodic circle, the periodic torus, the
icosahedral geodesic sphere and the unit interval (spatial leaf of a 1+1
foliated strip).  A mesh stores the volume form only through per-cell
weights and per-face normal integration data; that is all the weak
divergence pairing needs.

Arrays are stored structure-of-arrays style.  ``Mesh.cell`` and
``Mesh.face`` return small record views for callers that want objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

CLOSED_TOPOLOGIES = ("circle", "torus", "sphere")
MAX_SPHERE_LEVEL = 7

WeightRule = Union[None, float, Sequence[float], np.ndarray, Callable]

# Gauss-Legendre nodes on [0, 1] for face quadrature.
_GL2_NODES = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GL2_WEIGHTS = np.array([0.5, 0.5])
_GL3_NODES = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GL3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class VolumeForm:
    """Per-cell weights of the volume form in chart coordinates.

    ``mode`` is ``"smooth"`` when a closure is available (faces evaluate it
    at quadrature nodes) and ``"piecewise"`` otherwise; in piecewise mode
    the weight may jump across faces and a face sees the mean of its two
    cells.
    """

    weights: np.ndarray
    lower_bound: float
    mode: str = "piecewise"
    closure: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.lower_bound <= 0.0:
            raise MeshError(f"volume form lower bound must be positive, got {self.lower_bound}")
        bad = np.flatnonzero(~(self.weights >= self.lower_bound))
        if bad.size:
            k = int(bad[0])
            raise MeshError(
                f"volume form weight {self.weights[k]!r} at cell {k} is below the lower bound "
                f"{self.lower_bound!r}"
            )
        if self.mode not in ("smooth", "piecewise"):
            raise MeshError(f"unknown volume form mode {self.mode!r}")
        if self.mode == "smooth" and self.closure is None:
            raise MeshError("smooth volume form needs a closure")

    def at_faces(self, mesh: "Mesh") -> np.ndarray:
        """Weight at face quadrature nodes, shape (n_faces, n_nodes)."""
        if self.mode == "smooth":
            nodes = mesh.face_nodes
            flat = nodes.reshape(-1, nodes.shape[-1])
            vals = np.asarray(self.closure(flat), dtype=float).reshape(nodes.shape[:2])
            return vals
        wK = self.weights[mesh.face_owner]
        nb = mesh.face_neighbor
        wL = np.where(nb >= 0, self.weights[np.maximum(nb, 0)], wK)
        w = 0.5 * (wK + wL)
        return np.repeat(w[:, None], mesh.face_nodes.shape[1], axis=1)

    def face_jumps(self, mesh: "Mesh") -> np.ndarray:
        """|w_K - w_L| per face (zero on boundary faces)."""
        nb = mesh.face_neighbor
        wL = np.where(nb >= 0, self.weights[np.maximum(nb, 0)], self.weights[mesh.face_owner])
        return np.abs(self.weights[mesh.face_owner] - wL)


@dataclass(frozen=True)
class Cell:
    id: int
    measure: float
    barycenter: np.ndarray
    h: float
    weight: float


@dataclass(frozen=True)
class Face:
    id: int
    measure: float
    normal: np.ndarray
    owner: int
    neighbor: int
    boundary_tag: str
    nodes: np.ndarray
    node_weights: np.ndarray


@dataclass(frozen=True, eq=False)
class Mesh:
    """Cell-centred finite volume mesh of a 1D or 2D manifold.

    Point coordinates live in an embedding space: the chart line for the
    circle and interval, the chart plane for the torus, R^3 for the sphere.
    ``face_normal`` is the unit normal (conormal on the sphere) pointing out
    of ``face_owner``; ``face_neighbor`` is -1 on boundary faces.
    """

    dimension: int
    topology: str
    volume_form: VolumeForm
    cell_measure: np.ndarray
    cell_center: np.ndarray
    cell_h: np.ndarray
    face_owner: np.ndarray
    face_neighbor: np.ndarray
    face_measure: np.ndarray
    face_normal: np.ndarray
    face_nodes: np.ndarray
    face_node_weights: np.ndarray
    face_tag: tuple
    points: np.ndarray
    cell_nodes: np.ndarray
    vtk_cell_type: int
    cell_faces: tuple = field(repr=False, default=())
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.cell_faces:
            lists = [[] for _ in range(self.n_cells)]
            for e, (k, l) in enumerate(zip(self.face_owner, self.face_neighbor)):
                lists[k].append(e)
                if l >= 0:
                    lists[l].append(e)
            object.__setattr__(self, "cell_faces", tuple(tuple(x) for x in lists))
        for arr in (self.cell_measure, self.cell_center, self.cell_h, self.face_owner,
                    self.face_neighbor, self.face_measure, self.face_normal, self.face_nodes,
                    self.face_node_weights, self.points, self.cell_nodes):
            arr.setflags(write=False)
        self._validate()

    def _validate(self):
        if np.any(self.cell_measure <= 0.0):
            raise MeshError(f"non-positive cell measure at cell {int(np.argmin(self.cell_measure))}")
        if np.any(self.cell_h <= 0.0):
            raise MeshError("non-positive cell size")
        if np.any(self.face_measure <= 0.0):
            raise MeshError("non-positive face measure")
        interior = self.face_neighbor >= 0
        if np.any(self.face_owner[interior] == self.face_neighbor[interior]):
            raise MeshError("interior face references the same cell twice")
        if self.topology in CLOSED_TOPOLOGIES and not np.all(interior):
            raise MeshError(f"closed topology {self.topology} has boundary faces")
        if any(bool(t) != (not i) for t, i in zip(self.face_tag, interior)):
            raise MeshError("boundary tags must be set exactly on boundary faces")

    @property
    def n_cells(self) -> int:
        return int(self.cell_measure.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.face_owner.shape[0])

    @property
    def weights(self) -> np.ndarray:
        return self.volume_form.weights

    @property
    def total_volume(self) -> float:
        return float(np.sum(self.cell_measure))

    @property
    def closed(self) -> bool:
        return self.topology in CLOSED_TOPOLOGIES

    @property
    def h(self) -> float:
        return float(np.max(self.cell_h))

    def boundary_faces(self, tag: Optional[str] = None) -> np.ndarray:
        ids = np.flatnonzero(self.face_neighbor < 0)
        if tag is not None:
            ids = np.array([e for e in ids if self.face_tag[e] == tag], dtype=np.int64)
        return ids

    def cell(self, cell_id: int) -> Cell:
        self._check_cell(cell_id)
        return Cell(
            id=int(cell_id),
            measure=float(self.cell_measure[cell_id]),
            barycenter=self.cell_center[cell_id].copy(),
            h=float(self.cell_h[cell_id]),
            weight=float(self.weights[cell_id]),
        )

    def face(self, face_id: int) -> Face:
        self._check_face(face_id)
        return Face(
            id=int(face_id),
            measure=float(self.face_measure[face_id]),
            normal=self.face_normal[face_id].copy(),
            owner=int(self.face_owner[face_id]),
            neighbor=int(self.face_neighbor[face_id]),
            boundary_tag=self.face_tag[face_id],
            nodes=self.face_nodes[face_id].copy(),
            node_weights=self.face_node_weights[face_id].copy(),
        )

    def _check_cell(self, cell_id):
        if not (0 <= int(cell_id) < self.n_cells):
            raise KeyError(f"unknown cell id {cell_id}")

    def _check_face(self, face_id):
        if not (0 <= int(face_id) < self.n_faces):
            raise KeyError(f"unknown face id {face_id}")

    def displacement(self, points: np.ndarray, center: np.ndarray) -> np.ndarray:
        """Shortest chart displacement from ``center`` to each point.

        Periodic wrap on circle and torus; on the sphere this is the tangent
        vector at the point pointing away from ``center`` with length equal to
        the geodesic distance.
        """
        points = np.asarray(points, dtype=float)
        center = np.asarray(center, dtype=float)
        if self.topology in ("circle", "torus"):
            d = points - center
            return d - np.round(d)
        if self.topology == "interval":
            return points - center
        c = center / np.linalg.norm(center)
        cosd = np.clip(points @ c, -1.0, 1.0)
        dist = np.arccos(cosd)
        tang = cosd[:, None] * points - c[None, :]
        nrm = np.linalg.norm(tang, axis=1)
        scale = np.where(nrm > 1e-300, dist / np.where(nrm > 1e-300, nrm, 1.0), 0.0)
        return tang * scale[:, None]

    def distance(self, points: np.ndarray, center: np.ndarray) -> np.ndarray:
        d = self.displacement(points, center)
        return np.abs(d[:, 0]) if d.shape[1] == 1 else np.linalg.norm(d, axis=1)

    def nearest_cell(self, point) -> int:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return int(np.argmin(self.distance(self.cell_center, point)))

    def signature(self) -> str:
        """Short text identifying the mesh (used to match runs)."""
        return (f"{self.topology}:{self.dimension}:{self.n_cells}:{self.n_faces}:"
                f"{self.total_volume:.17g}")

    def summary(self) -> str:
        lines = [
            f"topology          {self.topology}",
            f"dimension         {self.dimension}",
            f"cells             {self.n_cells}",
            f"faces             {self.n_faces}",
            f"boundary faces    {int(np.sum(self.face_neighbor < 0))}",
            f"total volume      {self.total_volume:.17g}",
            f"weight min/max    {self.weights.min():.17g} {self.weights.max():.17g}",
            f"weight bound      {self.volume_form.lower_bound:.17g}",
            f"weight mode       {self.volume_form.mode}",
            f"max face jump     {float(np.max(self.volume_form.face_jumps(self), initial=0.0)):.17g}",
            f"h min/mean/max    {self.cell_h.min():.17g} {self.cell_h.mean():.17g} {self.cell_h.max():.17g}",
        ]
        return "\n".join(lines) + "\n"


def _volume_form(weight: WeightRule, centers: np.ndarray, lower_bound: Optional[float]) -> VolumeForm:
    n = centers.shape[0]
    closure = None
    if weight is None:
        w = np.ones(n)
    elif callable(weight) and getattr(weight, "piecewise", False):
        w = np.asarray(weight(centers), dtype=float).reshape(n)
    elif callable(weight):
        closure = weight
        w = np.asarray(weight(centers), dtype=float).reshape(n)
    elif np.ndim(weight) == 0:
        w = np.full(n, float(weight))
    else:
        w = np.asarray(weight, dtype=float).reshape(-1)
        if w.shape[0] != n:
            raise MeshError(f"expected {n} cell weights, got {w.shape[0]}")
    bad = np.flatnonzero(~(w > 0.0))
    if bad.size:
        k = int(bad[0])
        raise MeshError(f"non-positive volume form weight {w[k]!r} at cell {k}")
    if lower_bound is None:
        lower_bound = float(w.min())
    mode = "smooth" if closure is not None else "piecewise"
    return VolumeForm(weights=w, lower_bound=float(lower_bound), mode=mode, closure=closure)


def build_circle_mesh(n_cells: int, weight: WeightRule = None,
                      lower_bound: Optional[float] = None) -> Mesh:
    """Periodic mesh of [0, 1) with ``n_cells`` uniform cells.

    Face ``i`` sits at x = (i + 1)/n between cell i (owner) and cell i+1.
    """
    if n_cells < 3:
        raise MeshError(f"circle mesh needs at least 3 cells, got {n_cells}")
    n = int(n_cells)
    dx = 1.0 / n
    centers = ((np.arange(n) + 0.5) * dx)[:, None]
    vf = _volume_form(weight, centers, lower_bound)
    owner = np.arange(n, dtype=np.int64)
    neighbor = (owner + 1) % n
    xf = ((np.arange(n) + 1) * dx) % 1.0
    return Mesh(
        dimension=1,
        topology="circle",
        volume_form=vf,
        cell_measure=vf.weights * dx,
        cell_center=centers,
        cell_h=np.full(n, dx),
        face_owner=owner,
        face_neighbor=neighbor,
        face_measure=np.ones(n),
        face_normal=np.ones((n, 1)),
        face_nodes=xf[:, None, None].copy(),
        face_node_weights=np.ones((n, 1)),
        face_tag=("",) * n,
        points=(np.arange(n + 1) * dx)[:, None],
        cell_nodes=np.stack([np.arange(n), np.arange(n) + 1], axis=1),
        vtk_cell_type=3,
        params={"n_cells": n},
    )


def build_interval_mesh(n_cells: int, weight: WeightRule = None,
                        lower_bound: Optional[float] = None) -> Mesh:
    """Uniform mesh of [0, 1] with boundary faces tagged ``left``/``right``."""
    if n_cells < 3:
        raise MeshError(f"interval mesh needs at least 3 cells, got {n_cells}")
    n = int(n_cells)
    dx = 1.0 / n
    centers = ((np.arange(n) + 0.5) * dx)[:, None]
    vf = _volume_form(weight, centers, lower_bound)
    # interior faces first, then left and right boundary faces
    owner = np.concatenate([np.arange(n - 1), [0, n - 1]]).astype(np.int64)
    neighbor = np.concatenate([np.arange(1, n), [-1, -1]]).astype(np.int64)
    normal = np.concatenate([np.ones(n - 1), [-1.0, 1.0]])[:, None]
    xf = np.concatenate([np.arange(1, n) * dx, [0.0, 1.0]])
    tags = ("",) * (n - 1) + ("left", "right")
    return Mesh(
        dimension=1,
        topology="interval",
        volume_form=vf,
        cell_measure=vf.weights * dx,
        cell_center=centers,
        cell_h=np.full(n, dx),
        face_owner=owner,
        face_neighbor=neighbor,
        face_measure=np.ones(n + 1),
        face_normal=normal,
        face_nodes=xf[:, None, None].copy(),
        face_node_weights=np.ones((n + 1, 1)),
        face_tag=tags,
        points=(np.arange(n + 1) * dx)[:, None],
        cell_nodes=np.stack([np.arange(n), np.arange(n) + 1], axis=1),
        vtk_cell_type=3,
        params={"n_cells": n},
    )


def build_torus_mesh(nx: int, ny: int, weight: WeightRule = None,
                     lower_bound: Optional[float] = None) -> Mesh:
    """Doubly periodic quad mesh of [0, 1)^2; cell (i, j) has id j*nx + i."""
    if nx < 3 or ny < 3:
        raise MeshError(f"torus mesh needs nx, ny >= 3, got {nx}x{ny}")
    nx, ny = int(nx), int(ny)
    dx, dy = 1.0 / nx, 1.0 / ny
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    cid = j * nx + i
    centers = np.stack([(i + 0.5) * dx, (j + 0.5) * dy], axis=1)
    vf = _volume_form(weight, centers, lower_bound)

    east = j * nx + (i + 1) % nx
    north = ((j + 1) % ny) * nx + i
    owner = np.concatenate([cid, cid]).astype(np.int64)
    neighbor = np.concatenate([east, north]).astype(np.int64)
    nf = owner.shape[0]
    normal = np.zeros((nf, 2))
    normal[: nx * ny, 0] = 1.0
    normal[nx * ny:, 1] = 1.0
    measure = np.concatenate([np.full(nx * ny, dy), np.full(nx * ny, dx)])

    xe = ((i + 1) * dx) % 1.0
    yn = ((j + 1) * dy) % 1.0
    nodes = np.empty((nf, 2, 2))
    nodes[: nx * ny, :, 0] = xe[:, None]
    nodes[: nx * ny, :, 1] = (j[:, None] + _GL2_NODES[None, :]) * dy
    nodes[nx * ny:, :, 0] = (i[:, None] + _GL2_NODES[None, :]) * dx
    nodes[nx * ny:, :, 1] = yn[:, None]
    node_w = _GL2_WEIGHTS[None, :] * measure[:, None]

    px, py = np.meshgrid(np.arange(nx + 1) * dx, np.arange(ny + 1) * dy, indexing="xy")
    points = np.stack([px.ravel(), py.ravel()], axis=1)
    p0 = j * (nx + 1) + i
    cell_nodes = np.stack([p0, p0 + 1, p0 + nx + 2, p0 + nx + 1], axis=1)
    return Mesh(
        dimension=2,
        topology="torus",
        volume_form=vf,
        cell_measure=vf.weights * dx * dy,
        cell_center=centers,
        cell_h=np.full(nx * ny, min(dx, dy)),
        face_owner=owner,
        face_neighbor=neighbor,
        face_measure=measure,
        face_normal=normal,
        face_nodes=nodes,
        face_node_weights=node_w,
        face_tag=("",) * nf,
        points=points,
        cell_nodes=cell_nodes,
        vtk_cell_type=9,
        params={"nx": nx, "ny": ny},
    )


def icosahedron() -> tuple[np.ndarray, np.ndarray]:
    """Unit icosahedron with a vertex at the north pole; triangles CCW seen from outside."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    tris = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    # rotate so that vertex 0 sits at the north pole
    a = verts[0]
    z = np.array([0.0, 0.0, 1.0])
    v = np.cross(a, z)
    s, c = np.linalg.norm(v), float(a @ z)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    rot = np.eye(3) + vx + vx @ vx * ((1 - c) / s**2)
    verts = verts @ rot.T
    return verts, tris


def _subdivide(verts: np.ndarray, tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cache: dict = {}
    new_verts = [v for v in verts]

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            m = verts[a] + verts[b]
            new_verts.append(m / np.linalg.norm(m))
            cache[key] = len(new_verts) - 1
        return cache[key]

    out = []
    for a, b, c in tris:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return np.array(new_verts), np.array(out, dtype=np.int64)


def spherical_triangle_area(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Spherical excess of unit-sphere triangles (Van Oosterom-Strackee)."""
    num = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(num, den)


def arc_length(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.arctan2(np.linalg.norm(np.cross(p, q), axis=-1), np.einsum("...i,...i->...", p, q))


def build_sphere_mesh(subdivision_level: int, max_level: int = MAX_SPHERE_LEVEL) -> Mesh:
    """Icosahedral geodesic triangulation of the unit sphere.

    Cells are spherical triangles (area = spherical excess), faces are
    great-circle arcs with their arc length as measure and the in-surface
    unit conormal, which is constant along a great-circle arc.
    """
    level = int(subdivision_level)
    if level < 0:
        raise MeshError("subdivision level must be nonnegative")
    if level > max_level:
        raise MeshError(f"subdivision level {level} exceeds the configured maximum {max_level}")
    verts, tris = icosahedron()
    for _ in range(level):
        verts, tris = _subdivide(verts, tris)
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    area = spherical_triangle_area(a, b, c)
    bary = a + b + c
    bary /= np.linalg.norm(bary, axis=1)[:, None]

    edge_cells: dict = {}
    for t, tri in enumerate(tris):
        for m in range(3):
            p, q = int(tri[m]), int(tri[(m + 1) % 3])
            key = (p, q) if p < q else (q, p)
            edge_cells.setdefault(key, []).append(t)
    keys = sorted(edge_cells)
    nf = len(keys)
    owner = np.empty(nf, dtype=np.int64)
    neighbor = np.empty(nf, dtype=np.int64)
    ends = np.empty((nf, 2), dtype=np.int64)
    for e, key in enumerate(keys):
        k, l = edge_cells[key]
        owner[e], neighbor[e] = k, l
        ends[e] = key
    p, q = verts[ends[:, 0]], verts[ends[:, 1]]
    length = arc_length(p, q)
    n = np.cross(p, q)
    n /= np.linalg.norm(n, axis=1)[:, None]
    # orient away from the owner's barycenter
    n *= np.where(np.einsum("ij,ij->i", n, bary[owner]) > 0.0, -1.0, 1.0)[:, None]

    s = _GL3_NODES[None, :] * length[:, None]
    tang = q - np.einsum("ij,ij->i", p, q)[:, None] * p
    tang /= np.linalg.norm(tang, axis=1)[:, None]
    nodes = (np.cos(s)[:, :, None] * p[:, None, :] + np.sin(s)[:, :, None] * tang[:, None, :])
    node_w = _GL3_WEIGHTS[None, :] * length[:, None]

    # cell diameter: longest geodesic edge
    edge_len = np.stack([arc_length(a, b), arc_length(b, c), arc_length(c, a)], axis=1)
    vf = VolumeForm(weights=np.ones(tris.shape[0]), lower_bound=1.0, mode="smooth",
                    closure=lambda x: np.ones(x.shape[0]))
    return Mesh(
        dimension=2,
        topology="sphere",
        volume_form=vf,
        cell_measure=area,
        cell_center=bary,
        cell_h=edge_len.max(axis=1),
        face_owner=owner,
        face_neighbor=neighbor,
        face_measure=length,
        face_normal=n,
        face_nodes=nodes,
        face_node_weights=node_w,
        face_tag=("",) * nf,
        points=verts,
        cell_nodes=tris,
        vtk_cell_type=5,
        params={"level": level},
    )


def cell_measure(mesh: Mesh, cell_id: int) -> float:
    mesh._check_cell(cell_id)
    return float(mesh.cell_measure[cell_id])


def face_normal_data(mesh: Mesh, face_id: int, owner_cell_id: int):
    """(N, |e|, nodes, node weights) of a face seen from ``owner_cell_id``.

    N is flipped when the face is queried from its non-owner cell.
    """
    mesh._check_face(face_id)
    mesh._check_cell(owner_cell_id)
    k, l = int(mesh.face_owner[face_id]), int(mesh.face_neighbor[face_id])
    if owner_cell_id == k:
        sign = 1.0
    elif owner_cell_id == l:
        sign = -1.0
    else:
        raise KeyError(f"cell {owner_cell_id} is not adjacent to face {face_id}")
    return (sign * mesh.face_normal[face_id], float(mesh.face_measure[face_id]),
            mesh.face_nodes[face_id].copy(), mesh.face_node_weights[face_id].copy())


def gnomonic_chart_polygon(mesh: Mesh, cell_id: int) -> np.ndarray:
    """Vertices of a sphere cell in the gnomonic tangent-plane chart at its barycenter.

    Geodesic edges are straight segments in this chart.
    """
    if mesh.topology != "sphere":
        raise MeshError("gnomonic chart only exists for sphere meshes")
    c = mesh.cell_center[cell_id]
    e1 = np.cross(c, [0.0, 0.0, 1.0])
    if np.linalg.norm(e1) < 1e-8:
        e1 = np.cross(c, [1.0, 0.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(c, e1)
    v = mesh.points[mesh.cell_nodes[cell_id]]
    v = v / (v @ c)[:, None]
    return np.stack([v @ e1, v @ e2], axis=1)


def chart_normal_closure(mesh: Mesh, cell_id: int) -> np.ndarray:
    """Sum of outward edge normals times edge lengths of the cell's chart polygon."""
    if mesh.topology == "sphere":
        poly = gnomonic_chart_polygon(mesh, cell_id)
        edges = np.roll(poly, -1, axis=0) - poly
        # outward normal of a CCW polygon edge (dx, dy) is (dy, -dx)
        return np.sum(np.stack([edges[:, 1], -edges[:, 0]], axis=1), axis=0)
    total = np.zeros(mesh.face_normal.shape[1])
    for e in mesh.cell_faces[cell_id]:
        n, length, _, _ = face_normal_data(mesh, e, cell_id)
        total += n * length
    return total


@dataclass(frozen=True, eq=False)
class FoliatedSpacetime:
    """1+1 spacetime with metric -dt^2 + a(t)^2 dx^2 over a circle or interval leaf.

    Leaves H_t = {t} x space are space-like; the leaf volume element is
    a(t) dx.
    """

    mesh: Mesh
    T: float
    scale_factor: Callable[[float], float]
    a_min: float
    a_max: float

    @property
    def timelike_tags(self) -> tuple:
        return ("left", "right") if self.mesh.topology == "interval" else ()

    def a(self, t: float) -> float:
        return float(self.scale_factor(t))

    def leaf_measures(self, t: float) -> np.ndarray:
        return self.a(t) * self.mesh.cell_measure

    def leaf_volume(self, t: float) -> float:
        return self.a(t) * self.mesh.total_volume


def build_flrw_strip(n_cells: int, T: float, a: Callable[[float], float] = None,
                     spatial_topology: str = "circle", n_samples: int = 2001) -> FoliatedSpacetime:
    if T <= 0.0:
        raise MeshError("strip horizon T must be positive")
    if a is None:
        a = lambda t: 1.0  # noqa: E731
    ts = np.linspace(0.0, T, n_samples)
    vals = np.array([float(a(t)) for t in ts])
    bad = np.flatnonzero(~(vals > 0.0))
    if bad.size:
        raise MeshError(f"scale factor a(t) = {vals[bad[0]]!r} is not positive at t = {ts[bad[0]]!r}")
    if spatial_topology == "circle":
        mesh = build_circle_mesh(n_cells)
    elif spatial_topology == "interval":
        mesh = build_interval_mesh(n_cells)
    else:
        raise MeshError(f"unknown strip topology {spatial_topology!r}")
    return FoliatedSpacetime(mesh=mesh, T=float(T), scale_factor=a,
                             a_min=float(vals.min()), a_max=float(vals.max()))
