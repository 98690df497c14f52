"""Writers for legacy ASCII VTK and CSV outputs.  Floats use %.17g."""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import Mesh

FMT = "%.17g"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return FMT % float(x)
    return str(x)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _points3(mesh: Mesh) -> np.ndarray:
    p = np.asarray(mesh.points, dtype=float)
    if p.shape[1] < 3:
        p = np.hstack([p, np.zeros((p.shape[0], 3 - p.shape[1]))])
    return p


def write_vtk(path, mesh: Mesh, cell_data: dict, title: str = "manifold_fv") -> Path:
    """Legacy ASCII unstructured grid with scalar cell data arrays."""
    path = Path(path)
    pts = _points3(mesh)
    nodes = np.asarray(mesh.cell_nodes, dtype=np.int64)
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {pts.shape[0]} double"]
    lines += [" ".join(FMT % v for v in p) for p in pts]
    nc, k = nodes.shape
    lines.append(f"CELLS {nc} {nc * (k + 1)}")
    lines += [f"{k} " + " ".join(str(int(i)) for i in row) for row in nodes]
    lines.append(f"CELL_TYPES {nc}")
    lines += [str(int(mesh.vtk_cell_type))] * nc
    lines.append(f"CELL_DATA {nc}")
    for name, arr in cell_data.items():
        arr = np.asarray(arr, dtype=float).reshape(nc)
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [FMT % v for v in arr]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_mesh_vtk(path, mesh: Mesh, u: Optional[np.ndarray] = None, title: str = "manifold_fv") -> Path:
    data = {"omega_bar": mesh.weights, "h_K": mesh.cell_h}
    if u is not None:
        data["u"] = u
    return write_vtk(path, mesh, data, title)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], comment: Optional[str] = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    return rows[0], rows[1:]


def write_snapshot_csv(path, mesh: Mesh, u, measure=None, comment=None) -> Path:
    m = mesh.cell_measure if measure is None else measure
    d = mesh.cell_center.shape[1]
    header = ["cell"] + [f"x{i}" for i in range(d)] + ["u", "measure"]
    rows = ([i] + list(mesh.cell_center[i]) + [u[i], m[i]] for i in range(mesh.n_cells))
    return write_csv(path, header, rows, comment)


def read_snapshot_csv(path) -> tuple[np.ndarray, np.ndarray]:
    header, rows = read_csv(path)
    iu, im = header.index("u"), header.index("measure")
    a = np.array([[float(r[iu]), float(r[im])] for r in rows])
    return a[:, 0], a[:, 1]


def write_diagnostics_csv(path, traj, extra: Optional[dict] = None, comment=None) -> Path:
    """Per-step series: t, dt, mass, min, max, L1 norm, boundary outflow, extras."""
    extra = extra or {}
    header = ["t", "dt", "mass", "min", "max", "l1", "boundary_outflow"] + list(extra)
    cols = [traj.step_t, traj.step_dt, traj.mass, traj.umin, traj.umax, traj.l1,
            traj.boundary_outflow] + [extra[k] for k in extra]
    return write_csv(path, header, zip(*cols), comment)
