"""Legacy ASCII VTK (version 3.0) unstructured-grid output."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fem.mesh import ELEMENT_TYPES, Mesh

VTK_CELL_TYPES = {"tri3": 5, "quad4": 9}
CELL_FIELDS = ("damage", "k", "crack_opening", "plastic_max", "sigma_33")


def cell_average(mesh: Mesh, point_values: np.ndarray, reduce=np.mean) -> np.ndarray:
    """Average quadrature-point values over each element (global order).

    ``reduce`` swaps the mean for another axis reduction such as ``np.max``.
    """
    out = []
    start = 0
    for kind, conn, _ in mesh.blocks():
        nq = ELEMENT_TYPES[kind][1]
        n = conn.shape[0] * nq
        out.append(reduce(point_values[start:start + n].reshape(conn.shape[0], nq), axis=1))
        start += n
    return np.concatenate(out)


def nodal_average(mesh: Mesh, cell_values: np.ndarray) -> np.ndarray:
    total = np.zeros(mesh.n_nodes)
    count = np.zeros(mesh.n_nodes)
    start = 0
    for _, conn, _ in mesh.blocks():
        vals = cell_values[start:start + conn.shape[0]]
        np.add.at(total, conn.ravel(), np.repeat(vals, conn.shape[1]))
        np.add.at(count, conn.ravel(), 1.0)
        start += conn.shape[0]
    return total / np.maximum(count, 1.0)


def _fmt(values) -> str:
    return "\n".join(" ".join(f"{v:.10g}" for v in row) for row in np.atleast_2d(values))


def write_vtk(path, mesh: Mesh, cell_data: dict[str, np.ndarray], point_data: dict[str, np.ndarray] | None = None,
              title: str = "discstrain field output") -> None:
    """Write ``mesh`` with per-cell scalars and optional per-node scalars/vectors.

    Point arrays of shape ``(n_nodes, 2)`` are written as 3-component vectors.
    """
    lines = ["# vtk DataFile Version 3.0", title[:255].replace("\n", " "), "ASCII", "DATASET UNSTRUCTURED_GRID"]
    xyz = np.column_stack([mesh.nodes, np.zeros(mesh.n_nodes)])
    lines.append(f"POINTS {mesh.n_nodes} double")
    lines.append(_fmt(xyz))
    blocks = list(mesh.blocks())
    n_cells = mesh.n_elements
    size = sum(conn.shape[0] * (conn.shape[1] + 1) for _, conn, _ in blocks)
    lines.append(f"CELLS {n_cells} {size}")
    for _, conn, _ in blocks:
        rows = np.column_stack([np.full(conn.shape[0], conn.shape[1]), conn])
        lines.append("\n".join(" ".join(map(str, r)) for r in rows.tolist()))
    lines.append(f"CELL_TYPES {n_cells}")
    lines.append("\n".join(str(VTK_CELL_TYPES[kind]) for kind, conn, _ in blocks for _ in range(conn.shape[0])))

    lines.append(f"CELL_DATA {n_cells}")
    for name, values in cell_data.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (n_cells,):
            raise ValueError(f"cell array {name!r} has shape {values.shape}, expected ({n_cells},)")
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(values[:, None])]
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape == (mesh.n_nodes, 2):
                lines += [f"VECTORS {name} double", _fmt(np.column_stack([values, np.zeros(mesh.n_nodes)]))]
            elif values.shape == (mesh.n_nodes,):
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(values[:, None])]
            else:
                raise ValueError(f"point array {name!r} has shape {values.shape}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_snapshot(path, mesh: Mesh, snapshot) -> None:
    """Field snapshot of a run: cell averages plus nodal damage and displacement."""
    cells = {name: cell_average(mesh, getattr(snapshot, name)) for name in CELL_FIELDS}
    cells["damage_max"] = cell_average(mesh, snapshot.damage, np.max)
    points = {"displacement": snapshot.displacement, "damage": nodal_average(mesh, cells["damage"])}
    write_vtk(path, mesh, cells, points, title=f"step {snapshot.step} time {snapshot.time:g} {snapshot.label}")
