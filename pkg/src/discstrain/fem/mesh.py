"""2D meshes of 3-node triangles and 4-node quadrilaterals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# element type -> (nodes per element, quadrature points per element)
ELEMENT_TYPES = {"quad4": (4, 4), "tri3": (3, 1)}
ELEMENT_ORDER = ("quad4", "tri3")


class MeshError(ValueError):
    pass


_G = 1.0 / np.sqrt(3.0)
QUAD_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
QUAD_WEIGHTS = np.ones(4)
TRI_POINTS = np.array([[1.0 / 3.0, 1.0 / 3.0]])
TRI_WEIGHTS = np.array([0.5])


def shape_functions(kind: str, xi: np.ndarray):
    """Shape values ``(nq, nen)`` and parametric derivatives ``(nq, 2, nen)``."""
    xi = np.atleast_2d(xi)
    r, s = xi[:, 0], xi[:, 1]
    if kind == "quad4":
        n = 0.25 * np.stack([(1 - r) * (1 - s), (1 + r) * (1 - s), (1 + r) * (1 + s), (1 - r) * (1 + s)], -1)
        dr = 0.25 * np.stack([-(1 - s), (1 - s), (1 + s), -(1 + s)], -1)
        ds = 0.25 * np.stack([-(1 - r), -(1 + r), (1 + r), (1 - r)], -1)
    elif kind == "tri3":
        n = np.stack([1 - r - s, r, s], -1)
        dr = np.broadcast_to(np.array([-1.0, 1.0, 0.0]), n.shape)
        ds = np.broadcast_to(np.array([-1.0, 0.0, 1.0]), n.shape)
    else:
        raise MeshError(f"unsupported element type {kind!r}")
    return n, np.stack([dr, ds], axis=1)


def quadrature(kind: str):
    if kind == "quad4":
        return QUAD_POINTS, QUAD_WEIGHTS
    return TRI_POINTS, TRI_WEIGHTS


@dataclass
class Mesh:
    """Node coordinates in mm, connectivity per element type, named sets.

    Global element numbering runs over ``ELEMENT_ORDER`` (all quads first).
    """

    nodes: np.ndarray
    cells: dict[str, np.ndarray]
    node_sets: dict[str, np.ndarray] = field(default_factory=dict)
    element_sets: dict[str, np.ndarray] = field(default_factory=dict)
    thickness: float = 1.0

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.cells = {k: np.asarray(v, dtype=np.int64).reshape(-1, ELEMENT_TYPES[k][0])
                      for k, v in self.cells.items() if len(v)}
        self.node_sets = {k: np.asarray(v, dtype=np.int64).ravel() for k, v in self.node_sets.items()}
        self.element_sets = {k: np.asarray(v, dtype=np.int64).ravel() for k, v in self.element_sets.items()}

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    def blocks(self):
        """``(kind, connectivity, first global element id)`` in global order."""
        start = 0
        for kind in ELEMENT_ORDER:
            if kind in self.cells:
                conn = self.cells[kind]
                yield kind, conn, start
                start += conn.shape[0]

    @property
    def n_elements(self) -> int:
        return sum(c.shape[0] for c in self.cells.values())

    def element_areas(self) -> np.ndarray:
        areas = []
        for kind, conn, _ in self.blocks():
            x = self.nodes[conn]
            if kind == "tri3":
                a = 0.5 * np.abs(_cross2(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]))
            else:
                a = 0.5 * np.abs(_cross2(x[:, 2] - x[:, 0], x[:, 3] - x[:, 1]))
            areas.append(a)
        return np.concatenate(areas)

    def centroids(self) -> np.ndarray:
        return np.concatenate([self.nodes[conn].mean(axis=1) for _, conn, _ in self.blocks()])

    def char_lengths(self) -> np.ndarray:
        """Crack-band width ``sqrt(area)`` per element."""
        return np.sqrt(self.element_areas())

    def validate(self, gauge_set: str | None = None):
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be an (n, 2) array")
        for kind, conn, first in self.blocks():
            if conn.min() < 0 or conn.max() >= self.n_nodes:
                raise MeshError(f"{kind} connectivity references missing nodes")
            det = element_jacobians(self.nodes, kind, conn)
            bad = np.flatnonzero(np.any(det <= 0.0, axis=1))
            if bad.size:
                raise MeshError(f"non-positive Jacobian in elements {(bad + first)[:10].tolist()}")
        for name, ids in self.node_sets.items():
            if ids.size == 0 or ids.min() < 0 or ids.max() >= self.n_nodes:
                raise MeshError(f"node set {name!r} is empty or references missing nodes")
        for name, ids in self.element_sets.items():
            if ids.size and (ids.min() < 0 or ids.max() >= self.n_elements):
                raise MeshError(f"element set {name!r} references missing elements")
        if gauge_set is not None:
            if gauge_set not in self.node_sets:
                raise MeshError(f"gauge node set {gauge_set!r} not defined")
            if self.node_sets[gauge_set].size != 2:
                raise MeshError(f"gauge node set {gauge_set!r} must hold exactly two nodes")


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def element_jacobians(nodes, kind, conn) -> np.ndarray:
    pts, _ = quadrature(kind)
    _, dn = shape_functions(kind, pts)
    x = nodes[conn]  # (ne, nen, 2)
    jac = np.einsum("qan,enb->eqab", dn, x)
    return jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]


@dataclass
class ElementBlock:
    """Precomputed quadrature data of one element type."""

    kind: str
    conn: np.ndarray  # (ne, nen)
    dofs: np.ndarray  # (ne, 2 nen)
    B: np.ndarray  # (ne, nq, 3, 2 nen), rows (eps_11, eps_22, gamma_12)
    weights: np.ndarray  # (ne, nq) = w * det J * thickness
    points: np.ndarray  # (ne, nq, 2) physical quadrature coordinates
    first_element: int
    first_point: int

    @property
    def n_points(self) -> int:
        return self.weights.size


def build_blocks(mesh: Mesh) -> list[ElementBlock]:
    blocks = []
    first_point = 0
    for kind, conn, first in mesh.blocks():
        pts, w = quadrature(kind)
        n, dn = shape_functions(kind, pts)
        x = mesh.nodes[conn]
        jac = np.einsum("qan,enb->eqab", dn, x)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        inv = np.empty_like(jac)
        inv[..., 0, 0] = jac[..., 1, 1] / det
        inv[..., 1, 1] = jac[..., 0, 0] / det
        inv[..., 0, 1] = -jac[..., 0, 1] / det
        inv[..., 1, 0] = -jac[..., 1, 0] / det
        # jac[a, b] = dx_b/dxi_a, so dN/dx = jac^{-1} dN/dxi
        dndx = np.einsum("eqab,qbn->eqan", inv, dn)  # (ne, nq, 2, nen)
        ne, nq, _, nen = dndx.shape
        B = np.zeros((ne, nq, 3, 2 * nen))
        B[:, :, 0, 0::2] = dndx[:, :, 0]
        B[:, :, 1, 1::2] = dndx[:, :, 1]
        B[:, :, 2, 0::2] = dndx[:, :, 1]
        B[:, :, 2, 1::2] = dndx[:, :, 0]
        dofs = np.empty((ne, 2 * nen), dtype=np.int64)
        dofs[:, 0::2] = 2 * conn
        dofs[:, 1::2] = 2 * conn + 1
        blocks.append(
            ElementBlock(
                kind=kind,
                conn=conn,
                dofs=dofs,
                B=B,
                weights=det * w[None, :] * mesh.thickness,
                points=np.einsum("qn,enb->eqb", n, x),
                first_element=first,
                first_point=first_point,
            )
        )
        first_point += ne * nq
    return blocks
