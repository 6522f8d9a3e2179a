"""Structured, graded quad meshes for the notched-beam and L-panel benchmarks.

Each generator returns a :class:`Mesh` with named node sets (supports, load
patch, gauge pair) and an element set ``band`` marking the square elements
on the expected crack path. Elements inside the refinement zone are squares
of side ``h``, so the crack-band width there equals ``h``.
"""

from __future__ import annotations

import math

import numpy as np

from .mesh import Mesh, MeshError


def _graded(length: float, h: float, h_max: float, growth: float) -> np.ndarray:
    """Interval sizes growing from ``h`` (at 0) to at most ``h_max`` covering ``length``."""
    if length <= 1e-12:
        return np.zeros(0)
    sizes = []
    total = 0.0
    size = h
    while total < length - 1e-9:
        size = min(size * growth, h_max)
        sizes.append(size)
        total += size
    sizes = np.array(sizes)
    if sizes.size > 1 and total - length > 0.5 * sizes[-1]:
        trimmed = sizes[:-1] * (length / sizes[:-1].sum())
        if trimmed.max() <= h_max * (1.0 + 1e-9):
            return trimmed
    return sizes * (length / sizes.sum())


def _graded_side(lengths, h, h_max, growth) -> np.ndarray:
    """Interval sizes over consecutive segments, grading on across segment ends."""
    out = []
    size = h
    for length in lengths:
        sizes = _graded(length, size, h_max, growth)
        if sizes.size:
            out.append(sizes)
            size = sizes[-1]
    return np.concatenate(out) if out else np.zeros(0)


def graded_axis(start, stop, fine_lo, fine_hi, h, h_max, growth=1.25, anchors=()):
    """Node coordinates: uniform spacing ``h`` on ``[fine_lo, fine_hi]``, graded outside.

    Every anchor outside the fine zone becomes a node; the grading restarts
    from the current size on each side of it. Anchors inside are ignored.
    """
    n_fine = round((fine_hi - fine_lo) / h)
    if n_fine < 1 or abs(n_fine * h - (fine_hi - fine_lo)) > 1e-9 * max(1.0, abs(fine_hi)):
        raise MeshError("refinement zone must hold a whole number of elements")
    if fine_lo < start - 1e-9 or fine_hi > stop + 1e-9:
        raise MeshError("refinement zone leaves the domain")
    tol = 1e-9 * max(1.0, abs(stop - start))
    lo = sorted((a for a in anchors if start + tol < a < fine_lo - tol), reverse=True)
    hi = sorted(a for a in anchors if fine_hi + tol < a < stop - tol)
    left_cuts = [fine_lo, *lo, start]
    right_cuts = [fine_hi, *hi, stop]
    left = fine_lo - np.cumsum(_graded_side(-np.diff(left_cuts), h, h_max, growth))
    right = fine_hi + np.cumsum(_graded_side(np.diff(right_cuts), h, h_max, growth))
    fine = fine_lo + h * np.arange(n_fine + 1)
    x = np.concatenate([left[::-1], fine, right])
    # land exactly on the cuts despite round-off in the cumulative sums
    for c in (*lo, *hi, start, stop):
        x[np.argmin(np.abs(x - c))] = c
    if np.any(np.diff(x) <= 0.0):
        raise MeshError("graded axis is not monotonic")
    return x


def _grid(x, y, keep):
    """Quads on the tensor grid ``x`` by ``y``; ``keep(i, j)`` filters cells."""
    nx, ny = len(x), len(y)
    xx, yy = np.meshgrid(x, y, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])
    cells = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            if keep(i, j):
                n0 = j * nx + i
                cells.append([n0, n0 + 1, n0 + nx + 1, n0 + nx])
    cells = np.array(cells, dtype=np.int64)
    used = np.unique(cells)
    remap = -np.ones(nodes.shape[0], dtype=np.int64)
    remap[used] = np.arange(used.size)
    return nodes[used], remap[cells]


def _nearest(nodes, point, mask=None):
    d = np.linalg.norm(nodes - np.asarray(point, dtype=float), axis=1)
    if mask is not None:
        d = np.where(mask, d, np.inf)
    return int(np.argmin(d))


def _check_multiple(value, h, what):
    n = round(value / h)
    if n < 1 or abs(n * h - value) > 1e-9 * max(1.0, value):
        raise MeshError(f"{what} ({value}) must be a whole multiple of the element size h={h}")
    return n


def notched_beam(
    length=440.0,
    span=400.0,
    depth=100.0,
    notch_depth=30.0,
    notch_offset=0.0,
    h=5.0,
    band_left=15.0,
    band_right=15.0,
    h_max=20.0,
    growth=1.25,
    load_width=10.0,
    thickness=1.0,
):
    """Three-point bending beam with a notch of one element width.

    The notch is centred at ``length/2 + notch_offset``; the load patch sits
    at mid-length on the top edge, point supports at ``(length -+ span)/2``.
    ``band_left``/``band_right`` set how far the uniform zone reaches from the
    notch centre.
    """
    rows = _check_multiple(depth, h, "depth")
    notch_rows = _check_multiple(notch_depth, h, "notch depth")
    if notch_rows >= rows:
        raise MeshError("notch deeper than the beam")
    if span >= length:
        raise MeshError("span must be shorter than the beam")
    xc = 0.5 * length + notch_offset
    n_left = max(1, math.ceil((band_left - 0.5 * h) / h - 1e-9))
    n_right = max(1, math.ceil((band_right - 0.5 * h) / h - 1e-9))
    fine_lo = xc - 0.5 * h - n_left * h
    fine_hi = xc + 0.5 * h + n_right * h
    supports = (0.5 * (length - span), 0.5 * (length + span))
    x = graded_axis(0.0, length, fine_lo, fine_hi, h, h_max, growth,
                    anchors=supports)
    y = np.linspace(0.0, depth, rows + 1)
    notch_col = int(np.argmin(np.abs(x - (xc - 0.5 * h))))

    nodes, cells = _grid(x, y, lambda i, j: not (i == notch_col and j < notch_rows))

    bottom = np.abs(nodes[:, 1]) < 1e-9
    top = np.abs(nodes[:, 1] - depth) < 1e-9
    centroids = nodes[cells].mean(axis=1)
    band = np.flatnonzero(np.abs(centroids[:, 0] - xc) < 0.5 * h)
    load = np.flatnonzero(top & (np.abs(nodes[:, 0] - 0.5 * length) <= 0.5 * load_width + 1e-9))
    if load.size == 0:
        load = np.array([_nearest(nodes, (0.5 * length, depth), top)])
    mesh = Mesh(
        nodes=nodes,
        cells={"quad4": cells},
        node_sets={
            "support_left": [_nearest(nodes, (supports[0], 0.0), bottom)],
            "support_right": [_nearest(nodes, (supports[1], 0.0), bottom)],
            "load": load,
            "cmod": [_nearest(nodes, (xc - 0.5 * h, 0.0), bottom), _nearest(nodes, (xc + 0.5 * h, 0.0), bottom)],
        },
        element_sets={"band": band},
        thickness=thickness,
    )
    return mesh


def l_panel(
    size=500.0,
    arm=250.0,
    h=10.0,
    band_below=10.0,
    band_above=50.0,
    h_max=40.0,
    growth=1.25,
    load_offset=30.0,
    thickness=1.0,
):
    """L-shaped panel: ``size`` square minus its lower-right ``arm`` square.

    The bottom edge of the vertical leg is clamped; the load acts vertically
    on the lower edge of the right arm ``load_offset`` from its free end. The uniform zone spans
    the whole vertical arm width horizontally and ``[arm - band_below,
    arm + band_above]`` vertically.
    """
    _check_multiple(arm, h, "arm width")
    _check_multiple(band_below, h, "band_below")
    _check_multiple(band_above, h, "band_above")
    x = graded_axis(0.0, size, 0.0, arm, h, h_max, growth, anchors=(size - load_offset,))
    y = graded_axis(0.0, size, arm - band_below, arm + band_above, h, h_max, growth)
    ix = int(np.argmin(np.abs(x - arm)))
    iy = int(np.argmin(np.abs(y - arm)))
    nodes, cells = _grid(x, y, lambda i, j: not (i >= ix and j < iy))

    bottom = np.abs(nodes[:, 1]) < 1e-9
    leg_face = np.abs(nodes[:, 0] - arm) < 1e-9
    arm_edge = np.abs(nodes[:, 1] - arm) < 1e-9
    centroids = nodes[cells].mean(axis=1)
    band = np.flatnonzero((centroids[:, 0] < arm) & (np.abs(centroids[:, 1] - (arm + 0.5 * h)) < 0.5 * h))
    mesh = Mesh(
        nodes=nodes,
        cells={"quad4": cells},
        node_sets={
            "clamp": np.flatnonzero(bottom),
            "load": [_nearest(nodes, (size - load_offset, arm), arm_edge)],
            "gauge": [_nearest(nodes, (arm, arm - band_below), leg_face),
                      _nearest(nodes, (arm, arm + band_above))],
        },
        element_sets={"band": band},
        thickness=thickness,
    )
    return mesh


def rectangle(width, height, nx, ny, thickness=1.0, triangles=False):
    """Uniform rectangle mesh (patch tests, small studies)."""
    x = np.linspace(0.0, width, nx + 1)
    y = np.linspace(0.0, height, ny + 1)
    nodes, cells = _grid(x, y, lambda i, j: True)
    sets = {
        "left": np.flatnonzero(np.abs(nodes[:, 0]) < 1e-12),
        "right": np.flatnonzero(np.abs(nodes[:, 0] - width) < 1e-12),
        "bottom": np.flatnonzero(np.abs(nodes[:, 1]) < 1e-12),
        "top": np.flatnonzero(np.abs(nodes[:, 1] - height) < 1e-12),
        "origin": [_nearest(nodes, (0.0, 0.0))],
    }
    if triangles:
        tri = np.concatenate([cells[:, [0, 1, 2]], cells[:, [0, 2, 3]]])
        return Mesh(nodes, {"tri3": tri}, sets, thickness=thickness)
    return Mesh(nodes, {"quad4": cells}, sets, thickness=thickness)
