"""Run a configured case and write its artifacts.

Artifacts in the output directory:

``curve.csv``
    one row per committed increment, written as the run proceeds;
``fields_*.vtk``
    cell-averaged damage, ``k``, crack opening and more at snapshot times;
``run_meta.json``
    the resolved configuration, derived constants, iteration totals, timing;
``error.json``
    only after a failure: a machine-readable description of what went wrong.
"""

from __future__ import annotations

import csv
import json
import logging
import platform
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import CaseConfig, ValidationError, check_against_mesh
from .fem import Model, SolutionHistory, SolverError
from .material import ConfigurationError
from .vtk import write_snapshot

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("step", "time", "u_control_mm", "F_reaction", "CMOD_mm", "newton_iters_cum")
EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER = 0, 2, 3


def _row(rec) -> list[str]:
    return [str(rec.step), repr(rec.time), repr(rec.u_control), repr(rec.reaction), repr(rec.cmod),
            str(rec.iterations)]


class CurveWriter:
    """Appends rows to ``curve.csv`` and flushes each one."""

    def __init__(self, path: Path):
        self._fh = open(path, "w", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(CURVE_COLUMNS)
        self._fh.flush()

    def __call__(self, rec) -> None:
        self._csv.writerow(_row(rec))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_curve(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if tuple(header) != CURVE_COLUMNS:
        raise ValueError(f"{path}: unexpected header {header}")
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}


def build_model(cfg: CaseConfig) -> Model:
    """Mesh + model, with every setup problem turned into a ValidationError."""
    mesh = cfg.build_mesh()
    check_against_mesh(cfg, mesh)
    try:
        return Model(mesh, cfg.material, cfg.constraints, cfg.solver, gauge_set=cfg.gauge)
    except ConfigurationError as exc:
        raise ValidationError("material", str(exc)) from None
    except ValueError as exc:
        raise ValidationError("boundary", str(exc)) from None


def _meta(cfg: CaseConfig, model: Model, hist: SolutionHistory, wall: float, status: str) -> dict:
    der = model.element_derived
    reactions = [r.reaction for r in hist.records]
    return {
        "status": status,
        "config": cfg.to_dict(),
        "mesh": {
            "n_nodes": model.mesh.n_nodes,
            "n_elements": model.mesh.n_elements,
            "n_points": model.n_points,
            "element_types": sorted(model.mesh.cells),
        },
        "derived": {
            "length_max_mm": cfg.material.max_length,
            "ell_min": float(np.min(der.ell)),
            "ell_max": float(np.max(der.ell)),
            "alpha_min": float(np.min(der.alpha)),
            "alpha_max": float(np.max(der.alpha)),
            "k_c_min": float(np.min(der.k_c)),
            "k_c_max": float(np.max(der.k_c)),
        },
        "totals": {
            "increments": len(hist.records) - 1,
            "newton_iterations": hist.total_iterations,
            "failed_attempts": hist.failed_attempts,
            "peak_reaction": max(reactions) if reactions else 0.0,
            "max_abs_sigma_33": hist.max_plane_stress_residual,
            "snapshots": len(hist.snapshots),
        },
        "wall_time_s": wall,
        "versions": {
            "discstrain": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _write_fields(out: Path, model: Model, hist: SolutionHistory) -> list[str]:
    names = []
    for i, snap in enumerate(hist.snapshots):
        name = f"fields_{i:02d}_{snap.label}.vtk"
        write_snapshot(out / name, model.mesh, snap)
        names.append(name)
    return names


def write_error(out: Path, kind: str, message: str, **extra) -> None:
    out.mkdir(parents=True, exist_ok=True)
    record = {"status": "error", "kind": kind, "message": message, **extra}
    (out / "error.json").write_text(json.dumps(record, indent=2) + "\n")


def run_case(cfg: CaseConfig, out: Path | None = None) -> int:
    """Run ``cfg``; returns the process exit code (0, 2 or 3)."""
    out = cfg.output_dir() if out is None else Path(out)
    try:
        model = build_model(cfg)
    except ValidationError as exc:
        log.error("invalid configuration: %s", exc)
        write_error(out, "validation", str(exc), field=exc.field)
        return EXIT_VALIDATION

    out.mkdir(parents=True, exist_ok=True)
    for stale in ["error.json", *[p.name for p in out.glob("fields_*.vtk")]]:
        (out / stale).unlink(missing_ok=True)
    writer = CurveWriter(out / "curve.csv")
    t0 = time.perf_counter()
    status, code = "completed", EXIT_OK
    try:
        hist = model.run(cfg.program, snapshot_times=cfg.snapshot_times(), on_record=writer)
    except SolverError as exc:
        hist = exc.history or SolutionHistory()
        status, code = "solver_failure", EXIT_SOLVER
        last = hist.records[-1] if hist.records else None
        write_error(
            out, "solver", str(exc),
            last_time=None if last is None else last.time,
            last_step=None if last is None else last.step,
            newton_iterations=hist.total_iterations,
        )
        hist.snapshots.append(model.snapshot(last.step if last else 0, model_time(hist), "partial"))
        log.error("solver failure: %s", exc)
    finally:
        writer.close()
    wall = time.perf_counter() - t0
    files = _write_fields(out, model, hist)
    meta = _meta(cfg, model, hist, wall, status)
    meta["field_files"] = files
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    log.info("%s: %s after %d increments, %d Newton iterations, %.1f s",
             cfg.case, status, len(hist.records) - 1, hist.total_iterations, wall)
    return code


def model_time(hist: SolutionHistory) -> float:
    return hist.records[-1].time if hist.records else 0.0
