"""Case configuration files (YAML or JSON) and their validation.

A case file names the material, the mesh source, the boundary conditions,
the load program, solver switches and output options. Every problem found
while validating is reported as a :class:`ValidationError` naming the
offending field with a dotted path such as ``material.d_c``.
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .fem import Constraint, LoadProgram, Mesh, MeshError, SolverConfig, l_panel, notched_beam, rectangle
from .material import PARAMETER_SETS, ConfigurationError, MaterialParams

OUTPUT_ENV = "DISCSTRAIN_OUTPUT_DIR"
GENERATORS = {"notched_beam": notched_beam, "l_panel": l_panel, "rectangle": rectangle}
LEVELS = ("coarse", "fine")
COMPONENTS = {"x": 0, "y": 1, 0: 0, 1: 1}
SNAPSHOT_MODES = ("extrema", "final", "all")


class ValidationError(ValueError):
    """Invalid case configuration; ``field`` is the dotted path of the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


@dataclass
class MeshSource:
    generator: str | None = None
    file: str | None = None
    refinement: str = "coarse"
    params: dict[str, Any] = field(default_factory=dict)
    levels: dict[str, dict[str, Any]] = field(default_factory=dict)

    def resolved_params(self) -> dict[str, Any]:
        out = dict(self.params)
        out.update(self.levels.get(self.refinement, {}))
        return out


@dataclass
class OutputOptions:
    directory: str = "runs/case"
    snapshots: str | list[float] = "extrema"


@dataclass
class CaseConfig:
    case: str
    material: MaterialParams
    mesh: MeshSource
    constraints: list[Constraint]
    gauge: str | None
    program: LoadProgram
    solver: SolverConfig
    output: OutputOptions
    material_preset: str | None = None
    source: str | None = None

    def output_dir(self) -> Path:
        """Output directory; the environment variable overrides the file.

        Relative paths are taken relative to the working directory, so the
        shipped case files never write into the installed package.
        """
        env = os.environ.get(OUTPUT_ENV)
        return Path(env) if env else Path(self.output.directory)

    def build_mesh(self) -> Mesh:
        src = self.mesh
        if src.file is not None:
            return load_mesh_file(self._resolve(src.file))
        try:
            return GENERATORS[src.generator](**src.resolved_params())
        except TypeError as exc:
            raise ValidationError("mesh.params", str(exc)) from None
        except MeshError as exc:
            raise ValidationError("mesh", str(exc)) from None

    def snapshot_times(self) -> list[float] | None:
        """Pseudo-times of field output; ``None`` means every breakpoint."""
        mode = self.output.snapshots
        if isinstance(mode, list):
            return [float(t) for t in mode]
        if mode == "final":
            return [self.program.end]
        if mode == "all":
            return None
        return extrema_times(self.program)

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.source is not None:
            p = Path(self.source).parent / p
        return p

    def to_dict(self) -> dict[str, Any]:
        """Fully resolved configuration; loading it back reproduces the run."""
        return {
            "case": self.case,
            "material": asdict(self.material),
            "mesh": {
                "generator": self.mesh.generator,
                "file": None if self.mesh.file is None else str(self._resolve(self.mesh.file)),
                "refinement": self.mesh.refinement,
                "params": dict(self.mesh.params),
                "levels": copy.deepcopy(self.mesh.levels),
            },
            "boundary": [
                {"set": c.node_set, "component": "xy"[c.component], "scale": c.scale} for c in self.constraints
            ],
            "gauge": self.gauge,
            "program": {
                "times": list(self.program.times),
                "values": list(self.program.values),
                "initial_increment": self.program.initial_increment,
                "min_increment": self.program.min_increment,
                "cutback": self.program.cutback,
                "max_retries": self.program.max_retries,
            },
            "solver": asdict(self.solver),
            "output": {"directory": str(self.output_dir()), "snapshots": self.output.snapshots},
        }


def extrema_times(program: LoadProgram) -> list[float]:
    """Breakpoints where the control reverses direction, plus the end."""
    v = program.values
    out = []
    for i in range(1, len(v) - 1):
        if (v[i] - v[i - 1]) * (v[i + 1] - v[i]) < 0.0:
            out.append(program.times[i])
    out.append(program.end)
    return out


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def read_document(path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError("config", f"file {str(path)!r} does not exist")
    text = path.read_text()
    try:
        data = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ValidationError("config", f"cannot parse {path.name}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("config", "top level must be a mapping")
    return data


def load_config(path) -> CaseConfig:
    """Read and validate a case file."""
    cfg = parse_config(read_document(path), source=str(path))
    return cfg


def _section(data, key, required=True) -> dict[str, Any]:
    value = data.get(key)
    if value is None:
        if required:
            raise ValidationError(key, "section is missing")
        return {}
    if not isinstance(value, dict):
        raise ValidationError(key, "must be a mapping")
    return value


def _number(section, key, prefix, default=None, positive=False, integer=False):
    value = section.get(key, default)
    name = f"{prefix}.{key}"
    if value is None:
        raise ValidationError(name, "is required")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(name, f"must be a number, got {value!r}")
    if integer and int(value) != value:
        raise ValidationError(name, f"must be an integer, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(name, "must be finite")
    if positive and value <= 0:
        raise ValidationError(name, f"must be positive, got {value!r}")
    return int(value) if integer else float(value)


def _flag(section, key, prefix, default):
    value = section.get(key, default)
    if not isinstance(value, bool):
        raise ValidationError(f"{prefix}.{key}", f"must be true or false, got {value!r}")
    return value


def _unknown(section, allowed, prefix):
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ValidationError(f"{prefix}.{extra[0]}", "unknown field")


MATERIAL_FIELDS = ("E", "nu", "sigma_y", "G_f", "beta", "d_c")


def parse_material(sec) -> tuple[MaterialParams, str | None]:
    _unknown(sec, ("preset",) + MATERIAL_FIELDS, "material")
    preset = sec.get("preset")
    if preset is not None:
        if preset not in PARAMETER_SETS:
            raise ValidationError("material.preset", f"unknown preset {preset!r}; choose from {sorted(PARAMETER_SETS)}")
        values = asdict(PARAMETER_SETS[preset])
    else:
        values = {}
    for key in MATERIAL_FIELDS:
        if key in sec:
            values[key] = _number(sec, key, "material")
        elif key not in values and key in ("E", "nu", "sigma_y", "G_f"):
            raise ValidationError(f"material.{key}", "is required without a preset")
    # field-specific range checks first, so the message names the field
    checks = {
        "E": (lambda v: v > 0, "must be positive"),
        "sigma_y": (lambda v: v > 0, "must be positive"),
        "G_f": (lambda v: v > 0, "must be positive"),
        "nu": (lambda v: -1.0 < v < 0.5, "must lie in (-1, 0.5)"),
        "beta": (lambda v: v >= 0, "must be non-negative"),
        "d_c": (lambda v: 0.0 < v < 1.0, "must lie in (0, 1)"),
    }
    for key, (ok, msg) in checks.items():
        if key in values and not ok(values[key]):
            raise ValidationError(f"material.{key}", f"{msg}, got {values[key]!r}")
    try:
        return MaterialParams(**values), preset
    except ConfigurationError as exc:
        raise ValidationError("material", str(exc)) from None


def parse_mesh(sec) -> MeshSource:
    _unknown(sec, ("generator", "file", "refinement", "params", "levels"), "mesh")
    gen, path = sec.get("generator"), sec.get("file")
    if (gen is None) == (path is None):
        raise ValidationError("mesh", "give exactly one of 'generator' or 'file'")
    if gen is not None and gen not in GENERATORS:
        raise ValidationError("mesh.generator", f"unknown generator {gen!r}; choose from {sorted(GENERATORS)}")
    level = sec.get("refinement", "coarse")
    if level not in LEVELS:
        raise ValidationError("mesh.refinement", f"must be one of {LEVELS}, got {level!r}")
    params = sec.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ValidationError("mesh.params", "must be a mapping")
    levels = sec.get("levels", {}) or {}
    if not isinstance(levels, dict) or any(not isinstance(v, dict) for v in levels.values()):
        raise ValidationError("mesh.levels", "must map refinement levels to parameter mappings")
    for name in levels:
        if name not in LEVELS:
            raise ValidationError(f"mesh.levels.{name}", f"refinement level must be one of {LEVELS}")
    return MeshSource(gen, path, level, dict(params), {k: dict(v) for k, v in levels.items()})


def parse_boundary(items) -> list[Constraint]:
    if not isinstance(items, list) or not items:
        raise ValidationError("boundary", "must be a non-empty list")
    out = []
    for i, item in enumerate(items):
        prefix = f"boundary[{i}]"
        if not isinstance(item, dict):
            raise ValidationError(prefix, "must be a mapping")
        _unknown(item, ("set", "component", "scale"), prefix)
        if not isinstance(item.get("set"), str):
            raise ValidationError(f"{prefix}.set", "node set name is required")
        comp = item.get("component")
        if comp not in COMPONENTS:
            raise ValidationError(f"{prefix}.component", f"must be 'x' or 'y', got {comp!r}")
        scale = _number(item, "scale", prefix, default=0.0)
        out.append(Constraint(item["set"], COMPONENTS[comp], scale))
    if not any(c.scale != 0.0 for c in out):
        raise ValidationError("boundary", "at least one entry needs a non-zero 'scale' (the driven set)")
    return out


def parse_program(sec) -> LoadProgram:
    _unknown(sec, ("times", "values", "initial_increment", "min_increment", "cutback", "max_retries"), "program")
    for key in ("times", "values"):
        seq = sec.get(key)
        if not isinstance(seq, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in seq):
            raise ValidationError(f"program.{key}", "must be a list of numbers")
    times, values = sec["times"], sec["values"]
    if len(times) != len(values) or len(times) < 2:
        raise ValidationError("program.values", "needs the same length as program.times (at least two)")
    if times[0] != 0 or values[0] != 0:
        raise ValidationError("program.times", "schedule must start at time 0 with value 0")
    if any(b <= a for a, b in zip(times[:-1], times[1:])):
        raise ValidationError("program.times", "must increase strictly")
    init = _number(sec, "initial_increment", "program", default=0.02, positive=True)
    mini = _number(sec, "min_increment", "program", default=1e-4, positive=True)
    if mini > init:
        raise ValidationError("program.min_increment", "must not exceed program.initial_increment")
    cut = _number(sec, "cutback", "program", default=0.5)
    if not 0.0 < cut < 1.0:
        raise ValidationError("program.cutback", f"must lie in (0, 1), got {cut!r}")
    retries = _number(sec, "max_retries", "program", default=8, integer=True)
    if retries < 0:
        raise ValidationError("program.max_retries", "must be non-negative")
    return LoadProgram(times, values, init, mini, cut, retries)


def parse_solver(sec) -> SolverConfig:
    allowed = ("tolerance", "max_iterations", "plane_stress", "discontinuity", "strict_closure",
               "onset_split", "global_length")
    _unknown(sec, allowed, "solver")
    gl = sec.get("global_length")
    if gl is not None:
        gl = _number(sec, "global_length", "solver", positive=True)
    return SolverConfig(
        tolerance=_number(sec, "tolerance", "solver", default=1e-6, positive=True),
        max_iterations=_number(sec, "max_iterations", "solver", default=25, positive=True, integer=True),
        plane_stress=_flag(sec, "plane_stress", "solver", True),
        discontinuity=_flag(sec, "discontinuity", "solver", True),
        strict_closure=_flag(sec, "strict_closure", "solver", True),
        onset_split=_flag(sec, "onset_split", "solver", True),
        global_length=gl,
    )


def parse_output(sec) -> OutputOptions:
    _unknown(sec, ("directory", "snapshots"), "output")
    directory = sec.get("directory", "runs/case")
    if not isinstance(directory, str) or not directory:
        raise ValidationError("output.directory", "must be a non-empty string")
    snaps = sec.get("snapshots", "extrema")
    if isinstance(snaps, list):
        if not all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in snaps):
            raise ValidationError("output.snapshots", "time list must hold numbers")
    elif snaps not in SNAPSHOT_MODES:
        raise ValidationError("output.snapshots", f"must be one of {SNAPSHOT_MODES} or a list of times")
    return OutputOptions(directory, snaps)


def parse_config(data: dict[str, Any], source: str | None = None) -> CaseConfig:
    _unknown(data, ("case", "material", "mesh", "boundary", "gauge", "program", "solver", "output"), "config")
    case = data.get("case")
    if not isinstance(case, str) or not case:
        raise ValidationError("case", "a non-empty case name is required")
    material, preset = parse_material(_section(data, "material"))
    mesh = parse_mesh(_section(data, "mesh"))
    boundary = parse_boundary(data.get("boundary"))
    gauge = data.get("gauge")
    if gauge is not None and not isinstance(gauge, str):
        raise ValidationError("gauge", "must be a node set name")
    cfg = CaseConfig(
        case=case,
        material=material,
        mesh=mesh,
        constraints=boundary,
        gauge=gauge,
        program=parse_program(_section(data, "program")),
        solver=parse_solver(_section(data, "solver", required=False)),
        output=parse_output(_section(data, "output", required=False)),
        material_preset=preset,
        source=source,
    )
    if mesh.file is not None and not cfg._resolve(mesh.file).is_file():
        raise ValidationError("mesh.file", f"file {mesh.file!r} does not exist")
    return cfg


def check_against_mesh(cfg: CaseConfig, mesh: Mesh) -> None:
    """Cross-checks needing the mesh: sets, gauge pair and the length bound."""
    for i, c in enumerate(cfg.constraints):
        if c.node_set not in mesh.node_sets:
            raise ValidationError(f"boundary[{i}].set", f"node set {c.node_set!r} not in mesh")
    try:
        mesh.validate(cfg.gauge)
    except MeshError as exc:
        raise ValidationError("gauge" if cfg.gauge and "gauge" in str(exc) else "mesh", str(exc)) from None
    bound = cfg.material.max_length
    if cfg.solver.global_length is not None:
        if cfg.solver.global_length >= bound:
            raise ValidationError(
                "solver.global_length",
                f"length scale must be below 2*E*G_f/sigma_y^2 = {bound:.6g} mm",
            )
        return
    ell = mesh.char_lengths()
    bad = np.flatnonzero(ell >= bound)
    if bad.size:
        listed = ", ".join(str(i) for i in bad[:20])
        raise ValidationError(
            "mesh",
            f"elements {listed} have sqrt(area) >= 2*E*G_f/sigma_y^2 = {bound:.6g} mm; refine the mesh",
        )


# ---------------------------------------------------------------------------
# mesh files
# ---------------------------------------------------------------------------


def load_mesh_file(path) -> Mesh:
    """Mesh from a JSON/YAML document with ``nodes``, ``cells`` and sets."""
    data = read_document(path)
    try:
        return Mesh(
            nodes=np.asarray(data["nodes"], dtype=float),
            cells={k: np.asarray(v, dtype=np.int64) for k, v in data["cells"].items()},
            node_sets=data.get("node_sets", {}),
            element_sets=data.get("element_sets", {}),
            thickness=float(data.get("thickness", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError("mesh.file", f"malformed mesh file: {exc}") from None


def save_mesh_file(mesh: Mesh, path) -> None:
    doc = {
        "nodes": mesh.nodes.tolist(),
        "cells": {k: v.tolist() for k, v in mesh.cells.items()},
        "node_sets": {k: v.tolist() for k, v in mesh.node_sets.items()},
        "element_sets": {k: v.tolist() for k, v in mesh.element_sets.items()},
        "thickness": mesh.thickness,
    }
    Path(path).write_text(json.dumps(doc))
