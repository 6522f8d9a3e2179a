"""Compare two finished runs of the same load program."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .runner import read_curve

OBJECTIVE_LIMIT = 0.05
MESH_DEPENDENT_LIMIT = 0.15


class CompareError(ValueError):
    pass


def relative_difference(a: float, b: float) -> float:
    """``|a - b| / max(|a|, |b|)``; zero when both vanish."""
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


def envelope_energy(cmod: np.ndarray, force: np.ndarray) -> float:
    """Trapezoidal ``int F dCMOD`` over records that extend the CMOD envelope."""
    if cmod.size < 2:
        return 0.0
    keep = cmod >= np.maximum.accumulate(cmod)
    c, f = cmod[keep], force[keep]
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(c)))


def unload_slopes(control: np.ndarray, cmod: np.ndarray, force: np.ndarray) -> list[float]:
    """Secant slope ``dF / dCMOD`` of every branch along which the control decreases."""
    slopes = []
    i, n = 1, control.size
    while i < n:
        if control[i] < control[i - 1]:
            start = i - 1
            while i < n and control[i] < control[i - 1]:
                i += 1
            end = i - 1
            dc = cmod[start] - cmod[end]
            slopes.append(float((force[start] - force[end]) / dc) if dc != 0.0 else float("nan"))
        else:
            i += 1
    return slopes


@dataclass
class RunSummary:
    directory: str
    peak_reaction: float
    envelope_energy: float
    unload_slopes: list[float]
    newton_iterations: int


@dataclass
class ComparisonReport:
    a: RunSummary
    b: RunSummary
    peak_difference: float
    energy_difference: float
    slope_ratios: list[float]
    iteration_change: float
    verdict: str
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = [
            f"A: {self.a.directory}",
            f"B: {self.b.directory}",
            f"peak reaction      A={self.a.peak_reaction:.6g}  B={self.b.peak_reaction:.6g}  "
            f"rel. diff={self.peak_difference:.4%}",
            f"envelope energy    A={self.a.envelope_energy:.6g}  B={self.b.envelope_energy:.6g}  "
            f"rel. diff={self.energy_difference:.4%}",
            f"Newton iterations  A={self.a.newton_iterations}  B={self.b.newton_iterations}  "
            f"change B vs A={self.iteration_change:+.2%}",
        ]
        for i, r in enumerate(self.slope_ratios, 1):
            lines.append(f"unload slope ratio A/B, cycle {i}: {r:.6g}")
        lines.append(f"verdict: {self.verdict}")
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def _load(directory) -> tuple[dict, dict]:
    d = Path(directory)
    curve, meta = d / "curve.csv", d / "run_meta.json"
    for p in (curve, meta):
        if not p.is_file():
            raise CompareError(f"{p} not found; is {d} a finished run directory?")
    return read_curve(curve), json.loads(meta.read_text())


def _summary(directory, curve, meta) -> RunSummary:
    f, c, u = curve["F_reaction"], curve["CMOD_mm"], curve["u_control_mm"]
    iters = int(curve["newton_iters_cum"][-1]) if f.size else 0
    return RunSummary(
        directory=str(directory),
        peak_reaction=float(f.max()) if f.size else 0.0,
        envelope_energy=envelope_energy(c, f),
        unload_slopes=unload_slopes(u, c, f),
        newton_iterations=iters,
    )


def compare_runs(dir_a, dir_b) -> ComparisonReport:
    curve_a, meta_a = _load(dir_a)
    curve_b, meta_b = _load(dir_b)
    prog_a, prog_b = meta_a["config"]["program"], meta_b["config"]["program"]
    if prog_a["times"] != prog_b["times"] or prog_a["values"] != prog_b["values"]:
        raise CompareError("runs used different load programs")
    notes = []
    for name, meta in (("A", meta_a), ("B", meta_b)):
        if meta.get("status") != "completed":
            notes.append(f"run {name} did not complete ({meta.get('status')})")
    a, b = _summary(dir_a, curve_a, meta_a), _summary(dir_b, curve_b, meta_b)
    peak = relative_difference(a.peak_reaction, b.peak_reaction)
    energy = relative_difference(a.envelope_energy, b.envelope_energy)
    ratios = [sa / sb if sb not in (0.0,) else float("inf")
              for sa, sb in zip(a.unload_slopes, b.unload_slopes)]
    if len(a.unload_slopes) != len(b.unload_slopes):
        notes.append("runs have different numbers of unloading branches")
    change = (b.newton_iterations - a.newton_iterations) / a.newton_iterations if a.newton_iterations else 0.0
    if peak > MESH_DEPENDENT_LIMIT:
        verdict = "mesh-dependent"
    elif peak <= OBJECTIVE_LIMIT and energy <= OBJECTIVE_LIMIT:
        verdict = "objective"
    else:
        verdict = "inconclusive"
    return ComparisonReport(a, b, peak, energy, ratios, change, verdict, notes)
