"""Displacement-controlled quasi-static Newton-Raphson solver."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..material import (
    IN_PLANE,
    DerivedParams,
    MaterialParams,
    PlaneStressConvergenceError,
    PointState,
    RoutineOptions,
    StepResult,
    TangentError,
    _plane_stress,
    integrate_point,
    numerical_tangent,
    probe_size,
)
from ..tensor import STRAIN, spectral_decompose
from .mesh import Mesh, build_blocks

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Simulation aborted; ``history`` holds everything committed so far."""

    def __init__(self, message: str, history: "SolutionHistory | None" = None):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class Constraint:
    """Prescribed displacement ``scale * control`` on one component of a node set.

    ``scale = 0`` fixes the component. Non-zero scales mark the driven DOFs.
    """

    node_set: str
    component: int
    scale: float = 0.0


@dataclass
class LoadProgram:
    """Piecewise-linear control displacement (mm) over pseudo-time."""

    times: list[float]
    values: list[float]
    initial_increment: float = 0.02
    min_increment: float = 1e-4
    cutback: float = 0.5
    max_retries: int = 8

    def __post_init__(self):
        self.times = [float(t) for t in self.times]
        self.values = [float(v) for v in self.values]
        if len(self.times) != len(self.values) or len(self.times) < 2:
            raise ValueError("load program needs matching times/values with at least two points")
        if self.times[0] != 0.0 or self.values[0] != 0.0:
            raise ValueError("load program must start at time 0 with zero control displacement")
        if any(b <= a for a, b in zip(self.times[:-1], self.times[1:])):
            raise ValueError("load program times must increase strictly")
        if not (0.0 < self.min_increment <= self.initial_increment):
            raise ValueError("increments must satisfy 0 < min_increment <= initial_increment")
        if not 0.0 < self.cutback < 1.0:
            raise ValueError("cutback must lie in (0, 1)")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")

    def control(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    @property
    def end(self) -> float:
        return self.times[-1]


@dataclass
class SolverConfig:
    tolerance: float = 1e-6
    max_iterations: int = 25
    plane_stress: bool = True
    discontinuity: bool = True
    strict_closure: bool = True
    onset_split: bool = True
    # Same length for every element. Ignores element size on purpose:
    # results then depend on the mesh.
    global_length: float | None = None

    def __post_init__(self):
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.global_length is not None and not self.global_length > 0.0:
            raise ValueError("global_length must be positive")


@dataclass
class CurveRecord:
    step: int
    time: float
    u_control: float
    reaction: float
    cmod: float
    iterations: int


@dataclass
class FieldSnapshot:
    step: int
    time: float
    label: str
    displacement: np.ndarray
    damage: np.ndarray
    k: np.ndarray
    crack_opening: np.ndarray
    plastic_max: np.ndarray
    sigma_33: np.ndarray


@dataclass
class SolutionHistory:
    records: list[CurveRecord] = field(default_factory=list)
    snapshots: list[FieldSnapshot] = field(default_factory=list)
    total_iterations: int = 0
    failed_attempts: int = 0
    max_plane_stress_residual: float = 0.0
    completed: bool = False


class Model:
    """Mesh + material + boundary conditions, with the committed solution.

    State is kept per quadrature point in global element order.
    """

    def __init__(
        self,
        mesh: Mesh,
        params: MaterialParams,
        constraints: list[Constraint],
        config: SolverConfig | None = None,
        gauge_set: str | None = None,
    ):
        self.mesh = mesh
        self.params = params
        self.config = config or SolverConfig()
        self.gauge_set = gauge_set
        mesh.validate(gauge_set)
        self.blocks = build_blocks(mesh)
        self.options = RoutineOptions(
            discontinuity=self.config.discontinuity,
            strict_closure=self.config.strict_closure,
            onset_split=self.config.onset_split,
        )

        if self.config.global_length is None:
            self.element_length = mesh.char_lengths()
        else:
            self.element_length = np.full(mesh.n_elements, float(self.config.global_length))
        labels = [f"element {i}" for i in range(mesh.n_elements)]
        self.element_derived = DerivedParams.from_length(params, self.element_length, labels)
        self.point_element = np.concatenate(
            [b.first_element + np.repeat(np.arange(b.conn.shape[0]), b.weights.shape[1]) for b in self.blocks]
        )
        self.derived = self.element_derived[self.point_element]
        self.n_points = self.point_element.size

        self.constraints = list(constraints)
        dofs, scales = [], []
        for c in self.constraints:
            if c.node_set not in mesh.node_sets:
                raise ValueError(f"constraint references unknown node set {c.node_set!r}")
            if c.component not in (0, 1):
                raise ValueError("constraint component must be 0 (x) or 1 (y)")
            nd = 2 * mesh.node_sets[c.node_set] + c.component
            dofs.append(nd)
            scales.append(np.full(nd.size, float(c.scale)))
        dofs = np.concatenate(dofs) if dofs else np.zeros(0, dtype=np.int64)
        scales = np.concatenate(scales) if scales else np.zeros(0)
        uniq, first = np.unique(dofs, return_index=True)
        self.fixed = uniq
        self.fixed_scale = scales[first]
        self.driven = self.fixed[self.fixed_scale != 0.0]
        self.driven_sign = np.sign(self.fixed_scale[self.fixed_scale != 0.0])
        mask = np.ones(mesh.n_dofs, dtype=bool)
        mask[self.fixed] = False
        self.free = np.flatnonzero(mask)
        if self.free.size == 0:
            raise ValueError("no free degrees of freedom")

        moduli = params.moduli
        if self.config.plane_stress:
            self.elastic_in_plane = moduli.D_plane_stress
        else:
            self.elastic_in_plane = moduli.D[np.ix_(IN_PLANE, IN_PLANE)]
        extent = np.ptp(mesh.nodes, axis=0).max()
        self.force_floor = 1e-8 * params.E * extent * mesh.thickness

        self._pattern = self._sparsity()
        self.u = np.zeros(mesh.n_dofs)
        self.state = PointState.virgin(self.n_points)
        self.control = 0.0

    # ------------------------------------------------------------------ kinematics

    def strain(self, u) -> np.ndarray:
        """In-plane strains ``(n_points, 3)`` of a displacement vector."""
        parts = [np.einsum("eqij,ej->eqi", b.B, u[b.dofs]).reshape(-1, 3) for b in self.blocks]
        return np.concatenate(parts)

    def internal_force(self, stress_in_plane) -> np.ndarray:
        f = np.zeros(self.mesh.n_dofs)
        for b in self.blocks:
            s = stress_in_plane[b.first_point:b.first_point + b.n_points].reshape(b.weights.shape + (3,))
            fe = np.einsum("eqij,eqi,eq->ej", b.B, s, b.weights)
            np.add.at(f, b.dofs.ravel(), fe.ravel())
        return f

    def _sparsity(self):
        rows, cols = [], []
        for b in self.blocks:
            n = b.dofs.shape[1]
            rows.append(np.repeat(b.dofs, n, axis=1).ravel())
            cols.append(np.tile(b.dofs, (1, n)).ravel())
        return np.concatenate(rows), np.concatenate(cols)

    def stiffness(self, tangent_in_plane) -> sp.csr_matrix:
        vals = []
        for b in self.blocks:
            c = tangent_in_plane[b.first_point:b.first_point + b.n_points].reshape(b.weights.shape + (3, 3))
            ke = np.einsum("eqki,eqkl,eqlj,eq->eij", b.B, c, b.B, b.weights)
            vals.append(ke.ravel())
        n = self.mesh.n_dofs
        return sp.coo_matrix((np.concatenate(vals), self._pattern), shape=(n, n)).tocsr()

    # ------------------------------------------------------------------ material

    def integrate(self, du, state=None, plane_stress_tol: float | None = None) -> StepResult:
        """Material response to the displacement increment ``du``.

        ``plane_stress_tol`` tightens the out-of-plane tolerance at points
        without an open crack (as tangent probes do).
        """
        state = self.state if state is None else state
        deps = self.strain(du)
        if self.config.plane_stress:
            res, ok, resid = _plane_stress(state, deps, self.params, self.derived, self.options, plane_stress_tol)
            if not np.all(ok):
                raise PlaneStressConvergenceError(float(resid[~ok].max()), self.options.plane_stress_max_iter)
            return res
        full = np.zeros((deps.shape[0], 6))
        full[:, IN_PLANE] = deps
        return integrate_point(state, full, self.params, self.derived, self.options)

    def tangent(self, du, base: StepResult, state=None) -> np.ndarray:
        """Per-point in-plane tangents; elastic undamaged points get the closed form."""
        state = self.state if state is None else state
        deps = self.strain(du)
        h = probe_size(deps)
        margin = 10.0 * self.params.E * h
        active = (
            (base.state.d > 0.0)
            | state.crack_open
            | base.state.crack_open
            | base.plastic
            | (base.trial_yield > -margin)
        )
        c = np.broadcast_to(self.elastic_in_plane, (self.n_points, 3, 3)).copy()
        idx = np.flatnonzero(active)
        if idx.size:
            if self.config.plane_stress:
                sub = numerical_tangent(state[idx], deps[idx], self.params, self.derived[idx],
                                        self.options, plane_stress=True)
            else:
                full = np.zeros((idx.size, 6))
                full[:, IN_PLANE] = deps[idx]
                t6 = numerical_tangent(state[idx], full, self.params, self.derived[idx], self.options)
                sub = t6[:, IN_PLANE][:, :, IN_PLANE]
            c[idx] = sub
        return c

    # ------------------------------------------------------------------ solve

    def prescribed(self, control: float) -> np.ndarray:
        return self.fixed_scale * control

    def residual(self, res: StepResult):
        """Free-DOF residual and reaction forces at constrained DOFs."""
        f = self.internal_force(res.stress[:, IN_PLANE])
        return f[self.free], f[self.fixed], f

    def reaction(self, f_int) -> float:
        """Force conjugate to the control displacement (summed over driven DOFs)."""
        return float(np.sum(f_int[self.driven] * self.driven_sign))

    def gauge_opening(self, u) -> float:
        if self.gauge_set is None:
            return 0.0
        a, b = self.mesh.node_sets[self.gauge_set]
        axis = self.mesh.nodes[b] - self.mesh.nodes[a]
        axis = axis / np.linalg.norm(axis)
        return float(np.dot(u[2 * b:2 * b + 2] - u[2 * a:2 * a + 2], axis))

    def newton(self, control: float):
        """Solve one increment to ``control``.

        Returns ``(converged, iterations, du, result)``. Nothing is committed.
        """
        cfg = self.config
        du = np.zeros(self.mesh.n_dofs)
        dp = self.prescribed(control) - self.u[self.fixed]
        iterations = 0
        try:
            base = self.integrate(du)
            r_free, r_fixed, _ = self.residual(base)
            c = self.tangent(du, base)
            k = self.stiffness(c)
            rhs = -(r_free + k[self.free][:, self.fixed] @ dp)
            du[self.fixed] = dp
            k_ff = k[self.free][:, self.free]
            for _ in range(cfg.max_iterations):
                iterations += 1
                step = spla.spsolve(k_ff.tocsc(), rhs)
                if not np.all(np.isfinite(step)):
                    return False, iterations, du, None
                du[self.free] += step
                res = self.integrate(du)
                r_free, r_fixed, _ = self.residual(res)
                ref = max(np.linalg.norm(r_fixed), self.force_floor)
                norm = np.linalg.norm(r_free)
                log.debug("control %.6g it %d |R| %.3e ref %.3e", control, iterations, norm, ref)
                if not math.isfinite(norm) or norm > 1e12 * ref:
                    return False, iterations, du, None
                if norm <= cfg.tolerance * ref:
                    return True, iterations, du, res
                c = self.tangent(du, res)
                k_ff = self.stiffness(c)[self.free][:, self.free]
                rhs = -r_free
        except (PlaneStressConvergenceError, TangentError) as exc:
            log.debug("increment to %.6g failed: %s", control, exc)
            return False, max(iterations, 1), du, None
        return False, iterations, du, None

    def commit(self, du, res: StepResult, control: float):
        self.u = self.u + du
        self.state = res.state
        self.control = control

    # ------------------------------------------------------------------ program

    def snapshot(self, step: int, t: float, label: str, res: StepResult | None = None) -> FieldSnapshot:
        st = self.state
        ep_max = spectral_decompose(st.plastic_strain, STRAIN).values[:, 0]
        s33 = np.abs(st.stress[:, 2])
        return FieldSnapshot(
            step=step,
            time=t,
            label=label,
            displacement=self.u.reshape(-1, 2).copy(),
            damage=st.d.copy(),
            k=st.k.copy(),
            crack_opening=st.crack_opening_strain(),
            plastic_max=ep_max,
            sigma_33=s33,
        )

    def run(self, program: LoadProgram, snapshot_times=None, on_record=None) -> SolutionHistory:
        """Follow ``program``; raises :class:`SolverError` carrying the partial history."""
        hist = SolutionHistory()
        breaks = list(program.times[1:])
        snap_times = set(breaks if snapshot_times is None else snapshot_times)
        snap_times.add(program.end)
        t = 0.0
        dt = program.initial_increment
        step = 0
        f0 = self.internal_force(np.zeros((self.n_points, 3)))
        hist.records.append(CurveRecord(0, 0.0, 0.0, self.reaction(f0), 0.0, 0))
        if on_record is not None:
            on_record(hist.records[0])
        while t < program.end - 1e-12:
            nxt = min(b for b in breaks if b > t + 1e-12)
            retries = 0
            while True:
                t_try = min(t + dt, nxt)
                if nxt - t_try < 1e-9 * program.end:
                    t_try = nxt
                target = program.control(t_try)
                ok, its, du, res = self.newton(target)
                hist.total_iterations += its
                if ok:
                    break
                hist.failed_attempts += 1
                retries += 1
                dt *= program.cutback
                log.info("cut back at t=%.5g (retry %d, dt=%.3g)", t, retries, dt)
                if dt < program.min_increment or retries > program.max_retries:
                    raise SolverError(
                        f"increment at t={t:.6g} failed after {retries} retries (dt={dt:.3g})", hist
                    )
            self.commit(du, res, target)
            step += 1
            t = t_try
            if self.config.plane_stress:
                hist.max_plane_stress_residual = max(
                    hist.max_plane_stress_residual, float(np.max(np.abs(self.state.stress[:, 2])))
                )
            _, _, f = self.residual(res)
            rec = CurveRecord(step, t, target, self.reaction(f), self.gauge_opening(self.u), hist.total_iterations)
            hist.records.append(rec)
            if on_record is not None:
                on_record(rec)
            if any(abs(t - s) < 1e-9 * max(1.0, program.end) for s in snap_times):
                label = "final" if abs(t - program.end) < 1e-12 else f"t{t:g}"
                hist.snapshots.append(self.snapshot(step, t, label))
            if retries == 0:
                dt = min(program.initial_increment, dt * 1.5)
        hist.completed = True
        return hist
