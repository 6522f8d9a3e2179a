"""One-dimensional form of the discontinuity-strain routine.

Scalar stresses and strains; used for the cyclic demonstration and for the
energy-equivalence check of the damage constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .material import ContractViolation, MaterialParams, derive_alpha, derive_kc


@dataclass(frozen=True)
class UniaxialState:
    stress: float = 0.0
    plastic_strain: float = 0.0
    discontinuity_strain: float = 0.0
    k: float = 0.0
    d: float = 0.0


def macaulay(x: float) -> float:
    return x if x > 0.0 else 0.0


def total_stress(effective: float, d: float) -> float:
    return (1.0 - d) * macaulay(effective) + min(effective, 0.0)


def check_crack_closure(deps: float, eps_d: float, k: float):
    """Returns ``(eps_d, k, closed)``."""
    if eps_d == 0.0:
        raise ContractViolation("check_crack_closure needs an open crack")
    eps_d = eps_d + deps
    if eps_d < 0.0:
        return 0.0, k, True
    return eps_d, k + macaulay(deps), False


def check_crack_opening(deps, dplastic, plastic_strain, stress, k, E, k_c, enabled=True,
                        sigma_y=None):
    """Returns ``(plastic_strain, eps_d, stress, k, opened)``.

    Passing ``sigma_y`` keeps the elastic share of the increment that lifts
    the start stress onto the yield stress (reopening after closure).
    """
    if enabled and k + macaulay(dplastic) > k_c and deps > 0.0:
        stress = stress - E * (deps - dplastic)
        if sigma_y is not None and stress < sigma_y:
            share = min(1.0, (sigma_y - stress) / (E * deps))
            stress = stress + share * E * deps
            deps = (1.0 - share) * deps
        return plastic_strain, deps, stress, k + macaulay(deps), True
    return plastic_strain + dplastic, 0.0, stress, k + macaulay(dplastic), False


def integrate(
    state: UniaxialState,
    deps: float,
    params: MaterialParams,
    alpha: float,
    k_c: float,
    discontinuity: bool = True,
    strict_closure: bool = True,
    onset_split: bool = True,
):
    """Advance one strain increment. Returns ``(total stress, new state)``."""
    if not math.isfinite(deps):
        raise ValueError("strain increment must be finite")
    E, sy = params.E, params.sigma_y
    stress, eps_p, eps_d, k = state.stress, state.plastic_strain, state.discontinuity_strain, state.k
    applied = deps

    if eps_d != 0.0:
        old = eps_d
        eps_d, k, closed = check_crack_closure(deps, eps_d, k)
        if closed and strict_closure:
            applied = old + deps
    if eps_d == 0.0:
        stress = stress + E * applied
        if stress > sy:
            dplastic = (stress - sy) / E
            stress = sy
            eps_p, eps_d, stress, k, _ = check_crack_opening(
                applied, dplastic, eps_p, stress, k, E, k_c, discontinuity,
                sy if onset_split else None,
            )
    d = -math.expm1(-alpha * k)
    new = UniaxialState(stress, eps_p, eps_d, k, d)
    return total_stress(stress, d), new


@dataclass
class UniaxialHistory:
    strain: np.ndarray
    stress: np.ndarray
    effective_stress: np.ndarray
    plastic_strain: np.ndarray
    discontinuity_strain: np.ndarray
    k: np.ndarray
    d: np.ndarray

    @property
    def elastic_strain(self) -> np.ndarray:
        return self.strain - self.plastic_strain - self.discontinuity_strain

    def as_rows(self):
        cols = (self.strain, self.stress, self.effective_stress, self.plastic_strain,
                self.discontinuity_strain, self.k, self.d)
        return list(zip(*(c.tolist() for c in cols)))


def run_path(
    strains,
    params: MaterialParams,
    ell: float,
    discontinuity: bool = True,
    strict_closure: bool = True,
) -> UniaxialHistory:
    """Drive the routine along a sequence of total strains (first entry is the start)."""
    alpha = derive_alpha(params, ell)
    k_c = derive_kc(alpha, params.d_c)
    strains = np.asarray(strains, dtype=float)
    n = strains.size
    out = {name: np.zeros(n) for name in ("stress", "eff", "ep", "ed", "k", "d")}
    state = UniaxialState()
    for i in range(n):
        step = strains[0] if i == 0 else strains[i] - strains[i - 1]
        if i == 0 and step == 0.0:
            continue
        sig, state = integrate(state, step, params, alpha, k_c, discontinuity, strict_closure)
        out["stress"][i] = sig
        out["eff"][i] = state.stress
        out["ep"][i] = state.plastic_strain
        out["ed"][i] = state.discontinuity_strain
        out["k"][i] = state.k
        out["d"][i] = state.d
    return UniaxialHistory(strains, out["stress"], out["eff"], out["ep"], out["ed"], out["k"], out["d"])


def piecewise_path(points, max_step: float) -> np.ndarray:
    """Strain path through ``points`` with steps no longer than ``max_step``."""
    pts = [float(p) for p in points]
    path = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        m = max(1, int(math.ceil(abs(b - a) / max_step - 1e-9)))
        path.extend(np.linspace(a, b, m + 1)[1:].tolist())
    return np.array(path)


def default_cycle_points(params: MaterialParams, ell: float):
    """Two-cycle strain program: first peak below critical damage, second well past it."""
    alpha = derive_alpha(params, ell)
    k_c = derive_kc(alpha, params.d_c)
    eps_y = params.sigma_y / params.E
    return [0.0, eps_y + 0.5 * k_c, 0.0, eps_y + k_c + 5.0 / alpha, 0.0]


def energy_to_failure(params: MaterialParams, ell: float, step: float = 1e-6,
                      cutoff: float = 1e-4) -> float:
    """Trapezoidal ``int sigma d eps`` of a monotonic tension test.

    Loading stops once the stress falls below ``cutoff * sigma_y`` after the peak.
    """
    alpha = derive_alpha(params, ell)
    k_c = derive_kc(alpha, params.d_c)
    state = UniaxialState()
    prev_sig = 0.0
    energy = 0.0
    peaked = False
    limit = cutoff * params.sigma_y
    while True:
        sig, state = integrate(state, step, params, alpha, k_c)
        energy += 0.5 * (sig + prev_sig) * step
        prev_sig = sig
        peaked = peaked or state.k > 0.0
        if peaked and sig < limit:
            return energy
