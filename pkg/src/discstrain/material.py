"""Rankine / Drucker-Prager plastic-damage routine with a discontinuity strain.

The routine follows a user-material contract: a strain increment and the
history of the last converged increment go in, the total stress, the
updated history and (on request) the algorithmic tangent come out.

All functions are vectorised. A :class:`PointState` may hold one point
(fields of shape ``(6,)``, ``()``...) or a whole batch of points (leading
axis ``N``); the kernels never loop over points.

Strains use engineering shear, stresses plain shear (see
:mod:`discstrain.tensor`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .tensor import (
    IDENTITY,
    STRAIN,
    STRESS,
    ElasticModuli,
    _project,
    macaulay,
    spectral_decompose,
    tensile_part,
    vol_dev_split,
    invariants,
)


class ConfigurationError(ValueError):
    """Material or length-scale data that cannot produce a valid model."""


class ContractViolation(RuntimeError):
    """A kernel was called outside its precondition."""


class PlaneStressConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"plane-stress iteration did not converge in {iterations} iterations "
            f"(last |sigma_33| = {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


class TangentError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaterialParams:
    """Material constants. Units: MPa, mm."""

    E: float
    nu: float
    sigma_y: float
    G_f: float
    beta: float = 0.2
    d_c: float = 0.35

    def __post_init__(self):
        for name in ("E", "sigma_y", "G_f"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ConfigurationError(f"{name} must be a positive number, got {value!r}")
        if not -1.0 < self.nu < 0.5:
            raise ConfigurationError(f"nu must lie in (-1, 0.5), got {self.nu!r}")
        if not (math.isfinite(self.beta) and self.beta >= 0.0):
            raise ConfigurationError(f"beta must be non-negative, got {self.beta!r}")
        if not 0.0 < self.d_c < 1.0:
            raise ConfigurationError(f"d_c must lie in (0, 1), got {self.d_c!r}")

    @property
    def moduli(self) -> ElasticModuli:
        return ElasticModuli(self.E, self.nu)

    @property
    def max_length(self) -> float:
        """Upper bound ``2 E G_f / sigma_y^2`` of the numerical length scale."""
        return 2.0 * self.E * self.G_f / self.sigma_y**2


# Calibrated parameter sets for the three benchmarks (E in MPa).
CENTER_NOTCHED = MaterialParams(E=54000.0, nu=0.2, sigma_y=7.2, G_f=0.075, beta=0.2, d_c=0.35)
OFF_CENTER_NOTCHED = MaterialParams(E=34000.0, nu=0.2, sigma_y=4.0, G_f=0.09, beta=0.2, d_c=0.4)
L_PANEL = MaterialParams(E=22500.0, nu=0.2, sigma_y=2.3, G_f=0.09, beta=0.2, d_c=0.4)
PARAMETER_SETS = {
    "center_notched": CENTER_NOTCHED,
    "off_center_notched": OFF_CENTER_NOTCHED,
    "l_panel": L_PANEL,
}


def derive_alpha(params: MaterialParams, ell, labels=None):
    """Damage growth constant that dissipates ``G_f / ell`` per unit volume.

    ``ell`` may be an array (one length per element); ``labels`` names the
    entries in the error message when the length bound is violated.
    """
    ell_arr = np.asarray(ell, dtype=float)
    if np.any(~np.isfinite(ell_arr)) or np.any(ell_arr <= 0.0):
        raise ConfigurationError("length scale must be positive and finite")
    bound = params.max_length
    bad = np.flatnonzero(np.atleast_1d(ell_arr) >= bound)
    if bad.size:
        if labels is None:
            labels = np.arange(np.atleast_1d(ell_arr).size)
        names = ", ".join(str(np.asarray(labels)[i]) for i in bad[:20])
        more = "" if bad.size <= 20 else f" (+{bad.size - 20} more)"
        raise ConfigurationError(
            f"length scale must be below 2*E*G_f/sigma_y^2 = {bound:.6g} mm; "
            f"violated by {names}{more}"
        )
    e, s, g = params.E, params.sigma_y, params.G_f
    alpha = 2.0 * e * ell_arr * s / (2.0 * e * g - ell_arr * s**2)
    return float(alpha) if alpha.ndim == 0 else alpha


def derive_kc(alpha, d_c: float):
    """Internal variable at which damage reaches ``d_c``."""
    if not 0.0 < d_c < 1.0:
        raise ConfigurationError(f"d_c must lie in (0, 1), got {d_c!r}")
    a = np.asarray(alpha, dtype=float)
    if np.any(a <= 0.0):
        raise ConfigurationError("alpha must be positive")
    kc = -np.log1p(-d_c) / a
    return float(kc) if kc.ndim == 0 else kc


@dataclass(frozen=True)
class DerivedParams:
    """Per-point length scale and the constants derived from it."""

    ell: np.ndarray | float
    alpha: np.ndarray | float
    k_c: np.ndarray | float

    @classmethod
    def from_length(cls, params: MaterialParams, ell, labels=None) -> "DerivedParams":
        alpha = derive_alpha(params, ell, labels)
        return cls(ell=ell, alpha=alpha, k_c=derive_kc(alpha, params.d_c))

    def __getitem__(self, idx) -> "DerivedParams":
        pick = lambda v: np.asarray(v)[idx] if np.ndim(v) else v  # noqa: E731
        return DerivedParams(pick(self.ell), pick(self.alpha), pick(self.k_c))

    def tile(self, reps: int) -> "DerivedParams":
        rep = lambda v: np.tile(np.asarray(v), reps) if np.ndim(v) else v  # noqa: E731
        return DerivedParams(rep(self.ell), rep(self.alpha), rep(self.k_c))


@dataclass(frozen=True)
class RoutineOptions:
    """Switches of the integration-point routine.

    ``strict_closure`` keeps the strain decomposition exact when a crack
    closes. The normal opening left when the faces meet goes back to the
    stress update, so the increment becomes ``deps + (n^T eps_d_old n) n (x) n``
    and its normal part is the overshoot past closure. The remaining sliding
    and lateral part of ``eps_d_old`` is moved into the plastic strain. The
    literal variant applies ``deps`` alone and drops ``eps_d_old``.

    ``onset_split`` lets a crack reopen from the stress at which the trial
    path first reaches the yield surface instead of the stress at the start
    of the increment. The two coincide whenever the start already lies on the
    surface, and the split keeps large reloading increments from freezing a
    compressive stress inside an open crack.
    """

    discontinuity: bool = True
    strict_closure: bool = True
    onset_split: bool = True
    plane_stress_tol: float = 1e-8
    plane_stress_max_iter: int = 50
    probe_plane_stress_tol: float = 1e-12
    yield_tol: float = 1e-12


DEFAULT_OPTIONS = RoutineOptions()


# ---------------------------------------------------------------------------
# History
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointState:
    """Integration-point history (one point or a batch)."""

    stress: np.ndarray
    plastic_strain: np.ndarray
    discontinuity_strain: np.ndarray
    k: np.ndarray
    d: np.ndarray
    normal: np.ndarray
    cracked: np.ndarray

    @classmethod
    def virgin(cls, n: int | None = None) -> "PointState":
        shape = () if n is None else (n,)
        return cls(
            stress=np.zeros(shape + (6,)),
            plastic_strain=np.zeros(shape + (6,)),
            discontinuity_strain=np.zeros(shape + (6,)),
            k=np.zeros(shape),
            d=np.zeros(shape),
            normal=np.zeros(shape + (3,)),
            cracked=np.zeros(shape, dtype=bool),
        )

    @property
    def size(self) -> int:
        return int(np.prod(self.k.shape))

    @property
    def crack_open(self) -> np.ndarray:
        return np.any(self.discontinuity_strain != 0.0, axis=-1)

    def copy(self) -> "PointState":
        return PointState(*(np.array(getattr(self, f.name)) for f in fields(self)))

    def __getitem__(self, idx) -> "PointState":
        return PointState(*(np.asarray(getattr(self, f.name))[idx] for f in fields(self)))

    def tile(self, reps: int) -> "PointState":
        def rep(a):
            a = np.asarray(a)
            return np.tile(a, (reps,) + (1,) * (a.ndim - 1))

        return PointState(*(rep(getattr(self, f.name)) for f in fields(self)))

    def merged(self, mask, other: "PointState") -> "PointState":
        """Copy of ``self`` with the points selected by ``mask`` taken from ``other``.

        ``other`` holds only the selected points (``self[mask]`` layout).
        """
        out = self.copy()
        for f in fields(self):
            getattr(out, f.name)[mask] = getattr(other, f.name)
        return out

    def crack_opening_strain(self) -> np.ndarray:
        """``n^T eps_d n`` (zero where no crack has formed)."""
        return _project(self.discontinuity_strain, self.normal, STRAIN)


@dataclass(frozen=True)
class StepResult:
    """Output of one material-routine call.

    ``strain_increment`` is the full six-component increment actually applied
    (for plane stress it carries the converged out-of-plane component).
    """

    stress: np.ndarray
    state: PointState
    strain_increment: np.ndarray
    plastic: np.ndarray
    trial_yield: np.ndarray
    tangent: np.ndarray | None = None
    iterations: int = 0


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def yield_value(stress, sigma_y: float):
    """Rankine yield function ``max principal - sigma_y``."""
    return spectral_decompose(stress).values[..., 0] - sigma_y


def weight(stress, sigma_y: float = 1.0):
    """Tensile share ``sum <s_i> / sum |s_i|`` of the principal stresses.

    Returns 1 for stresses whose principal values are all below
    ``1e-12 * sigma_y`` in magnitude.
    """
    lam = spectral_decompose(stress).values
    den = np.sum(np.abs(lam), axis=-1)
    num = np.sum(macaulay(lam), axis=-1)
    small = den <= 1e-12 * sigma_y
    return np.where(small, 1.0, num / np.where(small, 1.0, den))


def damage_update(k, alpha):
    """Exponential damage ``1 - exp(-alpha k)``."""
    k = np.asarray(k, dtype=float)
    if np.any(k < 0.0):
        raise ContractViolation("damage internal variable must be non-negative")
    return -np.expm1(-np.asarray(alpha) * k)


def total_stress(effective, d):
    """``(1 - d) sigma_t + sigma_c`` computed as ``sigma - d sigma_t``."""
    effective = np.asarray(effective, dtype=float)
    d = np.asarray(d, dtype=float)
    out = np.array(effective)
    hit = d > 0.0
    if np.any(hit):
        if effective.ndim == 1:
            return effective - d * tensile_part(effective)
        out[hit] = effective[hit] - d[hit, None] * tensile_part(effective[hit])
    return out


@dataclass(frozen=True)
class ReturnResult:
    stress: np.ndarray
    plastic_increment: np.ndarray
    dgamma: np.ndarray
    apex: np.ndarray


def return_map(trial, moduli: ElasticModuli, sigma_y: float, beta: float) -> ReturnResult:
    """Return an inadmissible trial stress to the Rankine surface.

    Flow follows the Drucker-Prager potential ``3 beta p + q`` with the
    plastic multiplier in closed form. Trials whose return would cross the
    hydrostatic axis (``dgamma > q_trial / 3G``) or that are hydrostatic go to
    the apex ``sigma_y I``.
    """
    trial = np.asarray(trial, dtype=float)
    if np.any(yield_value(trial, sigma_y) <= 0.0):
        raise ContractViolation("return_map called with an admissible trial stress")
    return _return_map(trial, moduli, sigma_y, beta)


def _return_map(trial, moduli: ElasticModuli, sigma_y: float, beta: float, lam_max=None):
    K, G = moduli.K, moduli.G
    p, s = vol_dev_split(trial)
    _, _, _, q = invariants(trial)
    if lam_max is None:
        lam_max = spectral_decompose(trial).values[..., 0]

    hydro = q < 1e-12 * sigma_y
    q_safe = np.where(hydro, 1.0, q)
    dgamma = (lam_max - sigma_y) / (3.0 * K * beta + 3.0 * G * (lam_max - p) / q_safe)
    apex = hydro | (dgamma > q / (3.0 * G))

    # regular branch: scale the deviator, shift the pressure
    scale = 1.0 - 3.0 * G * dgamma / q_safe
    p_new = p - 3.0 * K * beta * dgamma
    stress = p_new[..., None] * IDENTITY + scale[..., None] * s
    unit = s / q_safe[..., None]
    dplastic = dgamma[..., None] * (beta * IDENTITY + 1.5 * unit * _ENG)

    if np.any(apex):
        if beta <= 0.0:
            raise ContractViolation("apex return requires a positive dilation constant")
        dgamma_apex = (p - sigma_y) / (3.0 * K * beta)
        dp_apex = ((p - sigma_y) / (3.0 * K))[..., None] * IDENTITY + s * _ENG / (2.0 * G)
        stress = np.where(apex[..., None], sigma_y * IDENTITY, stress)
        dplastic = np.where(apex[..., None], dp_apex, dplastic)
        dgamma = np.where(apex, dgamma_apex, dgamma)
    return ReturnResult(stress, dplastic, dgamma, apex)


# stress-like Voigt -> engineering strain Voigt
_ENG = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])


def normal_dyad(n) -> np.ndarray:
    """``n (x) n`` as an engineering-strain Voigt vector."""
    n = np.asarray(n, dtype=float)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    return np.stack([x * x, y * y, z * z, 2 * x * y, 2 * x * z, 2 * y * z], axis=-1)


def yield_onset_fraction(start, dstress, sigma_y: float, iterations: int = 60):
    """Smallest ``t`` in ``[0, 1]`` with ``f(start + t dstress) = 0``.

    The Rankine function is convex along the segment, so bisection is safe.
    Points already on or outside the surface give 0, points that stay inside
    give 1.
    """
    start = np.asarray(start, dtype=float)
    dstress = np.asarray(dstress, dtype=float)
    lo = np.zeros(start.shape[:-1])
    hi = np.ones(start.shape[:-1])
    f0 = yield_value(start, sigma_y)
    f1 = yield_value(start + dstress, sigma_y)
    active = (f0 < 0.0) & (f1 > 0.0)
    if np.any(active):
        a, b = lo[active], hi[active]
        s0, ds = start[active], dstress[active]
        for _ in range(iterations):
            mid = 0.5 * (a + b)
            inside = yield_value(s0 + mid[..., None] * ds, sigma_y) <= 0.0
            a = np.where(inside, mid, a)
            b = np.where(inside, b, mid)
        lo[active] = a
    return np.where(f0 >= 0.0, 0.0, np.where(f1 <= 0.0, 1.0, lo))


def check_crack_closure(state: PointState, deps):
    """Add ``deps`` to an open crack; close it when ``n^T eps_d n < 0``.

    Returns the updated state and a boolean ``closed`` array. Damage ``d`` is
    left untouched here; the caller refreshes it from ``k``.
    """
    deps = np.asarray(deps, dtype=float)
    if not np.all(state.crack_open):
        raise ContractViolation("check_crack_closure needs an open crack")
    eps_d = state.discontinuity_strain + deps
    opening = _project(eps_d, state.normal, STRAIN)
    closed = opening < 0.0
    growth = macaulay(_project(deps, state.normal, STRAIN))
    eps_d = np.where(closed[..., None], 0.0, eps_d)
    k = np.where(closed, state.k, state.k + growth)
    return replace(state, discontinuity_strain=eps_d, k=k), closed


def check_crack_opening(
    state: PointState,
    deps,
    dplastic,
    returned,
    moduli: ElasticModuli,
    k_c,
    trial_normal,
    sigma_y: float = 1.0,
    enabled: bool = True,
    onset_split: bool = False,
):
    """Decide between plastic accumulation and crack opening after a return.

    ``state`` is the history before the increment (its crack normal is used
    once a crack exists); ``trial_normal`` is the major principal direction
    of the trial stress and stands in for the normal before initiation.
    The weight uses the returned (pre-reset) stress. With ``onset_split`` an
    opening point keeps the elastic share ``t deps`` of the increment that
    brings it onto the yield surface and only ``(1 - t) deps`` enters the
    discontinuity strain and ``k``.
    """
    deps = np.asarray(deps, dtype=float)
    w = weight(returned, sigma_y)
    dp_max = macaulay(spectral_decompose(dplastic, STRAIN).values[..., 0])
    normal = np.where(state.cracked[..., None], state.normal, trial_normal)
    opens = (state.k + w * dp_max > k_c) & (_project(deps, normal, STRAIN) > 0.0)
    if not enabled:
        opens = np.zeros_like(opens)

    reset = returned - moduli.stress(deps - dplastic)
    share = np.zeros(opens.shape)
    if onset_split and np.any(opens):
        dsig = moduli.stress(deps)
        share = np.where(opens, yield_onset_fraction(reset, dsig, sigma_y), 0.0)
        reset = reset + share[..., None] * dsig
    crack_deps = (1.0 - share)[..., None] * deps
    d_max = macaulay(spectral_decompose(crack_deps, STRAIN).values[..., 0])
    o = opens[..., None]
    new = PointState(
        stress=np.where(o, reset, returned),
        plastic_strain=np.where(o, state.plastic_strain, state.plastic_strain + dplastic),
        discontinuity_strain=np.where(o, crack_deps, state.discontinuity_strain),
        k=state.k + w * np.where(opens, d_max, dp_max),
        d=state.d,
        normal=np.where(o & ~state.cracked[..., None], trial_normal, state.normal),
        cracked=state.cracked | opens,
    )
    return new, opens


def integrate_point(
    state: PointState,
    deps,
    params: MaterialParams,
    derived: DerivedParams,
    options: RoutineOptions = DEFAULT_OPTIONS,
) -> StepResult:
    """One increment of the plastic-damage routine with discontinuity strain.

    1. open cracks absorb the increment (closure check);
    2. points without discontinuity strain get an elastic predictor and,
       when inadmissible, a return map followed by the opening check;
    3. damage is refreshed from ``k`` and the total stress assembled from the
       tension-compression split of the effective stress.
    """
    deps = np.asarray(deps, dtype=float)
    if not np.all(np.isfinite(deps)):
        raise ValueError("strain increment has non-finite components")
    single = deps.ndim == 1
    if single:
        state = state[None]
        deps = deps[None]
        derived = DerivedParams(*(np.atleast_1d(v) for v in (derived.ell, derived.alpha, derived.k_c)))
    moduli = params.moduli
    n = deps.shape[0]
    alpha = np.broadcast_to(np.asarray(derived.alpha, dtype=float), (n,))
    k_c = np.broadcast_to(np.asarray(derived.k_c, dtype=float), (n,))

    was_open = state.crack_open
    applied = np.array(deps)
    new = state
    still_open = np.zeros(n, dtype=bool)
    if np.any(was_open):
        sub, closed = check_crack_closure(state[was_open], deps[was_open])
        new = state.merged(was_open, sub)
        idx = np.flatnonzero(was_open)
        still_open[idx[~closed]] = True
        if options.strict_closure and np.any(closed):
            ci = idx[closed]
            eps_d_old = state.discontinuity_strain[ci]
            normal_part = _project(eps_d_old, state.normal[ci], STRAIN)[:, None] * normal_dyad(state.normal[ci])
            applied[ci] = deps[ci] + normal_part
            # the rest of the jump (sliding, lateral) stays as permanent strain
            ep = new.plastic_strain.copy()
            ep[ci] += eps_d_old - normal_part
            new = replace(new, plastic_strain=ep)

    stressed = ~still_open
    trial_yield = np.full(n, -np.inf)
    plastic = np.zeros(n, dtype=bool)
    if np.any(stressed):
        si = np.flatnonzero(stressed)
        trial = new.stress[si] + moduli.stress(applied[si])
        spec = spectral_decompose(trial)
        f = spec.values[:, 0] - params.sigma_y
        trial_yield[si] = f
        yielding = f > options.yield_tol * params.sigma_y
        plastic[si[yielding]] = True

        sig = new.stress.copy()
        sig[si] = trial
        new = replace(new, stress=sig)
        if np.any(yielding):
            pi = si[yielding]
            ret = _return_map(trial[yielding], moduli, params.sigma_y, params.beta,
                              lam_max=spec.values[yielding, 0])
            opened_state, _ = check_crack_opening(
                new[pi],
                applied[pi],
                ret.plastic_increment,
                ret.stress,
                moduli,
                k_c[pi],
                spec.vectors[yielding, :, 0],
                params.sigma_y,
                options.discontinuity,
                options.onset_split,
            )
            new = new.merged(pi, opened_state)

    d = damage_update(new.k, alpha)
    new = replace(new, d=d)
    sigma = total_stress(new.stress, d)

    if single:
        new = new[0]
        sigma = sigma[0]
        applied = applied[0]
        plastic = plastic[0]
        trial_yield = trial_yield[0]
    return StepResult(sigma, new, applied, plastic, trial_yield)


# ---------------------------------------------------------------------------
# Plane stress
# ---------------------------------------------------------------------------

IN_PLANE = (0, 1, 3)


def _plane_stress(state, deps_2d, params, derived, options, tol=None):
    """Nested plane-stress loop; returns ``(result, converged, residual)``.

    Only unconverged points are re-integrated. The out-of-plane strain
    increment starts from the elastic plane-stress value and is corrected
    with ``deps_33 -= sigma_33 / D_33`` until ``|sigma_33| <= tol * sigma_y``;
    from the second correction on, a secant slope replaces ``D_33`` when it
    lies in ``(1e-9 D_33, 2 D_33)``. ``tol`` (default
    ``options.plane_stress_tol``) may be tightened for tangent probes; points
    with an open crack keep the regular tolerance because their stress is
    (nearly) frozen at the last converged value, and one whose stress does
    not move at all stops iterating.
    """
    moduli = params.moduli
    d33 = moduli.D[2, 2]
    regular = options.plane_stress_tol * params.sigma_y
    tight = (options.plane_stress_tol if tol is None else tol) * params.sigma_y
    n = deps_2d.shape[0]
    deps = np.zeros((n, 6))
    deps[:, IN_PLANE] = deps_2d
    deps[:, 2] = -(state.stress[:, 2] + moduli.lame * (deps_2d[:, 0] + deps_2d[:, 1])) / d33

    res = integrate_point(state, deps, params, derived, options)
    stress, new, applied = res.stress.copy(), res.state.copy(), res.strain_increment.copy()
    plastic, trial_yield = res.plastic.copy(), res.trial_yield.copy()
    r = new.stress[:, 2].copy()
    x_prev = np.full(n, np.nan)
    r_prev = np.full(n, np.nan)

    def bound(open_):
        return np.where(open_, max(regular, tight), tight)

    todo = np.flatnonzero(np.abs(r) > bound(new.crack_open))
    it = 0
    while todo.size and it < options.plane_stress_max_iter:
        it += 1
        x, rt = deps[todo, 2], r[todo]
        # secant slope where it is sane, otherwise the elastic modulus
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = (rt - r_prev[todo]) / (x - x_prev[todo])
        slope = np.where(np.isfinite(slope) & (slope > 1e-9 * d33) & (slope < 2.0 * d33), slope, d33)
        x_prev[todo], r_prev[todo] = x, rt
        deps[todo, 2] = x - rt / slope
        sub = integrate_point(state[todo], deps[todo], params, derived[todo], options)
        stress[todo] = sub.stress
        applied[todo] = sub.strain_increment
        plastic[todo] = sub.plastic
        trial_yield[todo] = sub.trial_yield
        new = new.merged(todo, sub.state)
        r[todo] = sub.state.stress[:, 2]
        open_ = sub.state.crack_open
        frozen = open_ & (sub.state.stress[:, 2] == rt)
        todo = todo[(np.abs(r[todo]) > bound(open_)) & ~frozen]
    converged = np.ones(n, dtype=bool)
    converged[todo] = False
    result = StepResult(stress, new, applied, plastic, trial_yield, iterations=it)
    return result, converged, np.abs(new.stress[:, 2])


def _as_batch(state, deps, derived):
    deps = np.asarray(deps, dtype=float)
    single = deps.ndim == 1
    if single:
        state = state[None]
        deps = deps[None]
    n = deps.shape[0]
    derived = DerivedParams(
        *(np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
          for v in (derived.ell, derived.alpha, derived.k_c))
    )
    return state, deps, derived, single


def _unbatch(res: StepResult) -> StepResult:
    return StepResult(
        res.stress[0], res.state[0], res.strain_increment[0], res.plastic[0],
        res.trial_yield[0], None if res.tangent is None else res.tangent[0], res.iterations,
    )


def integrate_point_plane_stress(
    state: PointState,
    deps_in_plane,
    params: MaterialParams,
    derived: DerivedParams,
    options: RoutineOptions = DEFAULT_OPTIONS,
) -> StepResult:
    """Plane-stress version of :func:`integrate_point`.

    ``deps_in_plane`` holds ``(eps_11, eps_22, gamma_12)``. The returned
    ``strain_increment`` carries the converged out-of-plane component.

    Raises :class:`PlaneStressConvergenceError` when any point fails to
    reach ``|sigma_33| <= plane_stress_tol * sigma_y``.
    """
    state, deps, derived, single = _as_batch(state, deps_in_plane, derived)
    if not np.all(np.isfinite(deps)):
        raise ValueError("strain increment has non-finite components")
    res, ok, resid = _plane_stress(state, deps, params, derived, options)
    if not np.all(ok):
        raise PlaneStressConvergenceError(float(np.max(resid[~ok])), options.plane_stress_max_iter)
    return _unbatch(res) if single else res


# ---------------------------------------------------------------------------
# Tangent
# ---------------------------------------------------------------------------


def probe_size(deps) -> np.ndarray:
    return np.maximum(1e-8, 1e-6 * np.linalg.norm(np.asarray(deps), axis=-1))


def numerical_tangent(
    state: PointState,
    deps,
    params: MaterialParams,
    derived: DerivedParams,
    options: RoutineOptions = DEFAULT_OPTIONS,
    h=None,
    plane_stress: bool = False,
    base: StepResult | None = None,
):
    """Central-difference tangent ``d sigma / d deps`` around ``deps``.

    Every probe restarts from the same history, so the state is never
    modified. Returns ``(..., 6, 6)`` or, with ``plane_stress``, the
    condensed ``(..., 3, 3)`` operator on ``(11, 22, gamma_12)``. Points
    whose probes fail fall back to one-sided differences against ``base``;
    if that is impossible a :class:`TangentError` is raised.
    """
    state, deps, derived, single = _as_batch(state, deps, derived)
    n, m = deps.shape
    hh = probe_size(deps) if h is None else np.broadcast_to(np.asarray(h, dtype=float), (n,))

    # probe layout: [+e_0, ..., +e_{m-1}, -e_0, ..., -e_{m-1}], each block n points
    signs = np.concatenate([np.ones(m), -np.ones(m)])
    comps = np.concatenate([np.arange(m), np.arange(m)])
    probes = np.tile(deps, (2 * m, 1))
    probes[np.arange(2 * m * n), np.repeat(comps, n)] += np.repeat(signs, n) * np.tile(hh, 2 * m)
    big_state = state.tile(2 * m)
    big_derived = derived.tile(2 * m)

    if plane_stress:
        tight = min(options.plane_stress_tol, options.probe_plane_stress_tol)
        res, ok, _ = _plane_stress(big_state, probes, params, big_derived, options, tol=tight)
        sig = res.stress[:, IN_PLANE]
    else:
        res = integrate_point(big_state, probes, params, big_derived, options)
        sig = res.stress
        ok = np.ones(2 * m * n, dtype=bool)
    sig = sig.reshape(2, m, n, -1)
    ok = ok.reshape(2, m, n)

    tangent = (sig[0] - sig[1]) / (2.0 * hh[None, :, None])  # (m, n, m_out)
    tangent = np.transpose(tangent, (1, 2, 0))
    if not np.all(ok):
        if base is None:
            if plane_stress:
                base, bok, _ = _plane_stress(state, deps, params, derived, options)
                base_stress = base.stress[:, IN_PLANE]
            else:
                base = integrate_point(state, deps, params, derived, options)
                base_stress, bok = base.stress, np.ones(n, dtype=bool)
        else:
            base_stress = base.stress[..., IN_PLANE] if plane_stress else base.stress
            bok = np.ones(n, dtype=bool)
        base_stress = np.atleast_2d(base_stress)
        for j in range(m):
            plus_only = ok[0, j] & ~ok[1, j] & bok
            minus_only = ~ok[0, j] & ok[1, j] & bok
            tangent[plus_only, :, j] = (sig[0, j, plus_only] - base_stress[plus_only]) / hh[plus_only, None]
            tangent[minus_only, :, j] = (base_stress[minus_only] - sig[1, j, minus_only]) / hh[minus_only, None]
            dead = ~ok[0, j] & ~ok[1, j] | ((~ok[0, j] | ~ok[1, j]) & ~bok)
            if np.any(dead):
                raise TangentError(f"tangent probes failed at points {np.flatnonzero(dead)[:10].tolist()}")
    return tangent[0] if single else tangent
