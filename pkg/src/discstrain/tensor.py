"""Symmetric second-order tensor algebra in Voigt storage.

Tensors are plain ``numpy`` arrays whose last axis holds the six independent
components in the order ``(11, 22, 33, 12, 13, 23)``. Any number of leading
batch axes is allowed, so every routine here works on a single tensor or on
all integration points of a mesh at once.

Stresses store plain shear components. Strains store engineering shear
(``gamma_12 = 2 eps_12``). Functions that need the matrix form take a
``kind`` argument (``"stress"`` or ``"strain"``) selecting the convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

STRESS = "stress"
STRAIN = "strain"

# Voigt slot -> (row, col)
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
IDENTITY = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])

_ZERO_NORM = 1e-14
_GAP_FALLBACK = 1e-5


class InvalidTensorError(ValueError):
    """Raised for non-finite tensors or malformed directions."""


def _shear_factor(kind: str) -> float:
    if kind == STRESS:
        return 1.0
    if kind == STRAIN:
        return 0.5
    raise ValueError(f"unknown tensor kind {kind!r}")


def to_matrix(t, kind: str = STRESS) -> np.ndarray:
    """Voigt vector(s) ``(..., 6)`` to symmetric matrices ``(..., 3, 3)``."""
    t = np.asarray(t, dtype=float)
    c = _shear_factor(kind)
    m = np.empty(t.shape[:-1] + (3, 3))
    m[..., 0, 0] = t[..., 0]
    m[..., 1, 1] = t[..., 1]
    m[..., 2, 2] = t[..., 2]
    m[..., 0, 1] = m[..., 1, 0] = c * t[..., 3]
    m[..., 0, 2] = m[..., 2, 0] = c * t[..., 4]
    m[..., 1, 2] = m[..., 2, 1] = c * t[..., 5]
    return m


def from_matrix(m, kind: str = STRESS) -> np.ndarray:
    """Symmetric matrices ``(..., 3, 3)`` to Voigt vectors ``(..., 6)``.

    The off-diagonal entries are symmetrised before packing.
    """
    m = np.asarray(m, dtype=float)
    c = 1.0 / _shear_factor(kind)
    t = np.empty(m.shape[:-2] + (6,))
    t[..., 0] = m[..., 0, 0]
    t[..., 1] = m[..., 1, 1]
    t[..., 2] = m[..., 2, 2]
    t[..., 3] = 0.5 * c * (m[..., 0, 1] + m[..., 1, 0])
    t[..., 4] = 0.5 * c * (m[..., 0, 2] + m[..., 2, 0])
    t[..., 5] = 0.5 * c * (m[..., 1, 2] + m[..., 2, 1])
    return t


def double_contraction(a, b, kind: str = STRESS) -> np.ndarray:
    """``a : b`` for two tensors of the same kind."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = 2.0 * _shear_factor(kind) ** 2
    return np.sum(a[..., :3] * b[..., :3], axis=-1) + c * np.sum(a[..., 3:] * b[..., 3:], axis=-1)


def frobenius(t, kind: str = STRESS) -> np.ndarray:
    return np.sqrt(double_contraction(t, t, kind))


def trace(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return t[..., 0] + t[..., 1] + t[..., 2]


# ---------------------------------------------------------------------------
# Spectral decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spectral:
    """Eigenpairs of a symmetric tensor.

    ``values[..., i]`` is the i-th eigenvalue (descending) and
    ``vectors[..., :, i]`` its unit eigenvector.
    """

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        """Matrix form ``sum_i lambda_i n_i (x) n_i``."""
        return np.einsum("...ik,...k,...jk->...ij", self.vectors, self.values, self.vectors)

    @property
    def max_direction(self) -> np.ndarray:
        return self.vectors[..., :, 0]


def _closed_form_values(m: np.ndarray) -> np.ndarray:
    """Trigonometric eigenvalue solution, descending order."""
    q = (m[..., 0, 0] + m[..., 1, 1] + m[..., 2, 2]) / 3.0
    off = m[..., 0, 1] ** 2 + m[..., 0, 2] ** 2 + m[..., 1, 2] ** 2
    p2 = (m[..., 0, 0] - q) ** 2 + (m[..., 1, 1] - q) ** 2 + (m[..., 2, 2] - q) ** 2 + 2.0 * off
    p = np.sqrt(p2 / 6.0)
    safe_p = np.where(p > 0.0, p, 1.0)
    b = (m - q[..., None, None] * np.eye(3)) / safe_p[..., None, None]
    r = np.clip(np.linalg.det(b) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam1 = q + 2.0 * p * np.cos(phi)
    lam3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    lam2 = 3.0 * q - lam1 - lam3
    return np.stack([lam1, lam2, lam3], axis=-1)


def _cross_product_vector(m: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Null vector of ``m - lam I`` from the largest pairwise row cross product."""
    a = m - lam[..., None, None] * np.eye(3)
    r0, r1, r2 = a[..., 0, :], a[..., 1, :], a[..., 2, :]
    cands = np.stack([np.cross(r0, r1), np.cross(r0, r2), np.cross(r1, r2)], axis=-2)
    norms = np.linalg.norm(cands, axis=-1)
    best = np.argmax(norms, axis=-1)
    v = np.take_along_axis(cands, best[..., None, None], axis=-2)[..., 0, :]
    return v / np.take_along_axis(norms, best[..., None], axis=-1)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each eigenvector so its largest-magnitude component is positive."""
    idx = np.argmax(np.abs(vectors), axis=-2)
    lead = np.take_along_axis(vectors, idx[..., None, :], axis=-2)
    return vectors * np.where(lead < 0.0, -1.0, 1.0)


def spectral_decompose(t, kind: str = STRESS) -> Spectral:
    """Eigenvalues (descending) and orthonormal eigenvectors of ``t``.

    Well-separated spectra use the closed-form trigonometric solution with
    cross-product eigenvectors. When the relative gap between eigenvalues is
    small, those tensors are re-solved with LAPACK ``eigh`` because
    cross-product vectors lose orthogonality there. Tensors with norm below
    1e-14 get zero eigenvalues and the coordinate axes.
    """
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise InvalidTensorError("tensor has non-finite components")
    m = to_matrix(t, kind)
    batch = m.shape[:-2]
    m = m.reshape(-1, 3, 3)
    n = m.shape[0]

    scale = np.linalg.norm(m, axis=(-2, -1))
    tiny = scale < _ZERO_NORM
    values = np.zeros((n, 3))
    vectors = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()

    live = ~tiny
    if np.any(live):
        ml = m[live]
        sl = scale[live]
        lam = _closed_form_values(ml)
        gap = np.minimum(lam[:, 0] - lam[:, 1], lam[:, 1] - lam[:, 2]) / sl
        well = gap > _GAP_FALLBACK

        vals_l = lam.copy()
        vecs_l = np.empty((ml.shape[0], 3, 3))
        if np.any(well):
            mw = ml[well]
            v1 = _cross_product_vector(mw, lam[well, 0])
            v3 = _cross_product_vector(mw, lam[well, 2])
            v3 -= np.sum(v3 * v1, axis=-1)[:, None] * v1
            v3 /= np.linalg.norm(v3, axis=-1)[:, None]
            v2 = np.cross(v3, v1)
            vecs_l[well] = np.stack([v1, v2, v3], axis=-1)
        bad = ~well
        if np.any(bad):
            w, v = np.linalg.eigh(ml[bad])
            vals_l[bad] = w[:, ::-1]
            vecs_l[bad] = v[:, :, ::-1]
        values[live] = vals_l
        vectors[live] = vecs_l

    vectors = _fix_signs(vectors)
    return Spectral(values.reshape(batch + (3,)), vectors.reshape(batch + (3, 3)))


def principal_values(t, kind: str = STRESS) -> np.ndarray:
    return spectral_decompose(t, kind).values


def max_principal(t, kind: str = STRESS) -> np.ndarray:
    return spectral_decompose(t, kind).values[..., 0]


# ---------------------------------------------------------------------------
# Tension-compression split
# ---------------------------------------------------------------------------


def heaviside(x):
    """Unit step with ``H(0) = 0``."""
    return np.where(np.asarray(x) > 0.0, 1.0, 0.0)


def macaulay(x):
    """``<x> = max(x, 0)``."""
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def tensile_part(t, kind: str = STRESS, spectral: Spectral | None = None) -> np.ndarray:
    """Positive spectral part ``sum_i H(lambda_i) lambda_i n_i (x) n_i``.

    Only the diagonal spectral projection is applied; the compressive part
    is ``t - tensile_part(t)``.
    """
    sp = spectral if spectral is not None else spectral_decompose(t, kind)
    pos = macaulay(sp.values)
    m = np.einsum("...ik,...k,...jk->...ij", sp.vectors, pos, sp.vectors)
    return from_matrix(m, kind)


def compressive_part(t, kind: str = STRESS, spectral: Spectral | None = None) -> np.ndarray:
    return np.asarray(t, dtype=float) - tensile_part(t, kind, spectral)


# ---------------------------------------------------------------------------
# Invariants and projections
# ---------------------------------------------------------------------------


def vol_dev_split(t, kind: str = STRESS):
    """Return ``(p, s)`` with ``p = tr(t)/3`` and ``s = t - p I``."""
    t = np.asarray(t, dtype=float)
    p = trace(t) / 3.0
    s = t - p[..., None] * IDENTITY
    return p, s


def invariants(t):
    """Stress invariants ``(I1, J2, p, q)`` with ``q = sqrt(3 J2)``."""
    t = np.asarray(t, dtype=float)
    i1 = trace(t)
    p, s = vol_dev_split(t)
    j2 = 0.5 * double_contraction(s, s, STRESS)
    j2 = np.maximum(j2, 0.0)
    return i1, j2, p, np.sqrt(3.0 * j2)


def normal_projection(t, n, kind: str = STRESS) -> np.ndarray:
    """``n^T t n`` for unit direction(s) ``n``."""
    n = np.asarray(n, dtype=float)
    norm = np.linalg.norm(n, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-10):
        raise InvalidTensorError("projection direction must be a unit vector")
    return _project(t, n, kind)


def _project(t, n, kind: str) -> np.ndarray:
    """Unchecked ``n^T t n``; zero rows of ``n`` give zero."""
    t = np.asarray(t, dtype=float)
    c = 2.0 * _shear_factor(kind)
    return (
        t[..., 0] * n[..., 0] ** 2
        + t[..., 1] * n[..., 1] ** 2
        + t[..., 2] * n[..., 2] ** 2
        + c * t[..., 3] * n[..., 0] * n[..., 1]
        + c * t[..., 4] * n[..., 0] * n[..., 2]
        + c * t[..., 5] * n[..., 1] * n[..., 2]
    )


# ---------------------------------------------------------------------------
# Isotropic elasticity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ElasticModuli:
    """Isotropic linear elasticity in the engineering-shear Voigt convention."""

    E: float
    nu: float

    def __post_init__(self):
        if not self.E > 0.0:
            raise ValueError(f"E must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"nu must lie in (-1, 0.5), got {self.nu}")

    @property
    def K(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def G(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lame(self) -> float:
        return self.K - 2.0 * self.G / 3.0

    @cached_property
    def D(self) -> np.ndarray:
        """6x6 operator mapping engineering strain to stress."""
        lam, g = self.lame, self.G
        d = np.zeros((6, 6))
        d[:3, :3] = lam
        d[[0, 1, 2], [0, 1, 2]] = lam + 2.0 * g
        d[[3, 4, 5], [3, 4, 5]] = g
        return d

    @cached_property
    def compliance(self) -> np.ndarray:
        return np.linalg.inv(self.D)

    def stress(self, strain) -> np.ndarray:
        return np.asarray(strain, dtype=float) @ self.D.T

    def strain(self, stress) -> np.ndarray:
        return np.asarray(stress, dtype=float) @ self.compliance.T

    @cached_property
    def D_plane_stress(self) -> np.ndarray:
        """3x3 reduced operator for ``(11, 22, gamma_12)``."""
        e, nu = self.E, self.nu
        c = e / (1.0 - nu**2)
        return c * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]])
