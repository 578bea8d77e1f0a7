"""Fourier representation of zero-mean periodic fields on the cube Q_L = [0, L]^3.

A field is stored as a dense cube of Fourier coefficients ``coeffs[c, i, j, l]``
for the wave vector ``k = (i - m, j - m, l - m)``, so ``|k_i| <= m``.  The
convention for the physical field is

    u(x) = sum_k u_k exp(2 pi i k.x / L),

which makes every homogeneous Sobolev norm a weighted coefficient sum that
does not depend on L.  The k = 0 entry is always zero and the cube is kept
Hermitian (u_{-k} = conj(u_k)) so the physical field is real.

Components: 1 for scalars, 3 for vector fields, 9 for matrix fields laid out
row-major, i.e. component ``3 * i + j`` of ``gradient(u)`` is d_j u^i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BoxSpec:
    """Periodic box side ``L``, viscosity ``nu`` and regularity index ``alpha``."""

    L: float = TWO_PI
    nu: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ConfigError(f"box side L must be positive, got {self.L}")
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise ConfigError(f"viscosity nu must be positive, got {self.nu}")
        check_alpha(self.alpha)

    @property
    def scale(self) -> float:
        """The factor 4 pi^2 / L^2 (first Stokes eigenvalue)."""
        return (TWO_PI / self.L) ** 2

    def with_L(self, L: float) -> "BoxSpec":
        return BoxSpec(L=L, nu=self.nu, alpha=self.alpha)


def check_alpha(alpha: float) -> float:
    if not (0.5 <= alpha <= 1.0):
        raise ConfigError(f"alpha must lie in [1/2, 1], got {alpha}")
    return float(alpha)


@lru_cache(maxsize=64)
def wavevectors(m: int) -> np.ndarray:
    """Integer wave vectors on the cube, shape (3, 2m+1, 2m+1, 2m+1)."""
    r = np.arange(-m, m + 1)
    k = np.array(np.meshgrid(r, r, r, indexing="ij"))
    k.flags.writeable = False
    return k


@lru_cache(maxsize=64)
def wavenumber_sq(m: int) -> np.ndarray:
    ksq = (wavevectors(m) ** 2).sum(axis=0).astype(float)
    ksq.flags.writeable = False
    return ksq


def _weight(m: int, power: float) -> np.ndarray:
    """|k|^power with the mean mode mapped to 0."""
    ksq = wavenumber_sq(m)
    w = np.zeros_like(ksq)
    nz = ksq > 0
    w[nz] = ksq[nz] ** (0.5 * power)
    return w


def _flip(c: np.ndarray) -> np.ndarray:
    """Coefficient array evaluated at -k."""
    return c[..., ::-1, ::-1, ::-1]


def hermitian_part(c: np.ndarray) -> np.ndarray:
    """Project a coefficient cube onto real, zero-mean fields."""
    out = 0.5 * (c + np.conj(_flip(c)))
    m = (c.shape[-1] - 1) // 2
    out[..., m, m, m] = 0.0
    return out


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable truncated Fourier series of a real zero-mean periodic field."""

    box: BoxSpec
    coeffs: np.ndarray
    divfree: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 4 or not (c.shape[1] == c.shape[2] == c.shape[3]) or c.shape[1] % 2 == 0:
            raise ConfigError(f"coefficient array must have shape (C, n, n, n) with odd n, got {c.shape}")
        if c.flags.writeable:
            c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    # construction helpers -------------------------------------------------

    @classmethod
    def from_coeffs(cls, box: BoxSpec, coeffs, divfree: bool = False) -> "SpectralField":
        """Build a field, enforcing the reality and zero-mean invariants."""
        return cls(box, hermitian_part(np.asarray(coeffs, dtype=complex)), divfree)

    @classmethod
    def zeros(cls, box: BoxSpec, m: int, ncomp: int = 3) -> "SpectralField":
        n = 2 * m + 1
        return cls(box, np.zeros((ncomp, n, n, n), complex), divfree=(ncomp == 3))

    @classmethod
    def from_modes(cls, box: BoxSpec, m: int, modes: dict, ncomp: int = 3,
                   divfree: bool = False) -> "SpectralField":
        """Field with ``u_k = modes[k]`` and ``u_{-k} = conj(modes[k])``.

        Listing both k and -k is allowed as long as the values are conjugate.
        """
        n = 2 * m + 1
        c = np.zeros((ncomp, n, n, n), complex)
        for k, v in modes.items():
            k = tuple(int(x) for x in k)
            if k == (0, 0, 0):
                raise ConfigError("the mean mode k = 0 cannot carry a coefficient")
            if max(abs(x) for x in k) > m:
                raise ConfigError(f"mode {k} lies outside the truncation m={m}")
            v = np.broadcast_to(np.asarray(v, complex), (ncomp,))
            idx = tuple(x + m for x in k)
            nidx = tuple(-x + m for x in k)
            c[(slice(None),) + idx] = v
            c[(slice(None),) + nidx] = np.conj(v)
        return cls(box, c, divfree)

    # basic properties -----------------------------------------------------

    @property
    def m(self) -> int:
        return (self.coeffs.shape[-1] - 1) // 2

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    @property
    def L(self) -> float:
        return self.box.L

    def is_real(self, rtol: float = 1e-12) -> bool:
        c = self.coeffs
        scale = max(np.abs(c).max(initial=0.0), 1e-300)
        m = self.m
        return bool(np.abs(c - np.conj(_flip(c))).max(initial=0.0) <= rtol * scale
                    and np.all(c[:, m, m, m] == 0))

    def max_divergence(self) -> float:
        """max_k |k . u_k| (vector fields only)."""
        self._require_vector()
        return float(np.abs(np.einsum("iabc,iabc->abc", wavevectors(self.m), self.coeffs)).max())

    def _require_vector(self):
        if self.ncomp != 3:
            raise ConfigError(f"operation needs a vector field, got {self.ncomp} components")

    def replace(self, coeffs=None, box=None, divfree=None) -> "SpectralField":
        return SpectralField(self.box if box is None else box,
                             self.coeffs if coeffs is None else coeffs,
                             self.divfree if divfree is None else divfree)

    def resize(self, m: int) -> "SpectralField":
        """Zero-pad to, or project onto, the cube of half-width ``m``."""
        if m < 1:
            raise ConfigError(f"truncation must be >= 1, got {m}")
        return SpectralField(self.box, resize_coeffs(self.coeffs, m), self.divfree)

    # arithmetic -----------------------------------------------------------

    def _binary(self, other, op):
        if not isinstance(other, SpectralField):
            return NotImplemented
        check_same_box(self, other)
        a, b = common_coeffs(self, other)
        return SpectralField(self.box, op(a, b), self.divfree and other.divfree)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        scalar = float(scalar)
        return SpectralField(self.box, self.coeffs * scalar, self.divfree)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return (f"SpectralField(L={self.box.L:g}, m={self.m}, ncomp={self.ncomp}, "
                f"divfree={self.divfree})")


def resize_coeffs(c: np.ndarray, m: int) -> np.ndarray:
    m_old = (c.shape[-1] - 1) // 2
    if m == m_old:
        return c
    n = 2 * m + 1
    if m < m_old:
        s = slice(m_old - m, m_old + m + 1)
        return c[:, s, s, s].copy()
    out = np.zeros(c.shape[:1] + (n, n, n), complex)
    s = slice(m - m_old, m + m_old + 1)
    out[:, s, s, s] = c
    return out


def check_same_box(a: SpectralField, b: SpectralField):
    if not math.isclose(a.box.L, b.box.L, rel_tol=1e-14, abs_tol=0.0):
        raise ConfigError(f"box mismatch: L={a.box.L} vs L={b.box.L}")


def common_coeffs(a: SpectralField, b: SpectralField):
    m = max(a.m, b.m)
    return resize_coeffs(a.coeffs, m), resize_coeffs(b.coeffs, m)


# ---------------------------------------------------------------------------
# norms and inner products
# ---------------------------------------------------------------------------

def hs_norm_sq(field: SpectralField, s: float) -> float:
    w = _weight(field.m, 2.0 * s)
    return float(np.sum(w * (np.abs(field.coeffs) ** 2).sum(axis=0)))


def hs_norm(field: SpectralField, s: float) -> float:
    """Homogeneous Sobolev norm (sum_{k != 0} |k|^{2s} |u_k|^2)^{1/2}."""
    return math.sqrt(hs_norm_sq(field, s))


def duality_inner(a: SpectralField, b: SpectralField, alpha: float, beta: float) -> float:
    """sum_k (|k|^alpha a_k) . conj(|k|^beta b_k); real for real fields."""
    check_same_box(a, b)
    if a.ncomp != b.ncomp:
        raise ConfigError("component count mismatch")
    ca, cb = common_coeffs(a, b)
    m = (ca.shape[-1] - 1) // 2
    w = _weight(m, alpha) * _weight(m, beta)
    return float(np.real(np.sum(w * (ca * np.conj(cb)).sum(axis=0))))


def hs_inner(a: SpectralField, b: SpectralField, s: float) -> float:
    return duality_inner(a, b, 2.0 * s, 0.0)


# ---------------------------------------------------------------------------
# linear operators
# ---------------------------------------------------------------------------

def stokes_eigenvalues(box: BoxSpec, m: int) -> np.ndarray:
    """lambda_k = 4 pi^2 |k|^2 / L^2 on the cube."""
    return box.scale * wavenumber_sq(m)


def stokes_power(field: SpectralField, a: float) -> SpectralField:
    """Fractional Stokes power A^a, i.e. multiplication by lambda_k^a."""
    w = field.box.scale ** a * _weight(field.m, 2.0 * a)
    return field.replace(coeffs=field.coeffs * w)


def leray_project(field: SpectralField) -> SpectralField:
    field._require_vector()
    k = wavevectors(field.m)
    ksq = wavenumber_sq(field.m).copy()
    ksq[ksq == 0] = 1.0
    kdotu = np.einsum("iabc,iabc->abc", k, field.coeffs)
    out = field.coeffs - k * (kdotu / ksq)
    return SpectralField(field.box, out, divfree=True)


def _deriv_symbol(box: BoxSpec, m: int) -> np.ndarray:
    """i 2 pi k / L, shape (3, n, n, n)."""
    return 1j * (TWO_PI / box.L) * wavevectors(m)


def gradient(field: SpectralField) -> SpectralField:
    """Matrix field with component 3*i + j equal to d_j u^i."""
    d = _deriv_symbol(field.box, field.m)
    g = field.coeffs[:, None] * d[None, :]
    n = g.shape[-1]
    return SpectralField(field.box, g.reshape((-1, n, n, n)), divfree=False)


def divergence(field: SpectralField) -> SpectralField:
    """Scalar field sum_j d_j u^j (row divergence for 9-component fields)."""
    d = _deriv_symbol(field.box, field.m)
    n = field.coeffs.shape[-1]
    if field.ncomp == 3:
        out = (d * field.coeffs).sum(axis=0)[None]
    elif field.ncomp == 9:
        out = np.einsum("jabc,ijabc->iabc", d, field.coeffs.reshape(3, 3, n, n, n))
    else:
        raise ConfigError(f"divergence needs 3 or 9 components, got {field.ncomp}")
    return SpectralField(field.box, out, divfree=False)


def _cutoff_mask(m: int, k0: int) -> np.ndarray:
    return np.abs(wavevectors(m)).max(axis=0) <= k0


def low_pass(field: SpectralField, k0: int) -> SpectralField:
    """Keep modes with max_i |k_i| <= k0 (componentwise cutoff)."""
    if k0 < 1:
        raise ConfigError(f"cutoff k0 must be >= 1, got {k0}")
    return field.replace(coeffs=field.coeffs * _cutoff_mask(field.m, k0))


def high_pass(field: SpectralField, k0: int) -> SpectralField:
    if k0 < 1:
        raise ConfigError(f"cutoff k0 must be >= 1, got {k0}")
    return field.replace(coeffs=field.coeffs * ~_cutoff_mask(field.m, k0))


def dilate(field: SpectralField, delta: float) -> SpectralField:
    """u_delta(x) = u(delta x) lives on Q_{delta L} with identical coefficients."""
    if not delta > 0:
        raise ConfigError(f"dilation factor must be positive, got {delta}")
    return field.replace(box=field.box.with_L(field.box.L * delta))


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def fft_size(n_min: int) -> int:
    return sfft.next_fast_len(int(n_min), real=True)


def _grid_index(m: int, N: int) -> np.ndarray:
    return np.arange(-m, m + 1) % N


def to_physical(coeffs: np.ndarray, N: int) -> np.ndarray:
    """Point values on the uniform N^3 grid, shape (C, N, N, N)."""
    m = (coeffs.shape[-1] - 1) // 2
    if N < 2 * m + 1:
        raise ConfigError(f"grid size {N} too small for truncation {m}")
    idx = _grid_index(m, N)
    half = np.zeros(coeffs.shape[:1] + (N, N, N // 2 + 1), complex)
    half[:, idx[:, None, None], idx[None, :, None], np.arange(m + 1)[None, None, :]] = coeffs[..., m:]
    return sfft.irfftn(half, s=(N, N, N), axes=(1, 2, 3), norm="forward")


def from_physical(values: np.ndarray, m: int) -> np.ndarray:
    """Coefficients on the cube of half-width m from grid values (C, N, N, N)."""
    N = values.shape[-1]
    if N < 2 * m + 1:
        raise ConfigError(f"grid size {N} too small for truncation {m}")
    r = sfft.rfftn(values, axes=(1, 2, 3), norm="forward")
    idx = _grid_index(m, N)
    n = 2 * m + 1
    out = np.empty(values.shape[:1] + (n, n, n), complex)
    out[..., m:] = r[:, idx[:, None, None], idx[None, :, None], np.arange(m + 1)[None, None, :]]
    out[..., :m] = np.conj(_flip(out[..., m + 1:]))
    return hermitian_part(out)


def physical_values(field: SpectralField, N: int | None = None) -> np.ndarray:
    if N is None:
        N = 2 * field.m + 2
    return to_physical(field.coeffs, N)


def lp_norm(field: SpectralField, p: float, oversample: int = 3) -> float:
    """L^p(Q_L) norm by grid quadrature; pointwise magnitude is Euclidean/Frobenius.

    Uses N = oversample * (2m + 1) points per direction and weight (L/N)^3.
    Exact (to rounding) for p = 2; for other p the accuracy depends on the
    smoothness of |u|^p.
    """
    if not p >= 1:
        raise ConfigError(f"L^p exponent must be >= 1, got {p}")
    if oversample < 1:
        raise ConfigError(f"oversample must be >= 1, got {oversample}")
    N = oversample * (2 * field.m + 1)
    sq = np.zeros((N, N, N))
    # one component at a time keeps the peak memory at a few grids
    for c in range(field.ncomp):
        sq += to_physical(field.coeffs[c:c + 1], N)[0] ** 2
    total = np.sum(sq ** (0.5 * p)) * (field.box.L / N) ** 3
    return float(total ** (1.0 / p))


# ---------------------------------------------------------------------------
# quadratic terms
# ---------------------------------------------------------------------------

def product_grid_size(ma: int, mb: int, m_out: int) -> int:
    """Smallest fast transform size giving alias-free product modes up to m_out."""
    return fft_size(max(ma + mb + m_out + 1, 2 * max(ma, mb, m_out) + 1))


def nonlinear_term(a: SpectralField, b: SpectralField, out_truncation: int) -> SpectralField:
    """Exact coefficients of (a . grad) b on modes |k_i| <= out_truncation."""
    check_same_box(a, b)
    a._require_vector()
    b._require_vector()
    if out_truncation < 1:
        raise ConfigError(f"out_truncation must be >= 1, got {out_truncation}")
    N = product_grid_size(a.m, b.m, out_truncation)
    av = to_physical(a.coeffs, N)
    gb = to_physical(gradient(b).coeffs, N).reshape(3, 3, N, N, N)
    prod = np.einsum("jxyz,ijxyz->ixyz", av, gb)
    return SpectralField(a.box, from_physical(prod, out_truncation), divfree=False)


def tensor_product(u: SpectralField, out_truncation: int | None = None) -> SpectralField:
    """The 9-component field u (x) u, alias-free, default truncation 2m.

    The mean block of u (x) u is discarded (zero-mean convention).
    """
    u._require_vector()
    m_out = 2 * u.m if out_truncation is None else out_truncation
    N = product_grid_size(u.m, u.m, m_out)
    v = to_physical(u.coeffs, N)
    prod = (v[:, None] * v[None, :]).reshape(9, N, N, N)
    return SpectralField(u.box, from_physical(prod, m_out), divfree=False)


def tensor_product_norm(u: SpectralField, s: float) -> float:
    """Homogeneous H^s norm of u (x) u over k != 0."""
    return hs_norm(tensor_product(u), s)
