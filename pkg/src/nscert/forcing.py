"""Time-dependent forcing representations.

Every forcing answers ``at(t, m)`` with a coefficient cube of half-width m
(projected or zero-padded) and can integrate its squared H^s norm in time.
"""

from __future__ import annotations

import bisect
import math

import numpy as np
from scipy import integrate

from .errors import ConfigError
from .spectral import SpectralField, _weight, resize_coeffs


class Forcing:
    is_zero = False

    def at(self, t: float, m: int) -> np.ndarray:
        raise NotImplementedError

    def field(self, t: float, m: int, box) -> SpectralField:
        return SpectralField(box, self.at(t, m))

    def hs_norm_sq(self, t: float, s: float, m: int) -> float:
        c = self.at(t, m)
        return float(np.sum(_weight(m, 2.0 * s) * (np.abs(c) ** 2).sum(axis=0)))

    def breakpoints(self, T: float) -> list[float]:
        return []

    def integrate_hs_norm_sq(self, s: float, T: float, m: int | None = None) -> float:
        """int_0^T |f(t)|^2_{s,L} dt by adaptive quadrature."""
        if T <= 0 or self.is_zero:
            return 0.0
        m = self.max_m() if m is None else m
        val, _ = integrate.quad(lambda t: self.hs_norm_sq(t, s, m), 0.0, T,
                                points=[p for p in self.breakpoints(T) if 0 < p < T] or None,
                                limit=200, epsabs=0.0, epsrel=1e-12)
        return float(val)

    def max_m(self) -> int:
        return 1

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


class ZeroForcing(Forcing):
    is_zero = True

    def at(self, t, m):
        n = 2 * m + 1
        return np.zeros((3, n, n, n), complex)

    def describe(self):
        return {"kind": "zero"}


class ConstantForcing(Forcing):
    def __init__(self, f: SpectralField):
        f._require_vector()
        self.f = f

    def at(self, t, m):
        return resize_coeffs(self.f.coeffs, m)

    def integrate_hs_norm_sq(self, s, T, m=None):
        m = self.f.m if m is None else m
        return T * self.hs_norm_sq(0.0, s, m) if T > 0 else 0.0

    def max_m(self):
        return self.f.m

    def describe(self):
        return {"kind": "constant", "m": self.f.m}


class ModalForcing(Forcing):
    """f(t) = sum_j p_j(t) F_j with polynomial amplitudes p_j (coefficients low->high)."""

    def __init__(self, terms):
        self.terms = [(F, np.asarray(poly, float)) for F, poly in terms]
        for F, _ in self.terms:
            F._require_vector()

    def at(self, t, m):
        out = 0.0
        for F, poly in self.terms:
            out = out + np.polynomial.polynomial.polyval(t, poly) * resize_coeffs(F.coeffs, m)
        if np.isscalar(out):
            n = 2 * m + 1
            return np.zeros((3, n, n, n), complex)
        return out

    def max_m(self):
        return max((F.m for F, _ in self.terms), default=1)

    def describe(self):
        return {"kind": "modal", "polys": [p.tolist() for _, p in self.terms]}


class SnapshotForcing(Forcing):
    """Piecewise linear interpolation between snapshots, constant outside."""

    def __init__(self, times, fields):
        if len(times) != len(fields) or not times:
            raise ConfigError("snapshot forcing needs matching, nonempty times and fields")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("snapshot times must be strictly increasing")
        self.times = [float(t) for t in times]
        self.fields = list(fields)

    def at(self, t, m):
        ts = self.times
        if t <= ts[0]:
            return resize_coeffs(self.fields[0].coeffs, m)
        if t >= ts[-1]:
            return resize_coeffs(self.fields[-1].coeffs, m)
        j = bisect.bisect_right(ts, t) - 1
        s = (t - ts[j]) / (ts[j + 1] - ts[j])
        return ((1 - s) * resize_coeffs(self.fields[j].coeffs, m)
                + s * resize_coeffs(self.fields[j + 1].coeffs, m))

    def breakpoints(self, T):
        return [t for t in self.times if t < T]

    def max_m(self):
        return max(f.m for f in self.fields)

    def describe(self):
        return {"kind": "snapshots", "times": self.times}


class DifferenceForcing(Forcing):
    """h = f - g."""

    def __init__(self, f: Forcing, g: Forcing):
        self.f, self.g = f, g
        self.is_zero = (f.is_zero and g.is_zero) or f is g

    def at(self, t, m):
        return self.f.at(t, m) - self.g.at(t, m)

    def breakpoints(self, T):
        return sorted(set(self.f.breakpoints(T)) | set(self.g.breakpoints(T)))

    def max_m(self):
        return max(self.f.max_m(), self.g.max_m())

    def describe(self):
        return {"kind": "difference", "f": self.f.describe(), "g": self.g.describe()}


def as_forcing(f) -> Forcing:
    if f is None:
        return ZeroForcing()
    if isinstance(f, Forcing):
        return f
    if isinstance(f, SpectralField):
        return ConstantForcing(f)
    raise ConfigError(f"cannot interpret {type(f).__name__} as a forcing")


def isclose_times(a, b) -> bool:
    return len(a) == len(b) and all(math.isclose(x, y, rel_tol=1e-12, abs_tol=1e-12) for x, y in zip(a, b))
