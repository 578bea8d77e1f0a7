"""Galerkin-truncated Navier-Stokes and the low-frequency heat system.

The truncated system on modes |k_i| <= m is

    d/dt u + nu A u + P_m Leray B(u, u) = P_m Leray f,

advanced with a Lawson-type integrating-factor RK4: the viscous part is
integrated exactly per mode, the transformed nonlinear part by classical RK4.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .forcing import DifferenceForcing, Forcing, as_forcing, isclose_times
from .spectral import (
    TWO_PI,
    BoxSpec,
    SpectralField,
    _weight,
    check_same_box,
    from_physical,
    gradient,
    high_pass,
    hs_norm,
    hs_norm_sq,
    lp_norm,
    nonlinear_term,
    product_grid_size,
    resize_coeffs,
    stokes_eigenvalues,
    to_physical,
    wavenumber_sq,
    wavevectors,
)


@dataclass(frozen=True)
class SolverConfig:
    m: int
    k0: int = 1
    dt: float = 0.01
    t_end: float = 1.0
    adapt: float = 0.0
    oversample: int = 3
    sample_every: float | None = None
    blowup_factor: float = 1e3
    blowup_threshold: float | None = None
    nonlinear: bool = True
    store_snapshots: bool = True
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (self.m >= self.k0 >= 1):
            raise ConfigError(f"need m >= k0 >= 1, got m={self.m}, k0={self.k0}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.adapt < 0:
            raise ConfigError(f"adapt tolerance must be >= 0, got {self.adapt}")
        if self.oversample < 1:
            raise ConfigError(f"oversample must be >= 1, got {self.oversample}")
        if self.sample_every is not None and not self.sample_every > 0:
            raise ConfigError(f"sample_every must be positive, got {self.sample_every}")

    @property
    def sample_interval(self) -> float:
        return self.sample_every if self.sample_every is not None else self.t_end / 10.0

    def sample_times(self) -> list[float]:
        h = self.sample_interval
        n = int(math.floor(self.t_end / h + 1e-9))
        times = [j * h for j in range(n + 1)]
        if self.t_end - times[-1] > 1e-12 * self.t_end:
            times.append(self.t_end)
        else:
            times[-1] = self.t_end
        return times


@dataclass(frozen=True)
class DiagnosticsSample:
    t: float
    X: float
    Y: float
    U: float
    H: float
    energy_residual: float
    norm_alpha: float
    norm_alpha1: float


@dataclass(frozen=True)
class RunStatus:
    kind: str = "completed"
    t: float | None = None
    threshold: float | None = None

    @property
    def ok(self) -> bool:
        return self.kind == "completed"


CSV_COLUMNS = ("t", "X", "Y", "U", "H", "energy_residual", "norm_alpha", "norm_alpha1")


@dataclass
class Trajectory:
    config: SolverConfig
    box: BoxSpec
    initial: SpectralField
    forcing: Forcing
    samples: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    status: RunStatus = field(default_factory=RunStatus)
    final: SpectralField | None = None
    final_time: float = 0.0
    steps: int = 0

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])

    def horizon(self) -> float:
        """Last time the run is known to be regular (no blow-up or failure flag)."""
        return self.samples[-1].t if self.samples else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for s in self.samples:
            w.writerow([repr(float(getattr(s, c))) for c in CSV_COLUMNS])
        return buf.getvalue()

    def manifest(self) -> dict:
        return {"config": asdict(self.config),
                "box": asdict(self.box),
                "forcing": self.forcing.describe(),
                "status": asdict(self.status),
                "steps": self.steps,
                "n_samples": len(self.samples),
                "final_time": self.final_time}


# ---------------------------------------------------------------------------
# exact heat flow
# ---------------------------------------------------------------------------

def heat_factor(box: BoxSpec, m: int, t: float) -> np.ndarray:
    return np.exp(-box.nu * stokes_eigenvalues(box, m) * t)


def heat_evolve(u0_lo: SpectralField, t: float) -> SpectralField:
    """Exact solution of u_t + nu A u = 0 at time t: u_k(t) = u_k(0) exp(-nu lambda_k t)."""
    if t < 0:
        raise ConfigError(f"heat evolution needs t >= 0, got {t}")
    return u0_lo.replace(coeffs=u0_lo.coeffs * heat_factor(u0_lo.box, u0_lo.m, t))


# ---------------------------------------------------------------------------
# the truncated right-hand side
# ---------------------------------------------------------------------------

class GalerkinSystem:
    """Right-hand side pieces of the truncated system on the cube of half-width m."""

    def __init__(self, box: BoxSpec, m: int, forcing: Forcing, nonlinear: bool = True):
        self.box, self.m = box, m
        self.forcing = forcing
        self.nonlinear = nonlinear
        self.lam = stokes_eigenvalues(box, m)
        self.k = wavevectors(m).astype(float)
        ksq = wavenumber_sq(m).copy()
        ksq[ksq == 0] = 1.0
        self.ksq = ksq
        self.dsym = 1j * (TWO_PI / box.L) * wavevectors(m)
        self.N = product_grid_size(m, m, m)
        self._pairs = [(i, j) for i in range(3) for j in range(i, 3)]

    def leray(self, c: np.ndarray) -> np.ndarray:
        kdotc = np.einsum("iabc,iabc->abc", self.k, c)
        return c - self.k * (kdotc / self.ksq)

    def advection(self, c: np.ndarray) -> np.ndarray:
        """P_m B(u, u) for divergence-free u, via div(u (x) u) on an alias-free grid."""
        v = to_physical(c, self.N)
        prods = np.stack([v[i] * v[j] for i, j in self._pairs])
        t = from_physical(prods, self.m)
        tens = np.empty((3, 3) + t.shape[1:], complex)
        for n, (i, j) in enumerate(self._pairs):
            tens[i, j] = t[n]
            tens[j, i] = t[n]
        return np.einsum("jabc,ijabc->iabc", self.dsym, tens)

    def forcing_at(self, t: float) -> np.ndarray:
        if self.forcing.is_zero:
            return 0.0
        return self.leray(self.forcing.at(t, self.m))

    def transformed_rhs(self, c: np.ndarray, t: float) -> np.ndarray:
        """Everything except the viscous term: -Leray B(u,u) + Leray f."""
        out = self.forcing_at(t)
        if self.nonlinear:
            out = out - self.leray(self.advection(c))
        if np.isscalar(out):
            return np.zeros_like(c)
        return out

    def energy_residual(self, c: np.ndarray, t: float) -> float:
        """1/2 d/dt |u|_0^2 + nu (4pi^2/L^2) |u|_1^2 - <P_m f, u>_{-1,1}.

        The time derivative is the exact derivative of the semi-discrete flow,
        so the residual vanishes for the Galerkin system up to rounding.
        """
        du = self.transformed_rhs(c, t) - self.box.nu * self.lam * c
        dE = float(np.real(np.sum(np.conj(c) * du)))
        diss = self.box.nu * float(np.sum(self.lam * (np.abs(c) ** 2)))
        f = self.forcing.at(t, self.m)
        work = float(np.real(np.sum(f * np.conj(c))))
        return dE + diss - work


class _Stepper:
    def __init__(self, system: GalerkinSystem):
        self.sys = system
        self._cache = {}

    def factors(self, h):
        key = float(h)
        if key not in self._cache:
            if len(self._cache) > 16:
                self._cache.clear()
            half = np.exp(-self.sys.box.nu * self.sys.lam * h / 2.0)
            self._cache[key] = (half, half * half)
        return self._cache[key]

    def step(self, c, t, h):
        eh, e = self.factors(h)
        f = self.sys.transformed_rhs
        k1 = f(c, t)
        k2 = f(eh * (c + 0.5 * h * k1), t + 0.5 * h)
        k3 = f(eh * c + 0.5 * h * k2, t + 0.5 * h)
        k4 = f(e * c + h * eh * k3, t + h)
        return e * c + (h / 6.0) * (e * k1 + 2.0 * eh * (k2 + k3) + k4)


def _norm_alpha(c, m, alpha):
    return math.sqrt(float(np.sum(_weight(m, 2 * alpha) * (np.abs(c) ** 2).sum(axis=0))))


def sample_diagnostics(system: GalerkinSystem, c: np.ndarray, t: float, oversample: int,
                       ref: np.ndarray | None = None) -> DiagnosticsSample:
    box, m = system.box, system.m
    a = box.alpha
    u = SpectralField(box, c)
    na2 = hs_norm_sq(u, a)
    na12 = hs_norm_sq(u, a + 1)
    ref_field = u if ref is None else SpectralField(box, ref)
    p = 3.0 / (2.0 - a)
    U = lp_norm(gradient(ref_field), p, oversample) ** 4
    H = system.forcing.hs_norm_sq(t, a - 1.0, m) if not system.forcing.is_zero else 0.0
    return DiagnosticsSample(t=t, X=0.5 * na2, Y=box.scale * na12, U=U, H=H,
                             energy_residual=system.energy_residual(c, t),
                             norm_alpha=math.sqrt(na2), norm_alpha1=math.sqrt(na12))


def integrate(u0: SpectralField, forcing=None, config: SolverConfig | None = None,
              box: BoxSpec | None = None) -> Trajectory:
    """Advance P_m u0 to config.t_end and sample the diagnostics.

    Stops early with status ``norm_exceeded`` once |u|_{alpha,L} passes the
    blow-up threshold, or ``step_failure`` on non-finite values (the last
    good state is kept in ``final``).
    """
    if config is None:
        raise ConfigError("integrate needs a SolverConfig")
    u0._require_vector()
    box = u0.box if box is None else box
    if not math.isclose(box.L, u0.box.L):
        raise ConfigError("box side of the datum and the run differ")
    forcing = as_forcing(forcing)
    m = config.m
    system = GalerkinSystem(box, m, forcing, nonlinear=config.nonlinear)
    c = resize_coeffs(u0.coeffs, m)
    if not u0.divfree:
        c = system.leray(c)
    initial = SpectralField(box, c, divfree=True)
    stepper = _Stepper(system)

    n0 = _norm_alpha(c, m, box.alpha)
    if config.blowup_threshold is not None:
        threshold = config.blowup_threshold
    else:
        threshold = config.blowup_factor * n0 if n0 > 0 else math.inf

    traj = Trajectory(config=config, box=box, initial=initial, forcing=forcing)

    def record(c, t):
        traj.samples.append(sample_diagnostics(system, c, t, config.oversample))
        if config.store_snapshots:
            traj.snapshots.append(SpectralField(box, c, divfree=True))

    targets = config.sample_times()
    record(c, 0.0)
    t = 0.0
    h = config.dt
    steps = 0
    eps_t = 1e-12 * config.t_end
    for target in targets[1:]:
        while target - t > eps_t:
            if steps >= config.max_steps:
                traj.status = RunStatus("step_failure", t)
                break
            h_try = min(h, target - t)
            if config.adapt > 0:
                c_new, h_next, accepted = _adaptive_step(stepper, c, t, h_try, config.adapt)
                if not accepted:
                    h = h_next
                    if h < 1e-14 * config.t_end:
                        traj.status = RunStatus("step_failure", t)
                        break
                    continue
            else:
                c_new, h_next = stepper.step(c, t, h_try), h
            steps += 1
            if not np.all(np.isfinite(c_new)):
                traj.status = RunStatus("step_failure", t)
                break
            t_new = t + h_try if target - (t + h_try) > eps_t else target
            c, t = c_new, t_new
            h = h_next if config.adapt > 0 else config.dt
            if _norm_alpha(c, m, box.alpha) > threshold:
                traj.status = RunStatus("norm_exceeded", t, threshold)
                record(c, t)
                break
        if not traj.status.ok:
            break
        record(c, t)
    traj.final = SpectralField(box, c, divfree=True)
    traj.final_time = t
    traj.steps = steps
    return traj


def _adaptive_step(stepper, c, t, h, tol):
    """Step doubling; returns (state, next step size, accepted)."""
    full = stepper.step(c, t, h)
    half = stepper.step(stepper.step(c, t, 0.5 * h), t + 0.5 * h, 0.5 * h)
    scale = math.sqrt(float(np.sum(np.abs(half) ** 2))) + 1e-300
    err = math.sqrt(float(np.sum(np.abs(half - full) ** 2))) / scale / 15.0
    if not math.isfinite(err):
        return half, 0.2 * h, False
    fac = 2.0 if err == 0 else min(2.0, max(0.2, 0.9 * (tol / err) ** 0.2))
    return half, h * fac, err <= tol


def difference_trajectory(traj_u: Trajectory, traj_v: Trajectory) -> Trajectory:
    """Diagnostics of w = u - v on the common sample grid.

    X, Y come from w, U from the reference u, H from h = f - g.
    """
    check_same_box(traj_u.initial, traj_v.initial)
    n = min(len(traj_u.samples), len(traj_v.samples))
    tu, tv = traj_u.times()[:n], traj_v.times()[:n]
    if not isclose_times(tu, tv):
        raise ConfigError("sample grids of the two trajectories differ")
    if len(traj_u.snapshots) < n or len(traj_v.snapshots) < n:
        raise ConfigError("difference diagnostics need stored snapshots")
    box = traj_u.box
    a = box.alpha
    m = max(traj_u.config.m, traj_v.config.m)
    h = DifferenceForcing(traj_u.forcing, traj_v.forcing)
    samples, snaps = [], []
    for i in range(n):
        w = traj_u.snapshots[i].resize(m) - traj_v.snapshots[i].resize(m)
        na2, na12 = hs_norm_sq(w, a), hs_norm_sq(w, a + 1)
        H = 0.0 if h.is_zero else h.hs_norm_sq(tu[i], a - 1.0, m)
        samples.append(DiagnosticsSample(t=float(tu[i]), X=0.5 * na2, Y=box.scale * na12,
                                         U=traj_u.samples[i].U, H=H, energy_residual=math.nan,
                                         norm_alpha=math.sqrt(na2), norm_alpha1=math.sqrt(na12)))
        snaps.append(w)
    if not traj_u.status.ok:
        status = traj_u.status
    elif not traj_v.status.ok:
        status = traj_v.status
    else:
        status = RunStatus()
    cfg = traj_u.config if traj_u.config.m >= traj_v.config.m else traj_v.config
    return Trajectory(config=cfg, box=box, initial=traj_u.initial - traj_v.initial, forcing=h,
                      samples=samples, snapshots=snaps, status=status,
                      final=snaps[-1] if snaps else None, final_time=float(tu[-1]) if n else 0.0)


def galerkin_residual(u_n: SpectralField, n: int) -> SpectralField:
    """Tail u.grad u - P_n(u.grad u), exact on all modes up to 2n."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if u_n.m > n:
        if np.any(high_pass(u_n, n).coeffs):
            raise ConfigError(f"field carries modes beyond n={n}")
        u_n = u_n.resize(n)
    return high_pass(nonlinear_term(u_n, u_n, 2 * n), n)
