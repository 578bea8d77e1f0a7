"""Regularity and stability criteria evaluated on data, trajectories and constant bundles.

Every check returns a :class:`CertificateReport` with both sides of the
inequality, the margin, full input provenance and a mandatory list of
non-rigor caveats.  A report passes only on strict inequality lhs < rhs.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import integrate as sint
from scipy import optimize
from scipy.interpolate import CubicSpline

from .constants import ConstantBundle
from .errors import BudgetError, ConfigError
from .forcing import DifferenceForcing, as_forcing
from .solver import SolverConfig, Trajectory, galerkin_residual, heat_evolve, integrate
from .spectral import (
    TWO_PI,
    SpectralField,
    gradient,
    high_pass,
    hs_norm,
    hs_norm_sq,
    low_pass,
    lp_norm,
    tensor_product_norm,
)

CAVEAT_FLOAT = "non-rigorous: floating-point arithmetic without interval enclosures"
CAVEAT_TABLE = ("conditional on the Sobolev constant table: valid only if the true C_S values "
                "do not exceed the table values (estimates are search lower bounds x safety)")
CAVEAT_TRAPEZOID = "time integrals of sampled diagnostics use the trapezoid rule on the sample grid"
CAVEAT_SUP = "sup over time taken over sample times only"
CAVEAT_HORIZON = "existence time of the reference replaced by absence of a blow-up or failure flag before T"
CAVEAT_GALERKIN = "reference solution is a Galerkin approximation, not the analytic solution"


def _lp_caveat(oversample):
    return f"fractional L^p norms by grid quadrature (oversample={oversample})"


@dataclass(frozen=True)
class EpsilonBudget:
    """Viscosity splitting nu_bar + eps1 + eps2 < nu plus the caloric-bound parameters."""

    nu_bar: float
    eps1: float
    eps2: float
    sigma: float = 0.5
    delta: float = 0.1
    mu: float | None = None

    def __post_init__(self):
        for name in ("nu_bar", "eps1", "eps2", "delta"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise BudgetError(f"{name} must be positive, got {v}")
        if not 0.0 < self.sigma < 1.0:
            raise BudgetError(f"sigma must lie in (0, 1), got {self.sigma}")
        if self.mu is not None and not self.mu > 0:
            raise BudgetError(f"mu must be positive, got {self.mu}")

    @classmethod
    def default(cls, nu: float) -> "EpsilonBudget":
        return cls(nu_bar=nu / 2, eps1=nu / 10, eps2=nu / 10, sigma=0.5, delta=nu / 10)

    def check(self, nu: float, mode: str) -> "EpsilonBudget":
        if mode == "theorem1":
            ok, rule = self.nu_bar + self.eps1 + self.eps2 < nu, "nu_bar + eps1 + eps2 < nu"
        elif mode == "theorem3":
            ok, rule = self.nu_bar + self.eps2 < nu, "nu_bar + eps2 < nu"
        elif mode == "lemma1":
            ok, rule = self.eps1 + self.eps2 < nu, "eps1 + eps2 < nu"
        elif mode == "corollary2":
            ok, rule = self.nu_bar < nu, "nu_bar < nu"
        else:
            raise ConfigError(f"unknown budget mode {mode!r}")
        if not ok:
            raise BudgetError(f"epsilon budget violates {rule} (nu={nu}, budget={self})")
        return self

    def stability_gap(self, nu: float) -> float:
        """nu - (nu_bar + eps1 + eps2)."""
        return nu - (self.nu_bar + self.eps1 + self.eps2)


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.generic):
        return _json_safe(x.item())
    return x


@dataclass
class CertificateReport:
    criterion: str
    lhs: float
    rhs: float
    inputs: dict = field(default_factory=dict)
    caveats: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.lhs < self.rhs)

    def to_dict(self) -> dict:
        return _json_safe({"criterion": self.criterion, "lhs": float(self.lhs), "rhs": float(self.rhs),
                           "margin": float(self.margin), "passed": self.passed,
                           "caveats": list(self.caveats), "inputs": self.inputs,
                           "details": self.details})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def verdict(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{self.criterion}: {tag} lhs={self.lhs:.6e} rhs={self.rhs:.6e} margin={self.margin:.6e}"


def _check_bundle(bundle: ConstantBundle, box, budget: EpsilonBudget, uses_k3: bool = True):
    if not math.isclose(bundle.alpha, box.alpha, rel_tol=0, abs_tol=1e-14):
        raise ConfigError(f"bundle alpha {bundle.alpha} differs from the box alpha {box.alpha}")
    if not math.isclose(bundle.L, box.L, rel_tol=1e-14):
        raise ConfigError(f"bundle L {bundle.L} differs from the box L {box.L}")
    if not math.isclose(bundle.eps2, budget.eps2, rel_tol=1e-14):
        raise ConfigError("bundle eps2 differs from the budget eps2")
    if uses_k3 and not math.isclose(bundle.eps1, budget.eps1, rel_tol=1e-14):
        raise ConfigError("bundle eps1 differs from the budget eps1")


def _base_inputs(bundle, budget, box, **extra):
    d = {"bundle": bundle.to_json(), "budget": asdict(budget), "box": asdict(box)}
    d.update(extra)
    return d


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _product(a: float, expo: float) -> float:
    """a * exp(expo) with 0 * inf := 0."""
    if a == 0.0:
        return 0.0
    return a * _safe_exp(expo)


def threshold(bundle: ConstantBundle, budget: EpsilonBudget) -> float:
    """(nu_bar / K2)^2."""
    return (budget.nu_bar / bundle.k2) ** 2


# ---------------------------------------------------------------------------
# sampled-integral helpers
# ---------------------------------------------------------------------------

def _clip(times, values, T):
    """Samples on [0, T], linearly interpolating an end point at T."""
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    if T > times[-1] * (1 + 1e-12) + 1e-14:
        raise ConfigError(f"T={T} lies beyond the trajectory horizon {times[-1]}")
    keep = times <= T * (1 + 1e-12) + 1e-14
    t, v = times[keep], values[keep]
    if t[-1] < T * (1 - 1e-12):
        t = np.append(t, T)
        v = np.append(v, np.interp(T, times, values))
    return t, v


def sampled_integral(traj: Trajectory, name: str, T: float) -> float:
    vals = traj.column(name)
    if np.any(~np.isfinite(vals)):
        raise ConfigError(f"trajectory has missing {name} samples")
    t, v = _clip(traj.times(), vals, T)
    return float(sint.trapezoid(v, t))


def _cumulative(values, times):
    return sint.cumulative_trapezoid(values, times, initial=0.0)


@dataclass
class BoundProfile:
    """Per-sample values of a 'sup + dissipation integral' bound against its threshold."""

    times: np.ndarray
    values: np.ndarray
    threshold: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.values <= self.threshold))

    @property
    def worst(self) -> float:
        return float(np.max(self.values))


def dissipation_profile(times, sup_term, int_term, coeff, thr) -> BoundProfile:
    """running sup of ``sup_term`` + coeff * running integral of ``int_term``."""
    sup = np.maximum.accumulate(np.asarray(sup_term, float))
    vals = sup + coeff * _cumulative(np.asarray(int_term, float), times)
    return BoundProfile(np.asarray(times, float), vals, thr)


# ---------------------------------------------------------------------------
# small data
# ---------------------------------------------------------------------------

def check_smallness_A4(u0: SpectralField, forcing, T: float, bundle: ConstantBundle,
                       budget: EpsilonBudget) -> CertificateReport:
    """|u0|^2_alpha + K4 int_0^T |f|^2_{alpha-1} < (nu_bar/K2)^2."""
    box = u0.box
    budget.check(box.nu, "theorem3")
    _check_bundle(bundle, box, budget, uses_k3=False)
    forcing = as_forcing(forcing)
    a = box.alpha
    if not T > 0:
        raise ConfigError(f"T must be positive, got {T}")
    if forcing.is_zero:
        fint = 0.0
    elif math.isinf(T):
        raise ConfigError("an infinite horizon needs zero forcing")
    else:
        fint = forcing.integrate_hs_norm_sq(a - 1.0, T)
    d0 = hs_norm_sq(u0, a)
    lhs = d0 + bundle.k4 * fint
    rhs = threshold(bundle, budget)
    return CertificateReport(
        "A4", lhs, rhs,
        inputs=_base_inputs(bundle, budget, box, T=T, forcing=forcing.describe(),
                            quadrature="adaptive (scipy.integrate.quad)"),
        caveats=[CAVEAT_FLOAT, CAVEAT_TABLE],
        details={"datum_norm_sq": d0, "forcing_integral": fint,
                 "estimate_bound": rhs, "dissipation_coefficient": box.nu - budget.nu_bar - budget.eps2})


def theorem3_profile(traj: Trajectory, bundle: ConstantBundle, budget: EpsilonBudget) -> BoundProfile:
    """sup |u|^2_alpha + (nu - nu_bar - eps2) int |u|^2_{alpha+1} per sample."""
    coeff = traj.box.nu - budget.nu_bar - budget.eps2
    return dissipation_profile(traj.times(), traj.column("norm_alpha") ** 2,
                               traj.column("norm_alpha1") ** 2, coeff, threshold(bundle, budget))


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------

def _difference_data(u_traj, v0, g, T, alpha):
    u0 = u_traj.initial
    d0 = hs_norm_sq(u0 - v0, alpha)
    h = DifferenceForcing(u_traj.forcing, as_forcing(g))
    hint = 0.0 if h.is_zero else h.integrate_hs_norm_sq(alpha - 1.0, T)
    return d0, hint, h


def _within_horizon(traj: Trajectory, T: float) -> bool:
    """T inside the sampled run, and strictly before any blow-up or failure flag."""
    if T > traj.horizon() * (1 + 1e-12) + 1e-14:
        return False
    return traj.status.ok or traj.status.t is None or T < traj.status.t


def _trajectory_guard(u_traj: Trajectory, T: float):
    if not T > 0:
        raise ConfigError(f"T must be positive, got {T}")
    if not _within_horizon(u_traj, T):
        raise ConfigError(f"T={T} lies beyond the regular horizon {u_traj.horizon()} of the reference")


def check_proximity_A1(u_traj: Trajectory, v0: SpectralField, g, T: float,
                       bundle: ConstantBundle, budget: EpsilonBudget) -> CertificateReport:
    """(|u0-v0|^2_alpha + K4 int |f-g|^2_{alpha-1}) exp(K3 int U) < (nu_bar/K2)^2."""
    box = u_traj.box
    budget.check(box.nu, "theorem1")
    _check_bundle(bundle, box, budget)
    _trajectory_guard(u_traj, T)
    a = box.alpha
    d0, hint, h = _difference_data(u_traj, v0, g, T, a)
    int_u = sampled_integral(u_traj, "U", T)
    expo = bundle.k3 * int_u
    lhs = _product(d0 + bundle.k4 * hint, expo)
    rhs = threshold(bundle, budget)
    details = {"datum_difference_sq": d0, "forcing_difference_integral": hint,
               "int_U": int_u, "exponent": expo,
               "p1_threshold": rhs, "p1_dissipation_coefficient": budget.stability_gap(box.nu)}
    return CertificateReport(
        "A1", lhs, rhs,
        inputs=_base_inputs(bundle, budget, box, T=T, trajectory=u_traj.manifest(),
                            forcing_difference=h.describe(), quadrature="trapezoid",
                            sample_times=u_traj.times().tolist()),
        caveats=[CAVEAT_FLOAT, CAVEAT_TABLE, CAVEAT_TRAPEZOID, _lp_caveat(u_traj.config.oversample),
                 CAVEAT_HORIZON],
        details=details)


def observed_interp_ratio(u_traj: Trajectory, T: float) -> float:
    """(int U)^{1/4} / ((4pi^2/L^2)^{(alpha-1)/2} |u|^{1/2}_{L^inf H^alpha} |u|^{1/2}_{L^2 H^{1+alpha}})."""
    a = u_traj.box.alpha
    int_u = sampled_integral(u_traj, "U", T)
    t, na = _clip(u_traj.times(), u_traj.column("norm_alpha"), T)
    _, na1 = _clip(u_traj.times(), u_traj.column("norm_alpha1") ** 2, T)
    sup_a = float(np.max(na))
    l2 = math.sqrt(float(sint.trapezoid(na1, t)))
    den = u_traj.box.scale ** ((a - 1) / 2) * math.sqrt(sup_a) * math.sqrt(l2)
    return int_u ** 0.25 / den if den > 0 else 0.0


def check_proximity_A2(u_traj: Trajectory, v0: SpectralField, g, T: float,
                       bundle: ConstantBundle, budget: EpsilonBudget) -> CertificateReport:
    """A1 with exp(K3 int U) replaced by the interpolation bound through C_I."""
    if bundle.c_i is None:
        raise ConfigError("the A2 criterion needs C_I in the constant bundle")
    box = u_traj.box
    budget.check(box.nu, "theorem1")
    _check_bundle(bundle, box, budget)
    _trajectory_guard(u_traj, T)
    a = box.alpha
    d0, hint, h = _difference_data(u_traj, v0, g, T, a)
    t, na = _clip(u_traj.times(), u_traj.column("norm_alpha") ** 2, T)
    _, na1 = _clip(u_traj.times(), u_traj.column("norm_alpha1") ** 2, T)
    sup_a = float(np.max(na))
    int_a1 = float(sint.trapezoid(na1, t))
    expo = bundle.k3 * bundle.c_i ** 4 * box.scale ** (2 * (a - 1)) * sup_a * int_a1
    lhs = _product(d0 + bundle.k4 * hint, expo)
    rhs = threshold(bundle, budget)
    caveats = [CAVEAT_FLOAT, CAVEAT_TABLE, CAVEAT_TRAPEZOID, CAVEAT_SUP, CAVEAT_HORIZON,
               "C_I is an estimated constant (search lower bound x safety)"]
    int_u = sampled_integral(u_traj, "U", T)
    observed = observed_interp_ratio(u_traj, T)
    if observed > bundle.c_i:
        caveats.append(f"observed interpolation ratio {observed:.6g} exceeds C_I={bundle.c_i:.6g}: "
                       "the C_I value is too small for this trajectory")
    return CertificateReport(
        "A2", lhs, rhs,
        inputs=_base_inputs(bundle, budget, box, T=T, trajectory=u_traj.manifest(),
                            forcing_difference=h.describe(), quadrature="trapezoid"),
        caveats=caveats,
        details={"datum_difference_sq": d0, "forcing_difference_integral": hint,
                 "sup_norm_alpha_sq": sup_a, "int_norm_alpha1_sq": int_a1, "exponent": expo,
                 "a1_exponent": bundle.k3 * int_u, "observed_interp_ratio": observed})


def check_stability_bound_P1(diff_traj: Trajectory, bundle: ConstantBundle,
                             budget: EpsilonBudget) -> CertificateReport:
    """sup |w|^2_alpha + (nu - nu_bar - eps1 - eps2) int |w|^2_{alpha+1} against (nu_bar/K2)^2."""
    box = diff_traj.box
    prof = dissipation_profile(diff_traj.times(), diff_traj.column("norm_alpha") ** 2,
                               diff_traj.column("norm_alpha1") ** 2, budget.stability_gap(box.nu),
                               threshold(bundle, budget))
    return CertificateReport(
        "P1", prof.worst, prof.threshold,
        inputs=_base_inputs(bundle, budget, box, quadrature="trapezoid",
                            sample_times=prof.times.tolist()),
        caveats=[CAVEAT_FLOAT, CAVEAT_TRAPEZOID, CAVEAT_SUP, CAVEAT_GALERKIN],
        details={"profile": prof.values.tolist()})


@dataclass
class EnvelopeResult:
    times: np.ndarray
    envelope: np.ndarray
    lhs: np.ndarray
    mu: float
    tol: float
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_csv(self) -> str:
        rows = ["t,lhs,envelope"]
        rows += [f"{t!r},{l!r},{e!r}" for t, l, e in zip(self.times.tolist(), self.lhs.tolist(),
                                                          self.envelope.tolist())]
        return "\n".join(rows) + "\n"


def gronwall_envelope(diff_traj: Trajectory, bundle: ConstantBundle, budget: EpsilonBudget,
                      tol: float = 0.05) -> EnvelopeResult:
    """envelope(t) = (X(0) + K4 int_0^t H) exp(K3 int_0^t U) versus X(t) + mu int_0^t Y."""
    t = diff_traj.times()
    X, Y = diff_traj.column("X"), diff_traj.column("Y")
    H, U = diff_traj.column("H"), diff_traj.column("U")
    mu = budget.stability_gap(diff_traj.box.nu)
    with np.errstate(over="ignore"):
        env = (X[0] + bundle.k4 * _cumulative(H, t)) * np.exp(bundle.k3 * _cumulative(U, t))
    lhs = X + mu * _cumulative(Y, t)
    bad = [float(ti) for ti, l, e in zip(t, lhs, env) if l > e * (1 + tol)]
    return EnvelopeResult(t, env, lhs, mu, tol, bad)


# ---------------------------------------------------------------------------
# caloric lower bound
# ---------------------------------------------------------------------------

@dataclass
class CaloricResult:
    T0: float
    k0: int
    mu: float
    report: CertificateReport
    lhs: callable = field(repr=False, default=None)
    rhs: callable = field(repr=False, default=None)

    @property
    def bound(self) -> float:
        """((nu - eps1 - eps2 - sigma mu) / K2)^2, the 'Moreover' threshold."""
        return self.report.details["moreover_threshold"]


def caloric_mu(u0: SpectralField, k0: int, bundle: ConstantBundle, budget: EpsilonBudget) -> float:
    tail = hs_norm(high_pass(u0, k0), u0.box.alpha) if k0 < u0.m else 0.0
    return u0.box.nu - (budget.eps1 + budget.eps2 + bundle.k2 * tail / math.sqrt(2.0))


def caloric_integrands(u_lo0: SpectralField, times, oversample: int = 3):
    """|u^Lo (x) u^Lo|^2_{1+alpha} and |grad u^Lo|^4_{L^{3/(2-alpha)}} along the heat flow."""
    a = u_lo0.box.alpha
    p = 3.0 / (2.0 - a)
    g1, g2 = [], []
    for tau in times:
        u = heat_evolve(u_lo0, float(tau))
        g1.append(tensor_product_norm(u, 1.0 + a) ** 2)
        g2.append(lp_norm(gradient(u), p, oversample) ** 4)
    return np.array(g1), np.array(g2)


def caloric_grid(box, T_max: float, resolution: int) -> np.ndarray:
    """Uniform on [0, t1] and geometric on [t1, T_max], t1 = 2 / (slowest heat decay rate of the integrands)."""
    if resolution < 8:
        raise ConfigError(f"resolution must be >= 8, got {resolution}")
    t1 = min(T_max, 2.0 / (4.0 * box.nu * box.scale))
    n1 = resolution // 2
    lin = np.linspace(0.0, t1, n1 + 1)
    if t1 >= T_max:
        return np.linspace(0.0, T_max, resolution + 1)
    geo = np.geomspace(t1, T_max, resolution - n1 + 1)[1:]
    return np.concatenate([lin, geo])


def caloric_lower_bound(u0: SpectralField, k0: int, bundle: ConstantBundle, budget: EpsilonBudget,
                        T_max: float = 1.0, resolution: int = 160, oversample: int = 3,
                        rtol: float = 1e-8, form: str = "stated") -> CaloricResult:
    """Largest T0 <= T_max with lhs(T0) <= rhs(T0) in the caloric criterion.

    ``form="stated"`` uses exp(-K3 (int U + delta T0)); ``form="derived"`` uses
    exp(-K3 int U - delta T0), which is what the energy argument produces.
    """
    box = u0.box
    a = box.alpha
    budget.check(box.nu, "lemma1")
    _check_bundle(bundle, box, budget)
    if form not in ("stated", "derived"):
        raise ConfigError(f"unknown caloric form {form!r}")
    if not T_max > 0:
        raise ConfigError(f"T_max must be positive, got {T_max}")
    k0 = max(1, int(k0))
    k0_requested = k0
    mu = caloric_mu(u0, k0, bundle, budget)
    while mu <= 0 and k0 < u0.m:
        k0 += 1
        mu = caloric_mu(u0, k0, bundle, budget)
    if mu <= 0:
        raise ConfigError("mu <= 0 for every k0 up to the truncation of the datum")
    nu, e1, e2, sig, dl = box.nu, budget.eps1, budget.eps2, budget.sigma, budget.delta
    D = nu - e1 - e2 - sig * mu
    const = ((1 - sig) * mu / D - 1.0) ** 2
    u_lo0 = low_pass(u0, k0).resize(min(k0, u0.m))

    grid = caloric_grid(box, T_max, resolution)
    g1, g2 = caloric_integrands(u_lo0, grid, oversample)
    G1 = CubicSpline(grid, g1).antiderivative()
    G2 = CubicSpline(grid, g2).antiderivative()
    pref = (bundle.k2 / D) ** 2 / (2 * dl) * box.scale ** (2 * a + 1)

    def lhs(T):
        return pref * float(G1(T))

    def rhs(T):
        if form == "stated":
            return math.exp(-bundle.k3 * (float(G2(T)) + dl * T)) - const
        return math.exp(-bundle.k3 * float(G2(T)) - dl * T) - const

    def F(T):
        return rhs(T) - lhs(T)

    if F(0.0) <= 0:
        T0 = 0.0
    elif F(T_max) >= 0:
        T0 = T_max
    else:
        vals = [F(t) for t in grid]
        j = next(i for i, v in enumerate(vals) if v < 0)
        lo, hi = grid[j - 1], grid[j]
        root = optimize.brentq(F, lo, hi, xtol=rtol * hi, rtol=4 * np.finfo(float).eps)
        T0 = root if F(root) >= 0 else max(lo, root - rtol * hi)
    thr = (D / bundle.k2) ** 2
    report = CertificateReport(
        "A3", lhs(T0), rhs(T0),
        inputs=_base_inputs(bundle, budget, box, k0_requested=k0_requested, T_max=T_max,
                            resolution=resolution, oversample=oversample, form=form,
                            quadrature="cubic spline on a graded time grid"),
        caveats=[CAVEAT_FLOAT, CAVEAT_TABLE, _lp_caveat(oversample),
                 "T0 located by grid scan and root bracketing on the spline-integrated criterion"],
        details={"T0": T0, "k0": k0, "mu": mu, "dissipation_margin": D, "additive_constant": const,
                 "moreover_threshold": thr, "int_tensor_sq": float(G1(T0)), "int_U": float(G2(T0))})
    report.inputs["budget"]["mu"] = mu
    return CaloricResult(T0=T0, k0=k0, mu=mu, report=report, lhs=lhs, rhs=rhs)


def lemma1_profile(traj: Trajectory, result: CaloricResult, budget: EpsilonBudget,
                   part: str = "full") -> BoundProfile:
    """sup 1/2|v|^2_alpha + sigma (4pi^2/L^2) int |v|^2_{alpha+1} with v = u or v = u - u^Lo."""
    box = traj.box
    a = box.alpha
    if part == "full":
        sup_term = 0.5 * traj.column("norm_alpha") ** 2
        int_term = traj.column("norm_alpha1") ** 2
    elif part == "high":
        u_lo0 = low_pass(traj.initial, result.k0)
        diffs = [snap - heat_evolve(u_lo0, s.t) for snap, s in zip(traj.snapshots, traj.samples)]
        sup_term = np.array([0.5 * hs_norm_sq(d, a) for d in diffs])
        int_term = np.array([hs_norm_sq(d, a + 1) for d in diffs])
    else:
        raise ConfigError(f"unknown part {part!r}")
    return dissipation_profile(traj.times(), sup_term, int_term, budget.sigma * box.scale, result.bound)


# ---------------------------------------------------------------------------
# condition (C): a-posteriori verification from Galerkin runs
# ---------------------------------------------------------------------------

def residual_samples(traj: Trajectory, n: int) -> np.ndarray:
    a = traj.box.alpha
    return np.array([hs_norm_sq(galerkin_residual(s, n), a - 1.0) for s in traj.snapshots])


def condition_C_report(u0: SpectralField, traj: Trajectory, n: int, T: float,
                       bundle: ConstantBundle, budget: EpsilonBudget) -> CertificateReport:
    box = traj.box
    a = box.alpha
    rhs = threshold(bundle, budget)
    init = hs_norm_sq(traj.initial - u0, a)
    inputs = _base_inputs(bundle, budget, box, n=n, T=T, trajectory=traj.manifest(),
                          quadrature="trapezoid")
    caveats = [CAVEAT_FLOAT, CAVEAT_TABLE, CAVEAT_TRAPEZOID, _lp_caveat(traj.config.oversample)]
    if not _within_horizon(traj, T):
        return CertificateReport("C", math.inf, rhs, inputs, caveats + ["unverifiable: run flagged before T"],
                                 {"n": n, "status": asdict(traj.status), "verifiable": False})
    res = residual_samples(traj, n)
    t, r = _clip(traj.times(), res, T)
    res_int = float(sint.trapezoid(r, t))
    int_u = sampled_integral(traj, "U", T)
    expo = bundle.k3 * int_u
    lhs = _product(init + bundle.k4 * res_int, expo)
    return CertificateReport("C", lhs, rhs, inputs, caveats,
                             {"n": n, "initial_difference_sq": init, "residual_integral": res_int,
                              "int_U": int_u, "exponent": expo, "verifiable": True,
                              "residual_samples": res.tolist()})


def verify_condition_C(u0: SpectralField, schedule, config: SolverConfig, bundle: ConstantBundle,
                       budget: EpsilonBudget, T: float | None = None,
                       workers: int | None = None) -> list[CertificateReport]:
    """Run u^n from P_n u0 (unforced) for each n and evaluate the a-posteriori criterion."""
    box = u0.box
    budget.check(box.nu, "theorem1")
    _check_bundle(bundle, box, budget)
    T = config.t_end if T is None else T
    if T > config.t_end:
        raise ConfigError("T exceeds the run horizon t_end")

    def one(n):
        cfg = replace(config, m=int(n), k0=min(config.k0, int(n)), store_snapshots=True)
        traj = integrate(u0, None, cfg)
        return condition_C_report(u0, traj, int(n), T, bundle, budget)

    schedule = [int(n) for n in schedule]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, schedule))
    return [one(n) for n in schedule]


def first_passing(reports) -> CertificateReport | None:
    return next((r for r in reports if r.passed), None)


# ---------------------------------------------------------------------------
# tiled small data
# ---------------------------------------------------------------------------

def tile_field(u: SpectralField, ratio: int) -> SpectralField:
    """The L0-periodic field viewed on Q_{ratio L0}: coefficient u_k moves to ratio*k."""
    if ratio < 1 or int(ratio) != ratio:
        raise ConfigError(f"tiling ratio must be a positive integer, got {ratio}")
    r = int(ratio)
    m = u.m * r
    n = 2 * m + 1
    c = np.zeros((u.ncomp, n, n, n), complex)
    c[:, ::r, ::r, ::r] = u.coeffs
    return SpectralField(u.box.with_L(u.box.L * r), c, u.divfree)


def check_corollary2(u0_small: SpectralField, L: float, bundle: ConstantBundle,
                     budget: EpsilonBudget) -> CertificateReport:
    """L0 |u0|_{alpha,L0} < 2 pi nu_bar / (sqrt 2 C_S(1-a) C_S(1) C_S(a-1/2)), f = 0."""
    box0 = u0_small.box
    budget.check(box0.nu, "corollary2")
    if not math.isclose(bundle.L, box0.L, rel_tol=1e-14):
        raise ConfigError("the bundle must be assembled at the small box side L0")
    ratio = L / box0.L
    r = round(ratio)
    if r < 1 or abs(ratio - r) > 1e-9 * ratio:
        raise ConfigError(f"L / L0 = {ratio} is not a positive integer")
    a = box0.alpha
    norm0 = hs_norm(u0_small, a)
    lhs = box0.L * norm0
    cs = bundle.c_s
    rhs = TWO_PI * budget.nu_bar / (math.sqrt(2.0) * cs[0] * cs[1] * cs[2])
    tiled = tile_field(u0_small, r)
    embedded = bool(np.array_equal(tiled.coeffs[:, ::r, ::r, ::r], u0_small.coeffs)
                    and np.count_nonzero(tiled.coeffs) == np.count_nonzero(u0_small.coeffs))
    a4_rhs = budget.nu_bar / bundle.k2_sec12
    return CertificateReport(
        "A4", lhs, rhs,
        inputs=_base_inputs(bundle, budget, box0, L=L, ratio=r),
        caveats=[CAVEAT_FLOAT, CAVEAT_TABLE],
        details={"variant": "tiled", "ratio": r, "norm_alpha_L0": norm0, "tiling_embedding_verified": embedded,
                 "tiled_norm_alpha_L": hs_norm(tiled, a),
                 "a4_at_L0": {"norm": norm0, "bound": a4_rhs, "bound_times_L0": a4_rhs * box0.L}})
