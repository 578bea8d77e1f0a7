"""Sobolev-Poincare and interpolation constants and the assembled K bundles.

The embedding constant C_S(beta) is the best constant in

    |f|_{L^{beta*}(Q_{2pi})} <= C_S(beta) |f|_{beta, 2pi},  beta* = 6 / (3 - 2 beta),

over zero-mean fields.  Nothing here proves a value: the estimators return
the best Rayleigh ratio found by a randomized search, which is a lower bound
for the true constant.  Certificates use ``estimate * safety`` (or a user
override) in the role of an upper bound and are only valid conditionally on
that table.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .spectral import (
    TWO_PI,
    SpectralField,
    check_alpha,
    hermitian_part,
    tensor_product_norm,
    to_physical,
    wavenumber_sq,
)

DEFAULT_SAFETY = 1.5
PROVENANCES = ("estimated", "user", "literature")


def sobolev_exponent(beta: float) -> float:
    """beta* = 6 / (3 - 2 beta)."""
    if not 0.0 <= beta < 1.5:
        raise ConfigError(f"beta must lie in [0, 3/2), got {beta}")
    return 6.0 / (3.0 - 2.0 * beta)


def beta_key(beta: float) -> str:
    return f"{float(beta):.10g}"


# ---------------------------------------------------------------------------
# Rayleigh ratios
# ---------------------------------------------------------------------------

class _Quadrature:
    """L^p quadrature on Q_{2pi} for coefficient cubes of fixed truncation."""

    def __init__(self, m: int, oversample: int):
        self.m = m
        self.N = oversample * (2 * m + 1)
        self.cell = (TWO_PI / self.N) ** 3

    def lp(self, coeffs: np.ndarray, p: float) -> float:
        v = to_physical(coeffs, self.N)
        mag = np.sqrt((v ** 2).sum(axis=0))
        return float((np.sum(mag ** p) * self.cell) ** (1.0 / p))


def sobolev_ratio(f: SpectralField, beta: float, oversample: int = 3) -> float:
    """|f|_{L^{beta*}(Q_2pi)} / |f|_{beta,2pi}; the box of ``f`` is ignored."""
    p = sobolev_exponent(beta)
    q = _Quadrature(f.m, oversample)
    w = _sobolev_weight(f.m, beta)
    den = math.sqrt(float(np.sum(w ** 2 * (np.abs(f.coeffs) ** 2).sum(axis=0))))
    if den == 0.0:
        raise ConfigError("Rayleigh ratio undefined for the zero field")
    return q.lp(f.coeffs, p) / den


def _sobolev_weight(m: int, beta: float) -> np.ndarray:
    ksq = wavenumber_sq(m)
    w = np.zeros_like(ksq)
    w[ksq > 0] = ksq[ksq > 0] ** (0.5 * beta)
    return w


def _random_start(rng, shape, decay_w):
    c = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return hermitian_part(c * decay_w)


def _ascent(objective, x0, rng, budget: int) -> float:
    """(1+1) random search with step adaptation and single-mode moves.

    Every proposal draws from ``rng`` in a fixed pattern, so the first j
    evaluations do not depend on ``budget``: the best value is nondecreasing
    in the budget for a fixed seed.
    """
    if budget <= 0:
        return -math.inf
    x, best = x0, objective(x0)
    step = 0.3
    n = x0.shape[-1]
    for it in range(1, budget):
        noise = rng.normal(size=x.shape) + 1j * rng.normal(size=x.shape)
        pick = rng.integers(0, n, size=3)
        lead = tuple(int(rng.integers(0, d)) for d in x.shape[:-3])
        scale = np.sqrt(np.mean(np.abs(x) ** 2))
        if it % 2:
            cand = x + step * scale * noise
        else:
            # coordinate move: perturb one mode (and its conjugate)
            cand = x.copy()
            cand[lead + tuple(pick)] += step * scale * noise[lead + tuple(pick)] * n
        cand = hermitian_part(cand)
        if not np.any(cand):
            continue
        val = objective(cand)
        if val > best:
            x, best = cand, val
            step = min(step * 1.5, 2.0)
        else:
            step = max(step * 0.9, 1e-3)
    return best


def _split_budget(budget: int, n_starts: int) -> list[int]:
    base, extra = divmod(int(budget), n_starts)
    return [base + (1 if j < extra else 0) for j in range(n_starts)]


def _run_starts(worker, budgets, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(worker, range(len(budgets))))
    else:
        results = [worker(j) for j in range(len(budgets))]
    finite = [r for r in results if r != -math.inf]
    return max(finite) if finite else 0.0


def estimate_sobolev_constant(beta: float, budget: int = 2000, seed: int = 0, m: int = 4,
                              n_starts: int = 4, oversample: int = 3, ncomp: int = 3,
                              workers: int | None = None) -> float:
    """Best Rayleigh ratio found for C_S(beta) (a lower bound, not a proof).

    The budget is the total number of ratio evaluations split over a fixed
    number of independent starts; start ``j`` draws from the seed sequence
    ``[seed, j]``.
    """
    p = sobolev_exponent(beta)
    if m < 1:
        raise ConfigError(f"search truncation must be positive, got {m}")
    quad = _Quadrature(m, oversample)
    w = _sobolev_weight(m, beta)
    winv = np.zeros_like(w)
    winv[w > 0] = 1.0 / w[w > 0]
    n = 2 * m + 1
    shape = (ncomp, n, n, n)

    # the search variable g carries the H^beta weight: f_k = g_k / |k|^beta
    def objective(g):
        return quad.lp(g * winv, p) / math.sqrt(float(np.sum(np.abs(g) ** 2)))

    budgets = _split_budget(budget, n_starts)

    def worker(j):
        rng = np.random.default_rng([seed, j])
        ksq = wavenumber_sq(m)
        decay = np.where(ksq > 0, (1.0 + ksq) ** -0.75, 0.0)
        return _ascent(objective, _random_start(rng, shape, decay), rng, budgets[j])

    return _run_starts(worker, budgets, workers)


def interp_ratio(nodes: np.ndarray, alpha: float, T: float, oversample: int = 3,
                 n_gauss: int = 4) -> float:
    """Ratio of the interpolation inequality defining C_I(alpha, T) on Q_{2pi}.

    ``nodes`` has shape (P + 1, 3, n, n, n): coefficient cubes at the equally
    spaced times j T / P, linearly interpolated in between.  For piecewise
    linear coefficients |f(t)|^2_alpha is convex on each piece, so the sup over
    [0, T] is attained at a node; the L^2-in-time norm is integrated exactly by
    Gauss-Legendre, and so is the L^4 norm up to the quadrature in time.
    """
    check_alpha(alpha)
    P = nodes.shape[0] - 1
    m = (nodes.shape[-1] - 1) // 2
    p = 3.0 / (2.0 - alpha)
    ksq = wavenumber_sq(m)
    amp = (np.abs(nodes) ** 2).sum(axis=1)
    sup_a = float(np.max((ksq ** alpha * amp).sum(axis=(1, 2, 3))))
    N = oversample * (2 * m + 1)
    cell = (TWO_PI / N) ** 3
    d = 1j * np.array(np.meshgrid(*(np.arange(-m, m + 1),) * 3, indexing="ij"))
    grads = np.stack([to_physical((node[:, None] * d[None]).reshape(9, *node.shape[1:]), N)
                      for node in nodes])
    if P == 0:
        grads = np.concatenate([grads, grads])
        nodes = np.concatenate([nodes, nodes])
        P = 1
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    h = T / P
    num = 0.0
    l2 = 0.0
    for j in range(P):
        for x, wq in zip(xg, wg):
            s = 0.5 * (x + 1.0)
            g = (1 - s) * grads[j] + s * grads[j + 1]
            lp = (np.sum(np.sqrt((g ** 2).sum(axis=0)) ** p) * cell) ** (1.0 / p)
            num += 0.5 * h * wq * lp ** 4
            c = (1 - s) * nodes[j] + s * nodes[j + 1]
            l2 += 0.5 * h * wq * float((ksq ** (1 + alpha) * (np.abs(c) ** 2).sum(axis=0)).sum())
    den = math.sqrt(math.sqrt(sup_a) * math.sqrt(l2))
    if den == 0.0:
        raise ConfigError("interpolation ratio undefined for the zero field")
    return num ** 0.25 / den


def estimate_interp_constant(alpha: float, T: float, budget: int = 300, seed: int = 0,
                             m: int = 4, pieces: int = 3, n_starts: int = 2,
                             oversample: int = 2, workers: int | None = None) -> float:
    """Best ratio found for C_I(alpha, T) over piecewise-linear-in-time fields."""
    check_alpha(alpha)
    if not T > 0:
        raise ConfigError(f"T must be positive, got {T}")
    n = 2 * m + 1
    shape = (pieces + 1, 3, n, n, n)
    budgets = _split_budget(budget, n_starts)

    def objective(x):
        return interp_ratio(x, alpha, T, oversample=oversample, n_gauss=3)

    def worker(j):
        rng = np.random.default_rng([seed, j, 1])
        ksq = wavenumber_sq(m)
        decay = np.where(ksq > 0, (1.0 + ksq) ** -1.0, 0.0)
        return _ascent(objective, _random_start(rng, shape, decay), rng, budgets[j])

    return _run_starts(worker, budgets, workers)


# ---------------------------------------------------------------------------
# the constant table
# ---------------------------------------------------------------------------

@dataclass
class SobolevEntry:
    beta: float
    estimate: float = 0.0
    safety: float = DEFAULT_SAFETY
    override: float | None = None
    provenance: str = "estimated"
    budget: int | None = None
    seed: int | None = None

    def __post_init__(self):
        sobolev_exponent(self.beta)
        if self.safety < 1.0:
            raise ConfigError(f"safety factor must be >= 1, got {self.safety}")
        if self.provenance not in PROVENANCES:
            raise ConfigError(f"unknown provenance {self.provenance!r}")
        if self.override is not None and self.override < self.estimate:
            raise ConfigError(f"override {self.override} for beta={self.beta} is below the "
                              f"estimated lower bound {self.estimate}")
        if self.override is None and not self.estimate > 0:
            raise ConfigError(f"entry beta={self.beta} has neither an estimate nor an override")

    @property
    def beta_star(self) -> float:
        return sobolev_exponent(self.beta)

    @property
    def effective(self) -> float:
        return self.override if self.override is not None else self.estimate * self.safety

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("beta")
        d["beta_star"] = self.beta_star
        d["effective"] = self.effective
        return d


@dataclass
class SobolevConstantTable:
    """Map beta -> C_S(beta) entry; JSON keys are beta rendered as strings."""

    entries: dict = field(default_factory=dict)

    def set(self, entry: SobolevEntry):
        self.entries[beta_key(entry.beta)] = entry

    def entry(self, beta: float) -> SobolevEntry:
        try:
            return self.entries[beta_key(beta)]
        except KeyError:
            raise ConfigError(f"constant table has no entry for beta={beta_key(beta)}; "
                              f"run estimate-constants or add an override") from None

    def value(self, beta: float) -> float:
        return self.entry(beta).effective

    def __contains__(self, beta) -> bool:
        return beta_key(beta) in self.entries

    def snapshot(self) -> dict:
        return {k: self.entries[k].to_json() for k in sorted(self.entries, key=float)}

    def to_json(self) -> str:
        return json.dumps(self.snapshot(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "SobolevConstantTable":
        table = cls()
        for key, v in doc.items():
            try:
                entry = SobolevEntry(beta=float(key), estimate=float(v.get("estimate", 0.0)),
                                     safety=float(v.get("safety", DEFAULT_SAFETY)),
                                     override=None if v.get("override") is None else float(v["override"]),
                                     provenance=v.get("provenance", "estimated"),
                                     budget=v.get("budget"), seed=v.get("seed"))
            except (TypeError, ValueError, AttributeError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"bad constant table entry {key!r}: {exc}") from exc
            table.set(entry)
        return table

    @classmethod
    def load(cls, path) -> "SobolevConstantTable":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read constant table {path}: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def with_overrides(cls, values: dict, provenance: str = "user") -> "SobolevConstantTable":
        table = cls()
        for beta, v in values.items():
            table.set(SobolevEntry(beta=float(beta), override=float(v), provenance=provenance))
        return table


def required_betas(alpha: float) -> tuple[float, float, float]:
    """The three arguments of C_S used by the bundles: 1 - alpha, 1, alpha - 1/2."""
    check_alpha(alpha)
    return (1.0 - alpha, 1.0, alpha - 0.5)


def build_table(alpha_values, budget: int = 2000, seed: int = 0, m: int = 4,
                safety: float = DEFAULT_SAFETY, table: SobolevConstantTable | None = None,
                **kwargs) -> SobolevConstantTable:
    """Estimate every beta needed for the given alpha values into a table."""
    table = table if table is not None else SobolevConstantTable()
    for alpha in alpha_values:
        for beta in required_betas(alpha):
            if beta in table:
                continue
            est = estimate_sobolev_constant(beta, budget=budget, seed=seed, m=m, **kwargs)
            table.set(SobolevEntry(beta=beta, estimate=est, safety=safety,
                                   provenance="estimated", budget=budget, seed=seed))
    return table


# ---------------------------------------------------------------------------
# bundles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantBundle:
    alpha: float
    L: float
    eps1: float
    eps2: float
    c_s: tuple
    k_28: float
    k_29: float
    k2_sec12: float
    k2_assembled: float
    k3_sec12: float
    k3_assembled: float
    k2: float
    k3: float
    k4: float
    variant: str
    c_i: float | None = None
    table: dict = field(default_factory=dict, compare=False)

    @property
    def k2_discrepancy(self) -> float:
        """k2_assembled / k2_sec12; equals (2 pi)^-3 by construction."""
        return self.k2_assembled / self.k2_sec12

    def to_json(self) -> dict:
        d = asdict(self)
        d["c_s"] = {"1-alpha": self.c_s[0], "1": self.c_s[1], "alpha-1/2": self.c_s[2]}
        d["k2_discrepancy"] = self.k2_discrepancy
        return d


def k_28(alpha: float, L: float, cs_1ma: float, cs_1: float) -> float:
    """Constant of the trilinear estimate: (2pi/L) (2pi)^-3 C_S(1-a) C_S(1)."""
    return (TWO_PI / L) * TWO_PI ** -3 * cs_1ma * cs_1


def k_29(alpha: float, L: float, cs_am: float) -> float:
    """Constant of the L^{3/(2-a)} bound: (2pi/L)^(a-2) C_S(a-1/2)."""
    return (TWO_PI / L) ** (alpha - 2.0) * cs_am


def closed_form_constants(alpha, L, eps1, eps2, cs_1ma, cs_1, cs_am):
    """K2, K3, K4 written directly in terms of C_S (introduction form)."""
    k2 = math.sqrt(2.0) * cs_1ma * cs_1 * cs_am * (TWO_PI / L) ** -1
    k3 = (eps1 ** -3 * 27.0 / 128.0 * TWO_PI ** -12 * cs_1ma ** 4 * cs_1 ** 4
          * (TWO_PI / L) ** (2.0 * (1.0 - 2.0 * alpha))
          * (1.0 + cs_am * TWO_PI ** (alpha - 2.0)) ** 4)
    k4 = 1.0 / (4.0 * eps2) * (TWO_PI / L) ** -2
    return k2, k3, k4


def assembled_constants(alpha, L, eps1, eps2, k28, k29):
    """K2, K3, K4 assembled from the two estimate constants (energy-estimate form)."""
    s = (TWO_PI / L) ** 2
    k2 = math.sqrt(2.0) * k28 * k29 * s ** (-alpha / 2.0)
    k3 = eps1 ** -3 * 27.0 / 128.0 * k28 ** 4 * s ** (-2.0 * alpha - 1.0) * (1.0 + k29 * L ** (alpha - 2.0)) ** 4
    k4 = 1.0 / (4.0 * eps2) * s ** -1
    return k2, k3, k4


def assemble_bundle(alpha: float, L: float, eps1: float, eps2: float,
                    table: SobolevConstantTable, c_i: float | None = None,
                    k2_policy: str = "conservative") -> ConstantBundle:
    """Evaluate all constants for (alpha, L, eps1, eps2).

    The two available K2 expressions differ by (2 pi)^-3.  ``k2_policy``
    selects which one is used downstream: ``conservative`` (the larger),
    ``sec12`` (closed form) or ``assembled``.  K3 uses the larger of two
    expressions that agree to rounding.
    """
    check_alpha(alpha)
    if not (eps1 > 0 and eps2 > 0):
        raise ConfigError(f"eps1, eps2 must be positive, got {eps1}, {eps2}")
    if not L > 0:
        raise ConfigError(f"L must be positive, got {L}")
    b1, b2, b3 = required_betas(alpha)
    cs = (table.value(b1), table.value(b2), table.value(b3))
    k28 = k_28(alpha, L, cs[0], cs[1])
    k29 = k_29(alpha, L, cs[2])
    k2c, k3c, k4 = closed_form_constants(alpha, L, eps1, eps2, *cs)
    k2a, k3a, _ = assembled_constants(alpha, L, eps1, eps2, k28, k29)
    if k2_policy == "conservative":
        variant = "sec12" if k2c >= k2a else "assembled"
    elif k2_policy in ("sec12", "assembled"):
        variant = k2_policy
    else:
        raise ConfigError(f"unknown K2 policy {k2_policy!r}")
    k2 = k2c if variant == "sec12" else k2a
    snap = {k: v.to_json() for k, v in sorted(table.entries.items(), key=lambda kv: float(kv[0]))
            if float(k) in (b1, b2, b3)}
    return ConstantBundle(alpha=alpha, L=L, eps1=eps1, eps2=eps2, c_s=cs, k_28=k28, k_29=k29,
                          k2_sec12=k2c, k2_assembled=k2a, k3_sec12=k3c, k3_assembled=k3a,
                          k2=k2, k3=max(k3a, k3c), k4=k4, variant=variant, c_i=c_i, table=snap)


def k5(u_lo: SpectralField, alpha: float) -> float:
    """sqrt(2) (4pi^2/L^2)^(alpha+1/2) |u (x) u|_{1+alpha,L} for the low-frequency part."""
    check_alpha(alpha)
    return math.sqrt(2.0) * u_lo.box.scale ** (alpha + 0.5) * tensor_product_norm(u_lo, 1.0 + alpha)

