"""Command-line front end.

Configuration is one JSON document; every leaf can be overridden with a
dotted ``--key=value`` flag (the value is parsed as JSON when possible)::

    nscert certify small --config run.json --box.alpha=0.75 --data.u0=u0.nscf

Exit codes: 0 pass/success, 1 criterion failed, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

from . import certify as cert
from .constants import (
    DEFAULT_SAFETY,
    SobolevConstantTable,
    SobolevEntry,
    assemble_bundle,
    build_table,
)
from .errors import ConfigError, NscertError, NumericalFailure
from .fieldio import atomic_write, decode_json, load_field, save_field
from .forcing import as_forcing
from .solver import SolverConfig, difference_trajectory, integrate
from .spectral import TWO_PI, BoxSpec, SpectralField, hs_norm, leray_project, lp_norm

log = logging.getLogger("nscert")

ENV_TABLE = "NSCERT_CONSTANTS"

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3

DEFAULTS = {
    "box": {"L": TWO_PI, "nu": 1.0, "alpha": 0.5},
    "budget": {},
    "solver": {"m": 8, "k0": 1, "dt": 0.01, "t_end": 1.0, "oversample": 3,
               "sample_every": None, "blowup_threshold": None, "adapt": 0.0},
    "constants": {"table": None, "budget": 2000, "seed": 0, "m": 4, "safety": DEFAULT_SAFETY,
                  "overrides": {}, "k2_policy": "conservative", "c_i": None, "alphas": None},
    "data": {"u0": None, "v0": None, "forcing": None, "g": None},
    "certify": {"T": None, "k0": 1, "T_max": 1.0, "resolution": 160, "form": "stated",
                "criterion": "A1", "schedule": [8, 16, 32], "tol": 0.05, "workers": None},
    "norms": {"s": [0.0, 0.5, 1.0], "p": []},
    "output": {"dir": "nscert-out"},
}


def merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides) -> dict:
    """Apply ``--a.b.c=value`` strings to a nested dict."""
    config = copy.deepcopy(config)
    for item in overrides:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form --key.path=value")
        key, value = item[2:].split("=", 1)
        parts = key.split(".")
        node = config
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
            node = nxt
        node[parts[-1]] = _parse_value(value)
    return config


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


@dataclass
class RunConfig:
    """Validated view of the JSON configuration."""

    raw: dict
    box: BoxSpec
    budget: cert.EpsilonBudget
    solver: SolverConfig
    base: Path

    @classmethod
    def from_dict(cls, doc: dict, base: Path | None = None) -> "RunConfig":
        raw = merge(DEFAULTS, doc)
        try:
            box = BoxSpec(**raw["box"])
            b = raw["budget"] or {}
            budget = replace(cert.EpsilonBudget.default(box.nu), **b)
            solver = SolverConfig(**{k: v for k, v in raw["solver"].items()})
        except TypeError as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        for section in ("constants", "data", "certify", "norms", "output"):
            if not isinstance(raw[section], dict):
                raise ConfigError(f"section {section!r} must be an object")
        return cls(raw, box, budget, solver, base or Path.cwd())

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    @property
    def out_dir(self) -> Path:
        return Path(self.raw["output"]["dir"])

    def section(self, name: str) -> dict:
        return self.raw[name]

    # ---- data --------------------------------------------------------------

    def field(self, name: str, required: bool = False) -> SpectralField | None:
        spec = self.raw["data"].get(name)
        if spec is None:
            if required:
                return SpectralField.zeros(self.box, 1)
            return None
        if isinstance(spec, dict):
            f = decode_json(json.dumps({"format": "NSCF-json", "version": 1, "L": self.box.L,
                                        "divfree": False, **spec}), self.box.nu, self.box.alpha)
        else:
            path = Path(spec)
            if not path.is_absolute():
                path = self.base / path
            try:
                f = load_field(path, self.box.nu, self.box.alpha)
            except OSError as exc:
                raise ConfigError(f"cannot read field {path}: {exc}") from exc
        if not math.isclose(f.box.L, self.box.L, rel_tol=1e-12):
            raise ConfigError(f"field {name} lives on L={f.box.L}, config has L={self.box.L}")
        f = f.replace(box=self.box)
        return f if f.divfree else leray_project(f)

    def forcing(self, name: str):
        f = self.field(name)
        return as_forcing(f)

    # ---- constants ----------------------------------------------------------

    def table(self) -> SobolevConstantTable:
        c = self.raw["constants"]
        path = c.get("table") or os.environ.get(ENV_TABLE)
        if path:
            table = SobolevConstantTable.load(path)
        else:
            table = SobolevConstantTable()
        for beta, value in (c.get("overrides") or {}).items():
            est = table.entry(float(beta)).estimate if float(beta) in table else 0.0
            table.set(SobolevEntry(beta=float(beta), estimate=est, override=float(value),
                                   provenance="user"))
        alphas = c.get("alphas") or [self.box.alpha]
        return build_table(alphas, budget=int(c["budget"]), seed=int(c["seed"]), m=int(c["m"]),
                           safety=float(c["safety"]), table=table)

    def bundle(self, L: float | None = None):
        c = self.raw["constants"]
        return assemble_bundle(self.box.alpha, self.box.L if L is None else L, self.budget.eps1,
                               self.budget.eps2, self.table(), c_i=c.get("c_i"),
                               k2_policy=c.get("k2_policy", "conservative"))


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def emit_json(out_dir: Path, name: str, doc: dict, config: RunConfig):
    """Write deterministic JSON plus a sidecar holding the timestamp."""
    atomic_write(out_dir / name, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    meta = {"written": datetime.now(timezone.utc).isoformat(), "config_sha256": config.hash,
            "file": name}
    atomic_write(out_dir / (name + ".meta"), json.dumps(meta, indent=2, sort_keys=True) + "\n")


def emit_certificate(out_dir: Path, name: str, report: cert.CertificateReport, config: RunConfig):
    report.inputs.setdefault("config_sha256", config.hash)
    report.inputs.setdefault("config", config.raw)
    emit_json(out_dir, name, report.to_dict(), config)


INDEX_COLUMNS = ("file", "criterion", "lhs", "rhs", "margin", "passed")


def index_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(INDEX_COLUMNS)
    for name, d in rows:
        w.writerow([name, d["criterion"], repr(d["lhs"]), repr(d["rhs"]), repr(d["margin"]),
                    d["passed"]])
    return buf.getvalue()


def _verdict(report: cert.CertificateReport) -> int:
    print(report.verdict())
    return EXIT_OK if report.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_estimate_constants(cfg: RunConfig, args) -> int:
    table = cfg.table()
    out = cfg.out_dir / "constants.json"
    atomic_write(out, table.to_json() + "\n")
    for key, e in table.snapshot().items():
        print(f"C_S({key}) = {e['effective']:.10g} ({e['provenance']})")
    print(f"wrote {out}")
    return EXIT_OK


def _run(cfg: RunConfig, u0, forcing=None, **changes):
    solver = replace(cfg.solver, **changes) if changes else cfg.solver
    return integrate(u0, forcing, solver, cfg.box)


def _write_trajectory(cfg: RunConfig, traj, stem: str):
    out = cfg.out_dir
    atomic_write(out / f"{stem}.csv", traj.to_csv())
    emit_json(out, f"{stem}.manifest.json", {"manifest": traj.manifest(), "config_sha256": cfg.hash}, cfg)
    save_field(out / f"{stem}.final.nscf", traj.final)


def cmd_simulate(cfg: RunConfig, args) -> int:
    u0 = cfg.field("u0", required=True)
    traj = _run(cfg, u0, cfg.forcing("forcing"))
    _write_trajectory(cfg, traj, "trajectory")
    print(f"simulate: {traj.status.kind} t={traj.final_time:.6g} steps={traj.steps}")
    return EXIT_OK if traj.status.ok else EXIT_NUMERICAL


def _T(cfg: RunConfig) -> float:
    T = cfg.section("certify").get("T")
    return cfg.solver.t_end if T is None else float(T)


def cmd_certify_small(cfg: RunConfig, args) -> int:
    u0 = cfg.field("u0", required=True)
    report = cert.check_smallness_A4(u0, cfg.forcing("forcing"), _T(cfg), cfg.bundle(), cfg.budget)
    emit_certificate(cfg.out_dir, "certificate_A4.json", report, cfg)
    return _verdict(report)


def cmd_certify_stability(cfg: RunConfig, args) -> int:
    c = cfg.section("certify")
    T = _T(cfg)
    u0 = cfg.field("u0", required=True)
    v0 = cfg.field("v0", required=True)
    f, g = cfg.forcing("forcing"), cfg.forcing("g")
    bundle = cfg.bundle()
    traj = _run(cfg, u0, f)
    if not traj.status.ok and T >= (traj.status.t or 0.0):
        raise NumericalFailure(f"reference run flagged {traj.status.kind} at t={traj.status.t}")
    _write_trajectory(cfg, traj, "reference")
    which = c.get("criterion", "A1")
    reports = []
    if which in ("A1", "both"):
        reports.append(cert.check_proximity_A1(traj, v0, g, T, bundle, cfg.budget))
    if which in ("A2", "both"):
        reports.append(cert.check_proximity_A2(traj, v0, g, T, bundle, cfg.budget))
    if not reports:
        raise ConfigError(f"certify.criterion must be A1, A2 or both, got {which!r}")
    vtraj = _run(cfg, v0, g)
    if vtraj.status.ok:
        diff = difference_trajectory(traj, vtraj)
        env = cert.gronwall_envelope(diff, bundle, cfg.budget, tol=float(c.get("tol", 0.05)))
        atomic_write(cfg.out_dir / "envelope.csv", env.to_csv())
        p1 = cert.check_stability_bound_P1(diff, bundle, cfg.budget)
        emit_certificate(cfg.out_dir, "certificate_P1.json", p1, cfg)
        print(f"envelope: {len(env.violations)} violations at tol {env.tol:g}")
    code = EXIT_OK
    for r in reports:
        emit_certificate(cfg.out_dir, f"certificate_{r.criterion}.json", r, cfg)
        code = max(code, _verdict(r))
    return code


def cmd_certify_caloric(cfg: RunConfig, args) -> int:
    c = cfg.section("certify")
    u0 = cfg.field("u0", required=True)
    res = cert.caloric_lower_bound(u0, int(c.get("k0", 1)), cfg.bundle(), cfg.budget,
                                   T_max=float(c.get("T_max", 1.0)),
                                   resolution=int(c.get("resolution", 160)),
                                   oversample=cfg.solver.oversample, form=c.get("form", "stated"))
    emit_certificate(cfg.out_dir, "certificate_A3.json", res.report, cfg)
    print(f"T0 = {res.T0:.10g} (k0={res.k0}, mu={res.mu:.6g})")
    return _verdict(res.report)


def cmd_certify_aposteriori(cfg: RunConfig, args) -> int:
    c = cfg.section("certify")
    u0 = cfg.field("u0", required=True)
    schedule = [int(n) for n in c.get("schedule", [8, 16, 32])]
    reports = cert.verify_condition_C(u0, schedule, cfg.solver, cfg.bundle(), cfg.budget, T=_T(cfg),
                                      workers=c.get("workers"))
    rows, series = [], ["n,residual_integral,lhs,rhs,passed"]
    for r in reports:
        n = r.details["n"]
        name = f"certificate_C_n{n}.json"
        emit_certificate(cfg.out_dir, name, r, cfg)
        rows.append((name, r.to_dict()))
        series.append(f"{n},{r.details.get('residual_integral', float('nan'))!r},{r.lhs!r},{r.rhs!r},{r.passed}")
        print(r.verdict() + f" n={n}")
    atomic_write(cfg.out_dir / "index.csv", index_csv(rows))
    atomic_write(cfg.out_dir / "residual_vs_n.csv", "\n".join(series) + "\n")
    first = cert.first_passing(reports)
    if first is None:
        print("condition C: no n in the schedule passes")
        return EXIT_FAIL
    print(f"condition C: certificate granted at n={first.details['n']}")
    return EXIT_OK


def cmd_norms(cfg: RunConfig, args) -> int:
    path = Path(args.snapshot)
    try:
        f = load_field(path, cfg.box.nu, cfg.box.alpha)
    except OSError as exc:
        raise ConfigError(f"cannot read snapshot {path}: {exc}") from exc
    n = cfg.section("norms")
    for s in n.get("s", []):
        print(f"|u|_{{{float(s):g},L}} = {hs_norm(f, float(s)):.15g}")
    for p in n.get("p", []):
        print(f"|u|_L^{float(p):g} = {lp_norm(f, float(p), cfg.solver.oversample):.15g}")
    return EXIT_OK


def cmd_report(cfg: RunConfig, args) -> int:
    rows = []
    for name in args.certificates:
        try:
            d = json.loads(Path(name).read_text())
            d["criterion"], d["passed"]
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot read certificate {name}: {exc}") from exc
        rows.append((Path(name).name, d))
    merged = {"certificates": {n: d for n, d in rows},
              "all_passed": all(d["passed"] for _, d in rows)}
    emit_json(cfg.out_dir, "report.json", merged, cfg)
    atomic_write(cfg.out_dir / "index.csv", index_csv(rows))
    print(f"report: {sum(d['passed'] for _, d in rows)}/{len(rows)} certificates passed")
    return EXIT_OK if merged["all_passed"] else EXIT_FAIL


CERTIFY = {"small": cmd_certify_small, "stability": cmd_certify_stability,
           "caloric": cmd_certify_caloric, "aposteriori": cmd_certify_aposteriori}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nscert", description="Navier-Stokes regularity certification toolkit",
                                epilog="Any config leaf can be overridden with --section.key=value.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        sp = sub.add_parser(name, **kw)
        sp.add_argument("--config", help="JSON configuration file")
        return sp

    add("estimate-constants", help="estimate the Sobolev constant table")
    add("simulate", help="run the Galerkin solver")
    c = add("certify", help="evaluate a criterion")
    c.add_argument("which", choices=sorted(CERTIFY))
    n = add("norms", help="print norms of a snapshot")
    n.add_argument("snapshot")
    r = add("report", help="merge certificate files")
    r.add_argument("certificates", nargs="+")
    return p


def load_config(path, overrides) -> RunConfig:
    doc, base = {}, Path.cwd()
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        base = Path(path).resolve().parent
    return RunConfig.from_dict(apply_overrides(doc, overrides), base)


def run(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, extra)
        if args.command == "estimate-constants":
            return cmd_estimate_constants(cfg, args)
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        if args.command == "certify":
            return CERTIFY[args.which](cfg, args)
        if args.command == "norms":
            return cmd_norms(cfg, args)
        return cmd_report(cfg, args)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NscertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run())
