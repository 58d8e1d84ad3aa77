"""Experiment runner: JSON config in, ``report.json`` and CSV tables out.

Usage::

    bachflow <suite> --config cfg.json [--out DIR] [--seed S] [--n N] [--grid 80,80]

Exit codes: 0 all checks pass, 1 some check fails, 2 configuration
error, 3 numerical abort (flow blow-up).
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .curvature import GaugeParams, MetricField, flow_rhs
from .flow import (
    FlowBlowUp,
    decay_rate_fit,
    linear_flow_slab,
    nonlinear_flow_torus,
    torus_tt_mode,
)
from .indicial import (
    SUBSPACES,
    expected_roots_at_zero,
    indicial_result,
    roots_csv,
    scan_half_plane,
    thresholds,
)
from .linearized import (
    adjoint_defect,
    asymmetry_defect,
    gauge_sensitive_pair,
    linearization_check,
)
from .model_spaces import make_model
from .spectral import (
    COMPONENTS,
    rayleigh_sample,
    sphere_trace_kernel,
    torus_mode_check,
    torus_mode_spectrum,
    weitzenbock_suite,
)
from .tensor_fields import l2_norm_sq, random_field

SCHEMA_VERSION = 1
PLUMBING = "plumbing"
SCOPE_NOTE = ("Long-time nonlinear convergence on hyperbolic space is not simulated; the identity, "
              "indicial-scan and Rayleigh-sampling suites are its property-based substitute.")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

TOP_KEYS = {"schema_version", "suite", "model", "seed", "seeds", "tolerance", "params", "output"}
MODEL_KEYS = {"c", "n", "chart", "grid", "order", "active", "bounds", "derivative", "chart_params"}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``diagnostics`` lists every problem found."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class CheckError(RuntimeError):
    """A module error raised while evaluating the named check."""

    def __init__(self, check_id: str, cause: Exception):
        self.check_id = check_id
        super().__init__(f"check {check_id!r} failed to evaluate: {cause}")


# ---------------------------------------------------------------------- records
@dataclass
class CheckRecord:
    check_id: str
    anchor: str
    measured: float
    expected: float
    tolerance: float
    relation: str  # "<=", ">=" or "=="
    passed: bool

    @classmethod
    def compare(cls, check_id: str, anchor: str, measured, expected, tolerance: float,
                relation: str = "<=") -> "CheckRecord":
        m, e = float(measured), float(expected)
        if relation == "<=":
            ok = m <= e + tolerance
        elif relation == ">=":
            ok = m >= e - tolerance
        elif relation == "==":
            ok = abs(m - e) <= tolerance
        else:
            raise ValueError(f"unknown relation {relation!r}")
        return cls(check_id, anchor, m, e, float(tolerance), relation, bool(ok and np.isfinite(m)))


@dataclass
class SuiteReport:
    suite: str
    records: list = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def failures(self) -> list:
        return [r for r in self.records if not r.passed]

    def to_dict(self, timestamp: str | None = None) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "suite": self.suite,
            "timestamp": timestamp,
            "passed": self.passed,
            "counts": {"checks": len(self.records), "failed": len(self.failures)},
            "environment": self.environment,
            "notes": self.notes,
            "records": [asdict(r) for r in self.records],
            "tables": sorted(self.tables),
        }


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


# ---------------------------------------------------------------------- config
DEFAULT_MODEL = {
    "identities": {"c": -1, "n": 4, "chart": "hyperbolic", "grid": [80, 80], "order": 8},
    "spectra": {"c": -1, "n": 4, "chart": "hyperbolic", "grid": [48, 48], "order": 6,
                "chart_params": {"x_range": [0.1, 10.0], "y_range": [-5.0, 5.0]}},
    "torus-spectrum": {"c": 0, "n": 4, "chart": "torus", "grid": [32, 32, 32, 32], "order": 8},
    "sphere-kernel": {"c": 1, "n": 4},
    "indicial-table": {"c": -1, "n": 4},
    "indicial-scan": {"c": -1, "n": 4},
    "self-adjoint": {"c": -1, "n": 4, "chart": "hyperbolic", "grid": [80, 80], "order": 8,
                     "chart_params": {"x_range": [0.1, 10.0], "y_range": [-5.0, 5.0]}},
    "linearization": {"c": -1, "n": 4, "chart": "hyperbolic", "grid": [80, 80], "order": 8,
                      "chart_params": {"x_range": [0.1, 10.0], "y_range": [-5.0, 5.0]}},
    "torus-flow": {"c": 0, "n": 4, "chart": "torus", "grid": [16], "order": 8},
    "nonlinear-flow": {"c": 0, "n": 4, "chart": "torus", "grid": [8], "derivative": "spectral"},
}

DEFAULT_TOLERANCE = {
    "identities": 1e-4, "spectra": 1e-3, "torus-spectrum": 1e-3, "sphere-kernel": 1e-9,
    "indicial-table": 1e-12, "indicial-scan": 1e-9, "self-adjoint": 1e-6, "linearization": 1e-9,
    "torus-flow": 5e-3, "nonlinear-flow": 5e-2,
}

DEFAULT_SEEDS = {"identities": 4, "spectra": 8, "self-adjoint": 4, "linearization": 2}


def _as_list(value, key: str, diags: list[str], kind=int) -> list | None:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [kind(value)]
    if isinstance(value, (list, tuple)) and all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                                for x in value):
        return [kind(x) for x in value]
    diags.append(f"{key}: expected a number or a list of numbers, got {value!r}")
    return None


def check_config(cfg) -> list[str]:
    """Every problem with a parsed config (empty when valid)."""
    diags: list[str] = []
    if not isinstance(cfg, dict):
        return ["config: top level must be a JSON object"]
    for key in sorted(set(cfg) - TOP_KEYS):
        diags.append(f"unknown key {key!r} (allowed: {', '.join(sorted(TOP_KEYS))})")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        diags.append(f"schema_version: expected {SCHEMA_VERSION}, got {cfg.get('schema_version')!r}")
    suite = cfg.get("suite")
    if suite is not None and suite not in SUITES:
        diags.append(f"suite: unknown suite {suite!r} (choose from {', '.join(list_suites())})")
    model = cfg.get("model", {})
    if not isinstance(model, dict):
        diags.append("model: must be an object")
    else:
        for key in sorted(set(model) - MODEL_KEYS):
            diags.append(f"unknown key 'model.{key}' (allowed: {', '.join(sorted(MODEL_KEYS))})")
        if "c" in model and model["c"] not in (-1, 0, 1):
            diags.append(f"model.c: must be -1, 0 or 1, got {model['c']!r}")
        if "n" in model and (not isinstance(model["n"], int) or isinstance(model["n"], bool) or model["n"] < 3):
            diags.append(f"model.n: must be an integer >= 3, got {model['n']!r}")
        if "grid" in model:
            grid = _as_list(model["grid"], "model.grid", diags)
            if grid is not None and any(g < 2 for g in grid):
                diags.append("model.grid: every axis needs at least 2 points")
        if "order" in model and (not isinstance(model["order"], int) or model["order"] < 2 or model["order"] % 2):
            diags.append(f"model.order: must be an even integer >= 2, got {model['order']!r}")
        if "chart_params" in model and not isinstance(model["chart_params"], dict):
            diags.append("model.chart_params: must be an object")
    if "seeds" in cfg:
        seeds = cfg["seeds"]
        if isinstance(seeds, bool) or not (
                (isinstance(seeds, int) and seeds >= 0)
                or (isinstance(seeds, list) and all(isinstance(s, int) and not isinstance(s, bool) and s >= 0
                                                    for s in seeds))):
            diags.append(f"seeds: expected a count >= 0 or a list of non-negative integers, got {seeds!r}")
    if "seed" in cfg and (not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool)
                          or not 0 <= cfg["seed"] < 2 ** 64):
        diags.append(f"seed: expected an unsigned 64-bit integer, got {cfg['seed']!r}")
    tol = cfg.get("tolerance")
    if tol is not None:
        items = tol.items() if isinstance(tol, dict) else [("", tol)]
        for name, value in items:
            key = f"tolerance.{name}" if name else "tolerance"
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                diags.append(f"{key}: must be a number, got {value!r}")
            elif not value > 0:
                diags.append(f"{key}: tolerances must be > 0, got {value!r}")
    if "params" in cfg and not isinstance(cfg["params"], dict):
        diags.append("params: must be an object")
    if "output" in cfg and not isinstance(cfg["output"], str):
        diags.append("output: must be a path string")
    return diags


def load_config(path) -> dict:
    """Parse and validate a config file; raises :class:`ConfigError`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc.strerror or exc}"]) from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    diags = check_config(cfg)
    if diags:
        raise ConfigError(diags)
    return cfg


def validate_config(path) -> list[str]:
    """Diagnostics for the config at ``path``; an empty list means valid."""
    try:
        load_config(path)
    except ConfigError as exc:
        return exc.diagnostics
    return []


def dump_config(cfg: dict) -> str:
    """Canonical JSON text; parsing it back gives an equal config."""
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


@dataclass
class Resolved:
    """A config with suite defaults filled in."""

    suite: str
    model: dict
    seeds: list
    tolerance: float
    tolerances: dict
    params: dict
    output: str | None

    def tol(self, name: str, default: float | None = None) -> float:
        return float(self.tolerances.get(name, self.tolerance if default is None else default))

    def space(self, **over):
        m = {**self.model, **over}
        kw = dict(m.get("chart_params", {}))
        for key in ("x_range", "y_range", "bounds"):
            if key in kw:
                kw[key] = [tuple(b) for b in kw[key]] if key == "bounds" else tuple(kw[key])
        if "bounds" in m:
            kw["bounds"] = [tuple(b) for b in m["bounds"]]
        grid = m.get("grid", [16])
        grid = [grid] if isinstance(grid, int) else list(grid)
        active = m.get("active", list(range(len(grid))))
        shape = grid[0] if len(set(grid)) == 1 else grid
        return make_model(int(m["c"]), int(m["n"]), m.get("chart"), shape=shape, active=active,
                          order=int(m.get("order", 4)), derivative=m.get("derivative", "fd"), **kw)


def resolve(cfg: dict, suite: str | None = None, *, seed: int | None = None, n: int | None = None,
            grid: list | None = None, out: str | None = None) -> Resolved:
    suite = suite or cfg.get("suite")
    if suite is None:
        raise ConfigError(["suite: no suite given on the command line or in the config"])
    if suite not in SUITES:
        raise ConfigError([f"suite: unknown suite {suite!r} (choose from {', '.join(list_suites())})"])
    if cfg.get("suite") not in (None, suite):
        raise ConfigError([f"suite: config is for {cfg['suite']!r} but {suite!r} was requested"])
    model = copy.deepcopy(DEFAULT_MODEL[suite])
    user_model = cfg.get("model", {})
    if "chart" in user_model and user_model["chart"] != model.get("chart"):
        model.pop("chart_params", None)
    model.update(copy.deepcopy(user_model))
    if n is not None:
        model["n"] = int(n)
    if grid is not None:
        model["grid"] = list(grid)
    base = int(cfg.get("seed", 0) if seed is None else seed)
    seeds = cfg.get("seeds", DEFAULT_SEEDS.get(suite, 1))
    seeds = [base + i for i in range(seeds)] if isinstance(seeds, int) else [base + s for s in seeds]
    tol = cfg.get("tolerance")
    tolerances = tol if isinstance(tol, dict) else {}
    default = tol if isinstance(tol, (int, float)) else DEFAULT_TOLERANCE[suite]
    default = tolerances.get("default", default)
    return Resolved(suite, model, seeds, float(default), dict(tolerances), dict(cfg.get("params", {})),
                    out or cfg.get("output"))


def threads() -> int:
    """Worker count from ``BACHFLOW_THREADS`` (default 1)."""
    raw = os.environ.get("BACHFLOW_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError([f"BACHFLOW_THREADS: expected a positive integer, got {raw!r}"]) from None


def _map(fn: Callable, items: list) -> list:
    """Ordered map, concurrent when ``BACHFLOW_THREADS`` > 1."""
    workers = min(threads(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def _guard(check_id: str, fn: Callable, *args, **kw):
    try:
        return fn(*args, **kw)
    except (FlowBlowUp, CheckError):
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the check id attached
        raise CheckError(check_id, exc) from exc


# ---------------------------------------------------------------------- suites
IDENTITY_ANCHORS = {
    "koiso": "Koiso-type integral identity for |T|^2",
    "A_norm": "integral identity for |A|^2 of a trace-free tensor",
    "weitzenbock": "Weitzenbock formula for 1-forms",
    "commuted_rough_laplacian": "rough Laplacian commuted past K",
    "K_hodge": "K composed with the Hodge Laplacian",
    "KstarK": "K*K in terms of Hodge operators",
    "delta_star_commutator": "commutator of delta* with the rough Laplacian",
    "K_commutator": "commutator of K with the rough Laplacian",
    "bilaplacian_commutator": "bilaplacian commutator lemma",
    "fourth_order_commutator": "fourth-order commutator lemma",
    "imK_expansion": "quadratic form of L on the image of K",
}


def suite_identities(cfg: Resolved, report: SuiteReport):
    space = cfg.space()
    decay = float(cfg.params.get("decay", 6.5))
    tol = cfg.tolerance

    def one(seed):
        alpha = random_field(space, 1, 2 * seed, decay=decay)
        v = random_field(space, 2, 2 * seed + 1, symmetry="sym2", decay=decay)
        return seed, _guard(f"identities/seed={seed}", weitzenbock_suite, alpha, v)

    rows = []
    for seed, results in _map(one, cfg.seeds):
        for r in results:
            rows.append((seed, r.name, r.residual, r.scale, r.relative))
            report.records.append(CheckRecord.compare(
                f"identity/{r.name}/seed={seed}", IDENTITY_ANCHORS.get(r.name, r.name), r.relative, 0.0, tol))
    report.tables["identities.csv"] = _csv(["seed", "identity", "residual", "scale", "relative"], rows)


def suite_spectra(cfg: Resolved, report: SuiteReport):
    space = cfg.space()
    comps = cfg.params.get("components", list(COMPONENTS))
    field_kw = {k: cfg.params[k] for k in ("decay", "max_frequency", "modes") if k in cfg.params}
    field_kw.setdefault("decay", 3.0)
    field_kw.setdefault("max_frequency", 1)
    tol = cfg.tolerance
    rows = []
    for comp in comps:
        rep = _guard(f"spectra/{comp}", rayleigh_sample, comp, space, cfg.seeds, tolerance=tol, **field_kw)
        for s, q, ok in zip(rep.seeds, rep.quotients, rep.passed):
            rows.append((comp, s, q, rep.bound))
        if rep.seeds:
            report.records.append(CheckRecord.compare(
                f"rayleigh/{comp}/max", f"nonpositivity of L on the {comp} component",
                rep.max_quotient, rep.bound, tol))
            report.records.append(CheckRecord.compare(
                f"rayleigh/{comp}/nonpositive", "(v, Lv) <= 0", rep.max_quotient, 0.0,
                cfg.tol("nonpositive", 1e-6)))
    report.tables["rayleigh.csv"] = _csv(["component", "seed", "quotient", "bound"], rows)


def suite_torus_spectrum(cfg: Resolved, report: SuiteReport):
    space = cfg.space()
    modes = cfg.params.get("modes", [[1, 0, 0, 0], [1, 1, 0, 0], [1, 1, 1, 0], [2, 0, 0, 0]])
    rows = []
    for k in modes:
        kid = "".join(str(x) for x in k)
        err = _guard(f"torus-mode/{kid}", torus_mode_check, space, k, cfg.seeds[0] if cfg.seeds else 0)
        spec = torus_mode_spectrum(k, space.n, space.chart.period)
        rows.append((kid, spec["k_squared"], spec["eigenvalue"], err))
        report.records.append(CheckRecord.compare(
            f"torus-mode/{kid}", "Fourier symbol of L on the flat torus", err, 0.0, cfg.tolerance))
    report.tables["torus_modes.csv"] = _csv(["k", "k_squared", "eigenvalue", "relative_error"], rows)


def suite_sphere_kernel(cfg: Resolved, report: SuiteReport):
    n = int(cfg.model["n"])
    degree = int(cfg.params.get("degree", 4))
    res = _guard("sphere-kernel", sphere_trace_kernel, n, degree)
    report.records.append(CheckRecord.compare(
        "sphere-kernel/dimension", "kernel of L on trace tensors of the round sphere",
        res.kernel_dimension, n + 1, 0.0, "=="))
    report.records.append(CheckRecord.compare(
        "sphere-kernel/separation", PLUMBING, res.separation, float(cfg.params.get("separation", 1e6)), 0.0, ">="))
    report.tables["sphere_kernel.csv"] = _csv(
        ["index", "singular_value"], [(i, s) for i, s in enumerate(res.singular_values)])


def suite_indicial_table(cfg: Resolved, report: SuiteReport):
    dims = cfg.params.get("n", [cfg.model["n"]])
    dims = [dims] if isinstance(dims, int) else dims
    results = []
    for n in dims:
        res = _guard(f"indicial/n={n}", indicial_result, int(n), 0.0, "dx")
        results.append(res)
        exp = expected_roots_at_zero(int(n))
        for s in SUBSPACES:
            got = np.sort_complex(res.roots[s])
            err = float(np.max(np.abs(got - np.sort(exp[s]))))
            report.records.append(CheckRecord.compare(
                f"indicial/n={n}/{s}", "integer indicial roots at lambda = 0", err, 0.0, cfg.tolerance))
        report.records.append(CheckRecord.compare(
            f"indicial/n={n}/radius", "indicial radius (n-3)/2", res.radius, (n - 3) / 2.0, cfg.tolerance, "=="))
    report.tables["indicial_roots.csv"] = roots_csv(results)


def suite_indicial_scan(cfg: Resolved, report: SuiteReport):
    dims = cfg.params.get("n", [cfg.model["n"]])
    dims = [dims] if isinstance(dims, int) else dims
    rows = []
    for n in dims:
        n = int(n)
        th = thresholds(n)
        res = _guard(f"indicial-scan/n={n}", scan_half_plane, n)
        rows.append((n, th.eps_V0, th.eps_V1, th.eps_V2, th.eps_V3, th.a, th.r, res.points, res.min_radius,
                     res.argmin.real, res.argmin.imag))
        report.records.append(CheckRecord.compare(
            f"indicial-scan/n={n}", "uniform indicial radius on Re lambda > -a", res.min_radius, th.r,
            cfg.tolerance, ">="))
    report.tables["indicial_scan.csv"] = _csv(
        ["n", "eps_V0", "eps_V1", "eps_V2", "eps_V3", "a", "r", "points", "min_radius", "argmin_re",
         "argmin_im"], rows)


def suite_self_adjoint(cfg: Resolved, report: SuiteReport):
    space = cfg.space()
    decay = float(cfg.params.get("decay", 6.5))
    rows = []

    def pair(seed):
        u = random_field(space, 2, 2 * seed, symmetry="sym2", max_frequency=1, decay=decay)
        w = random_field(space, 2, 2 * seed + 1, symmetry="sym2", max_frequency=1, decay=decay)
        return u, w

    def one(seed):
        u, w = pair(seed)
        sym = _guard(f"self-adjoint/seed={seed}", asymmetry_defect, u, w)
        rng = np.random.default_rng(seed)
        g = GaugeParams(*rng.uniform(-1.0, 1.0, 2))
        adj = _guard(f"adjoint/seed={seed}", adjoint_defect, u, w, g)
        return seed, sym, g, adj

    for seed, sym, g, adj in _map(one, cfg.seeds):
        rows.append((f"seed={seed}", "self_adjoint", 0.0, 0.0, sym))
        rows.append((f"seed={seed}", "printed_adjoint", g.mu, g.nu, adj))
        report.records.append(CheckRecord.compare(
            f"self-adjoint/seed={seed}", "L is formally self-adjoint in the chosen gauge", sym, 0.0,
            cfg.tolerance))
        report.records.append(CheckRecord.compare(
            f"adjoint/seed={seed}", "printed formal adjoint L*", adj, 0.0, cfg.tol("adjoint", cfg.tolerance)))
    if space.c == -1 and space.grid.ndim == 2:
        seed = int(cfg.params.get("designated_seed", 0))
        u, w = gauge_sensitive_pair(space, seed)
        d0 = _guard("gauge-sensitive-pair", asymmetry_defect, u, w, GaugeParams(0.0, 0.0))
        rows.append((f"designated={seed}", "zero_gauge", 0.0, 0.0, d0))
        report.records.append(CheckRecord.compare(
            "asymmetry/zero-gauge", "the gauge choice is what makes L self-adjoint", d0,
            float(cfg.params.get("min_asymmetry", 1e-3)), 0.0, ">="))
    report.tables["asymmetry.csv"] = _csv(["pair", "kind", "mu", "nu", "defect"], rows)


def suite_linearization(cfg: Resolved, report: SuiteReport):
    space = cfg.space()
    decay = float(cfg.params.get("decay", 6.5))
    amp = float(cfg.params.get("amplitude", 0.08))
    min_order = float(cfg.params.get("min_order", 1.8))

    def one(seed):
        v = random_field(space, 2, seed, symmetry="sym2", max_frequency=1, decay=decay)
        return seed, _guard(f"linearization/seed={seed}", linearization_check, v, amp)

    rows = []
    for seed, res in _map(one, cfg.seeds):
        for s, d in zip(res.steps, res.defects):
            rows.append((seed, s, d, res.order))
        report.records.append(CheckRecord.compare(
            f"linearization/seed={seed}", "L/(n-2) linearizes the flow", res.order, min_order,
            cfg.tolerance, ">="))
    report.tables["linearization.csv"] = _csv(["seed", "step", "defect", "order"], rows)


def suite_torus_flow(cfg: Resolved, report: SuiteReport):
    space = cfg.space()
    n = space.n
    k = list(cfg.params.get("k", [1, 0, 0, 0]))
    pred = -torus_mode_spectrum(k, n, space.chart.period)["flow_rate"]  # decay rate
    total = float(cfg.params.get("time", 0.5 / pred))
    v0 = torus_tt_mode(space, k)
    dt = cfg.params.get("dt")
    traj = linear_flow_slab(v0, total, dt=None if dt is None else float(dt),
                            samples=int(cfg.params.get("samples", 20)))
    fit = decay_rate_fit(traj)
    err = abs(fit.rate - pred) / abs(pred)
    report.records.append(CheckRecord.compare(
        "torus-flow/rate", "linear flow decays at sigma(k)/(n-2)", err, 0.0, cfg.tolerance))
    report.tables["torus_flow.csv"] = traj.to_csv()
    report.tables["torus_flow_fit.csv"] = _csv(
        ["k", "predicted_rate", "fitted_rate", "relative_error", "r2"],
        [("".join(str(x) for x in k), pred, fit.rate, err, fit.r2)])


def suite_nonlinear_flow(cfg: Resolved, report: SuiteReport):
    space = cfg.space()
    n = space.n
    k = list(cfg.params.get("k", [1, 0, 0, 0]))
    eps = float(cfg.params.get("amplitude", 1e-3))
    total = float(cfg.params.get("time", 5e-3))
    probe = torus_tt_mode(space, k)
    f_h = flow_rhs(MetricField.background(space))
    stationary = float(np.sqrt(l2_norm_sq(f_h)))
    report.records.append(CheckRecord.compare(
        "nonlinear-flow/stationary", "the flat metric is a fixed point", stationary, 0.0,
        cfg.tol("stationary", 1e-10)))
    g0 = MetricField.perturbed(probe, eps)
    traj = nonlinear_flow_torus(g0, total, samples=int(cfg.params.get("samples", 20)), probe=probe)
    vol = traj.diagnostics["volume"]
    drift = float(np.max(np.abs(vol - vol[0])) / (traj.times[-1] - traj.times[0]))
    report.records.append(CheckRecord.compare(
        "nonlinear-flow/volume", "first variation of volume vanishes along the flow", drift, 0.0,
        cfg.tol("volume", 1e-8)))
    pred = -torus_mode_spectrum(k, n, space.chart.period)["flow_rate"]
    fit = decay_rate_fit(traj, key="mode_amplitude")
    err = abs(fit.rate - pred) / abs(pred)
    report.records.append(CheckRecord.compare(
        "nonlinear-flow/rate", "small TT perturbations decay at the linear rate", err, 0.0, cfg.tolerance))
    report.tables["nonlinear_flow.csv"] = traj.to_csv()


SUITES: dict[str, Callable] = {
    "identities": suite_identities,
    "spectra": suite_spectra,
    "torus-spectrum": suite_torus_spectrum,
    "sphere-kernel": suite_sphere_kernel,
    "indicial-table": suite_indicial_table,
    "indicial-scan": suite_indicial_scan,
    "self-adjoint": suite_self_adjoint,
    "linearization": suite_linearization,
    "torus-flow": suite_torus_flow,
    "nonlinear-flow": suite_nonlinear_flow,
}


def list_suites() -> list[str]:
    return sorted(SUITES)


def _environment(cfg: Resolved) -> dict:
    return {
        "version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "model": cfg.model,
        "seeds": cfg.seeds,
        "tolerance": cfg.tolerance,
        "params": cfg.params,
    }


def run_suite(cfg: dict | Resolved, suite: str | None = None, **overrides) -> SuiteReport:
    """Run one suite and, when an output directory is configured, write its files.

    Raises :class:`ConfigError` for bad input, :class:`CheckError` when a
    module fails inside a check, and lets :class:`FlowBlowUp` through.
    """
    if not isinstance(cfg, Resolved):
        diags = check_config(cfg)
        if diags:
            raise ConfigError(diags)
        cfg = resolve(cfg, suite, **overrides)
    report = SuiteReport(cfg.suite, environment=_environment(cfg), notes=[SCOPE_NOTE])
    SUITES[cfg.suite](cfg, report)
    if cfg.output:
        write_report(report, cfg.output)
    return report


def write_report(report: SuiteReport, out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        (out / "report.json").write_text(json.dumps(report.to_dict(stamp), indent=2, sort_keys=True) + "\n")
        for name, body in report.tables.items():
            (out / name).write_text(body)
    except OSError as exc:
        raise ConfigError([f"output: cannot write to {out}: {exc.strerror or exc}"]) from None
    return out


# ---------------------------------------------------------------------- entry point
def _grid_arg(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.replace("x", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("grid needs at least one integer")
    return vals


def _seed_arg(text: str) -> int:
    val = int(text)
    if not 0 <= val < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return val


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bachflow", description="Run numerical checks of the linearized Bach flow.")
    p.add_argument("suite", help="suite name, 'list' to print the registered suites, or 'validate'")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out", help="output directory for report.json and CSV tables")
    p.add_argument("--seed", type=_seed_arg, help="base seed added to every configured seed")
    p.add_argument("--n", type=int, help="override the dimension")
    p.add_argument("--grid", type=_grid_arg, help="override grid points per axis, e.g. 80,80")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.suite == "list":
        print("\n".join(list_suites()))
        return EXIT_OK
    if args.suite == "validate":
        if not args.config:
            print("error: validate needs --config", file=sys.stderr)
            return EXIT_CONFIG
        diags = validate_config(args.config)
        for d in diags:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG if diags else EXIT_OK
    try:
        threads()
        cfg = load_config(args.config) if args.config else {"schema_version": SCHEMA_VERSION}
        resolved = resolve(cfg, args.suite, seed=args.seed, n=args.n, grid=args.grid, out=args.out)
        report = run_suite(resolved)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    except FlowBlowUp as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except CheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for r in report.records:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.check_id}: {r.measured:.6g} {r.relation} {r.expected:.6g} (tol {r.tolerance:.1e})"
              f" [{r.anchor}]")
    print(f"{len(report.records) - len(report.failures)}/{len(report.records)} checks passed")
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
