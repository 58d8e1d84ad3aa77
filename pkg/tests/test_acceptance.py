"""Acceptance criteria, one test each.

Every test prints a single ``CRITERION k PASS|FAIL`` line; the lines are
also collected into a section of the terminal summary.  Long-time flow
convergence on the hyperbolic background is not simulated: the indicial
scan, the identity suite and the Rayleigh sampling stand in for it.
"""
import time

import numpy as np
import pytest

from bachflow.cli import run_suite
from bachflow.indicial import (
    SUBSPACES,
    expected_roots_at_zero,
    indicial_radius,
    indicial_roots,
    scan_half_plane,
    thresholds,
)
from bachflow.model_spaces import make_model
from bachflow.spectral import claimed_bound, rayleigh_sample, sphere_trace_kernel, weitzenbock_suite
from bachflow.tensor_fields import random_field

from conftest import ACCEPTANCE_LINES, TORIC_BOX, hyperbolic, toric

NOTE = ("long-time convergence on the hyperbolic background is not simulated; "
        "criteria 2, 5 and 6 substitute for it")


def report(k: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {k} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_1_indicial_table():
    t0 = time.perf_counter()
    worst_root, worst_radius = 0.0, 0.0
    for n in range(4, 11):
        expect = expected_roots_at_zero(n)
        for s in SUBSPACES:
            got = np.sort_complex(indicial_roots(s, n, 0.0, basis="dx"))
            worst_root = max(worst_root, float(np.max(np.abs(got - np.sort(expect[s])))))
        worst_radius = max(worst_radius, abs(indicial_radius(n, 0.0) - (n - 3) / 2))
    elapsed = time.perf_counter() - t0
    ok = worst_root <= 1e-12 and worst_radius <= 1e-12 and elapsed < 1.0
    report(1, ok, f"n=4..10 root error {worst_root:.1e}, radius error {worst_radius:.1e} "
                  f"(tol 1e-12), {elapsed:.3f}s (< 1s)")


def test_criterion_2_thresholds_and_scan():
    t0 = time.perf_counter()
    closed = []
    for n in range(4, 11):
        th = thresholds(n)
        closed.append(abs(th.eps_V1 - ((n - 2) ** 2 - 1) ** 2 / 32) < 1e-12 and th.r == (n - 1) / 8)
    th4 = thresholds(4)
    closed.append(abs(th4.a - 14 / 128) < 1e-15 and th4.r == 0.375)
    margins, points = [], []
    for n in (4, 5, 6):
        res = scan_half_plane(n)
        margins.append(res.min_radius - ((n - 1) / 8 - 1e-9))
        points.append(res.points)
    elapsed = time.perf_counter() - t0
    ok = all(closed) and min(margins) >= 0 and min(points) >= 10_000 and elapsed < 60
    report(2, ok, f"closed forms {'ok' if all(closed) else 'wrong'}; scan n=4,5,6 with >= {min(points)} points "
                  f"up to |Im| 1e4, worst radius margin {min(margins):.3e} (>= 0), {elapsed:.1f}s (< 60s)")


def test_criterion_3_sphere_kernel():
    res = sphere_trace_kernel(4)
    ok = res.kernel_dimension == 5 and res.separation >= 1e6
    report(3, ok, f"kernel dimension {res.kernel_dimension} (want 5), separation {res.separation:.2e} (>= 1e6)")


@pytest.mark.slow
def test_criterion_4_torus_symbol_and_flow():
    modes = [[1, 0, 0, 0], [1, 1, 0, 0], [1, 1, 1, 0], [1, 1, 1, 1], [2, 0, 0, 0]]
    sym = run_suite({"schema_version": 1, "suite": "torus-spectrum", "params": {"modes": modes},
                     "tolerance": 1e-3})
    worst = max(r.measured for r in sym.records)
    flow = run_suite({"schema_version": 1, "suite": "torus-flow", "tolerance": 5e-3})
    rate = flow.records[0].measured
    ok = sym.passed and flow.passed
    report(4, ok, f"32^4 symbol worst rel error {worst:.2e} over |k|^2 <= 4 (tol 1e-3); "
                  f"flow rate error {rate:.2e} (tol 5e-3)")


@pytest.mark.slow
def test_criterion_5_identity_suite():
    t0 = time.perf_counter()
    seeds = range(64)

    def worst_by_identity(shape):
        sp = hyperbolic(shape, 8, x_range=(0.5, 2.0), y_range=(-1.0, 1.0))
        worst = {}
        for s in seeds:
            alpha = random_field(sp, 1, 2 * s, decay=6.5)
            v = random_field(sp, 2, 2 * s + 1, symmetry="sym2", decay=6.5)
            for r in weitzenbock_suite(alpha, v):
                worst[r.name] = max(worst.get(r.name, 0.0), r.relative)
        return worst

    coarse = worst_by_identity(80)
    fine = worst_by_identity(160)
    orders = {k: np.log2(coarse[k] / fine[k]) for k in coarse}
    elapsed = time.perf_counter() - t0
    worst = max(coarse.values())
    slowest = min(orders.values())
    ok = worst <= 1e-4 and slowest >= 3.5 and elapsed < 600
    report(5, ok, f"64 seeds, 11 identities: worst residual/scale {worst:.2e} at 80^2 (tol 1e-4), "
                  f"lowest order {slowest:.2f} to 160^2 (>= 3.5), {elapsed:.0f}s (< 600s)")


def _sample_spaces(c, n):
    if c == -1:
        return hyperbolic(48, 6, n=n)
    if c == 0:
        return make_model(0, n, "torus", shape=16, active=(0, 1), derivative="spectral")
    if n == 6:
        # the n = 6 sphere chart has three angles
        return make_model(1, 6, "toric", shape=16, order=4)
    return toric(40, 6, n=n)


@pytest.mark.slow
def test_criterion_6_rayleigh_sampling():
    seeds = range(64)
    worst_pos, worst_margin, failures = -np.inf, -np.inf, []
    for c in (-1, 0, 1):
        for n in (4, 5, 6):
            sp = _sample_spaces(c, n)
            for comp in ("trace", "imK", "TT"):
                rep = rayleigh_sample(comp, sp, seeds, decay=3.0, max_frequency=1)
                q = rep.max_quotient
                worst_pos = max(worst_pos, q)
                bound = claimed_bound(comp, c, n)
                if c != 0 and not (c == 1 and comp == "trace"):
                    worst_margin = max(worst_margin, q - bound)
                if q > 1e-6 or q > bound + 1e-3 or len(rep.quotients) != 64:
                    failures.append(f"c={c} n={n} {comp}: {q:.3g} vs {bound:.3g}")
    ok = not failures
    report(6, ok, f"64 seeds x 3 components x c in (-1,0,1) x n in (4,5,6): max quotient {worst_pos:.3g} "
                  f"(<= 1e-6), worst excess over bound {worst_margin:.3g} (<= 1e-3)"
                  + (f"; failed {failures}" if failures else ""))


@pytest.mark.slow
def test_criterion_7_gauge_symmetry():
    rep = run_suite({"schema_version": 1, "suite": "self-adjoint", "seeds": 4, "tolerance": 1e-6})
    sym = max(r.measured for r in rep.records if r.check_id.startswith("self-adjoint/"))
    zero = next(r.measured for r in rep.records if r.check_id == "asymmetry/zero-gauge")
    ok = rep.passed and sym <= 1e-6 and zero >= 1e-3
    report(7, ok, f"self-adjoint gauge asymmetry {sym:.2e} (<= 1e-6); zero gauge on the designated pair "
                  f"{zero:.2e} (>= 1e-3)")


@pytest.mark.slow
def test_criterion_8_linearization_order():
    models = {
        -1: {"c": -1, "n": 4, "chart": "hyperbolic", "grid": [80, 80], "order": 8,
             "chart_params": {"x_range": [0.1, 10.0], "y_range": [-5.0, 5.0]}},
        0: {"c": 0, "n": 4, "chart": "torus", "grid": [24, 24], "active": [0, 1], "order": 8},
        1: {"c": 1, "n": 4, "chart": "toric", "grid": [80, 80], "order": 8, "active": [0, 1],
            "chart_params": {"bounds": [list(b) for b in TORIC_BOX["bounds"]]}},
    }
    lowest = {}
    ok = True
    for c, model in models.items():
        rep = run_suite({"schema_version": 1, "suite": "linearization", "seeds": 8, "model": model})
        lowest[c] = min(r.measured for r in rep.records)
        ok = ok and rep.passed and len(rep.records) == 8
    report(8, ok, "8 seeds per background, lowest order "
                  + ", ".join(f"c={c}: {o:.2f}" for c, o in lowest.items()) + " (>= 1.8)")


def test_criterion_9_nonlinear_flow():
    rep = run_suite({"schema_version": 1, "suite": "nonlinear-flow",
                     "tolerance": {"default": 5e-2, "volume": 1e-8, "stationary": 1e-10}})
    m = {r.check_id.split("/")[1]: r.measured for r in rep.records}
    ok = rep.passed
    report(9, ok, f"volume drift {m['volume']:.1e}/unit time (<= 1e-8), |F(h)| {m['stationary']:.1e} "
                  f"(<= 1e-10), rate error {m['rate']:.1e} (<= 5e-2); note: {NOTE}")
