import json
from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bachflow.linearized import apply_L
from bachflow.model_spaces import make_model
from bachflow.spectral import (
    claimed_bound,
    gap_constants,
    harmonic_multiplicity,
    one_form_gap_check,
    random_component_field,
    random_trace_field,
    random_tt_field,
    rayleigh_sample,
    sphere_trace_kernel,
    sphere_trace_spectrum,
    torus_mode_check,
    torus_mode_eigenvalue,
    torus_mode_field,
    torus_mode_spectrum,
    trace_quadratic_form,
    tt_form_checks,
    weitzenbock_suite,
)
from bachflow.tensor_fields import l2_inner, random_field, trace

from conftest import hyperbolic, toric


def test_torus_eigenvalue_closed_form():
    assert torus_mode_eigenvalue((1, 0, 0, 0)) == pytest.approx(-0.5 * (2 * np.pi) ** 4, rel=1e-15)
    assert torus_mode_eigenvalue((1, 1)) == pytest.approx(-0.5 * (8 * np.pi ** 2) ** 2, rel=1e-15)
    assert torus_mode_eigenvalue((0, 0)) == 0.0
    spec = torus_mode_spectrum((1, 1), 4)
    assert spec["multiplicity"] == 10 and spec["k_squared"] == 2
    assert spec["flow_rate"] == pytest.approx(spec["eigenvalue"] / 2)
    with pytest.raises(ValueError):
        torus_mode_spectrum((1, 0, 0, 0, 0), 4)


@pytest.mark.parametrize("k", [(0, 0), (1, 0), (1, 1), (2, 1)])
def test_discrete_torus_modes(k):
    sp = make_model(0, 4, "torus", shape=16, active=(0, 1), derivative="spectral")
    assert torus_mode_check(sp, k, seed=3) < 1e-10
    fd = make_model(0, 4, "torus", shape=32, active=(0, 1), order=8)
    assert torus_mode_check(fd, k, seed=3) < 1e-4


def test_torus_mode_field_needs_torus():
    with pytest.raises(ValueError):
        torus_mode_field(hyperbolic(8, 4), (1, 0))
    with pytest.raises(ValueError):
        torus_mode_field(make_model(0, 4, "torus", shape=4, active=(0,)), (0, 1))


@given(k=st.integers(0, 8), n=st.integers(2, 9))
def test_harmonic_multiplicity(k, n):
    # (2k + n - 1) (k + n - 2)! / (k! (n - 1)!)
    want = (2 * k + n - 1) * factorial(k + n - 2) // (factorial(k) * factorial(n - 1)) if k or n > 1 else 1
    assert harmonic_multiplicity(k, n) == want


def test_sphere_trace_spectrum_n4():
    rows = sphere_trace_spectrum(3, 4)
    assert rows[0] == (1, 4, 0.0, 5)
    assert rows[1][:3] == (2, 10, -30.0) and rows[1][3] == 14
    assert all(r[2] < 0 for r in rows[1:])


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_sphere_trace_kernel(n):
    res = sphere_trace_kernel(n)
    assert res.kernel_dimension == n + 1
    assert res.separation >= 1e6
    # the rest of the spectrum is strictly negative
    assert max(res.spectrum[n + 1:]) < -1.0
    with pytest.raises(ValueError):
        sphere_trace_kernel(1)


def test_gap_constants():
    g = gap_constants(4)
    assert g == {"trace": 4.5, "imK": 0.4, "TT": 0.25, "a": 0.25}
    assert gap_constants(6)["a"] == pytest.approx(0.6)
    with pytest.raises(ValueError):
        gap_constants(3)
    assert claimed_bound("TT", -1, 4) == -0.25
    assert claimed_bound("imK", 1, 5) == -5.0
    assert claimed_bound("trace", 1, 5) == 0.0
    assert claimed_bound("trace", 0, 4) == 0.0
    with pytest.raises(ValueError):
        claimed_bound("other", -1, 4)


@pytest.fixture(scope="module")
def hyp64():
    return hyperbolic(64, 8)


def test_identity_suite_hyperbolic(hyp64):
    alpha = random_field(hyp64, 1, 2, decay=6.5)
    v = random_field(hyp64, 2, 3, symmetry="sym2", decay=6.5)
    res = weitzenbock_suite(alpha, v)
    assert len(res) == 11
    worst = max(r.relative for r in res)
    assert worst < 1e-3, {r.name: r.relative for r in res}


def test_identity_suite_converges():
    worst = []
    for m in (40, 80):
        sp = hyperbolic(m, 8, x_range=(0.5, 2.0), y_range=(-1.0, 1.0))
        alpha = random_field(sp, 1, 0, decay=6.5)
        v = random_field(sp, 2, 1, symmetry="sym2", decay=6.5)
        worst.append(max(r.relative for r in weitzenbock_suite(alpha, v)))
    assert np.log2(worst[0] / worst[1]) >= 3.5


def test_identity_suite_sphere_and_torus():
    sp = toric(64, 8)
    alpha = random_field(sp, 1, 5, decay=6.5)
    v = random_field(sp, 2, 6, symmetry="sym2", decay=6.5)
    assert max(r.relative for r in weitzenbock_suite(alpha, v)) < 1e-3
    tor = make_model(0, 4, "torus", shape=16, active=(0, 1), derivative="spectral")
    alpha = random_field(tor, 1, 5)
    v = random_field(tor, 2, 6, symmetry="sym2")
    assert max(r.relative for r in weitzenbock_suite(alpha, v)) < 1e-10


def test_tt_form_checks(hyp64):
    v = random_tt_field(hyp64, 2, decay=6.5, max_frequency=1)
    rep = tt_form_checks(v)
    named = {r.name: r for r in rep.identities}
    for key in ("spec_est_AT_with_defect", "refined", "d_nabla_bochner"):
        assert named[key].relative < 1e-3, (key, named[key].relative)
    # the identities that drop the divergence terms are off by at most the budget
    slack = named["spec_est_AT"].residual
    assert slack <= rep.budget + 1e-3 * named["spec_est_AT"].scale
    assert rep.inequalities_hold
    assert rep.quadratic_form / rep.norm_sq <= -gap_constants(4)["TT"]
    with pytest.raises(ValueError):
        tt_form_checks(random_tt_field(toric(16, 4), 0))


def test_tt_samples_are_nearly_tt(hyp64):
    v = random_tt_field(hyp64, 7, decay=6.5, max_frequency=1)
    assert np.max(np.abs(trace(v).data)) < 1e-12 * v.max_abs()
    assert tt_form_checks(v).defect < 1e-2


def test_trace_quadratic_form(hyp64):
    fh = random_trace_field(hyp64, 1, decay=6.5)
    f = trace(fh) / 4
    assert trace_quadratic_form(f) == pytest.approx(l2_inner(fh, apply_L(fh)), rel=1e-3)


def test_sphere_trace_samples_are_mean_zero():
    sp = toric(40, 6)
    fh = random_trace_field(sp, 3, decay=6.5)
    f = trace(fh).data / 4
    w = sp.volume_weight
    assert abs(np.sum(f * w)) < 1e-12 * np.sum(np.abs(f) * w)


@pytest.mark.parametrize("component", ["trace", "imK", "TT"])
def test_rayleigh_sampling_hyperbolic(component):
    sp = hyperbolic(48, 6)
    rep = rayleigh_sample(component, sp, range(3), decay=3.0, max_frequency=1)
    assert rep.all_passed, rep.quotients
    assert rep.max_quotient <= claimed_bound(component, -1, 4) + 1e-3
    d = json.loads(rep.to_json())
    assert d["component"] == component and d["all_passed"] and len(d["quotients"]) == 3


def test_rayleigh_sampling_detects_a_false_bound():
    sp = hyperbolic(48, 6)
    rep = rayleigh_sample("TT", sp, range(2), bound=-1e6, decay=3.0, max_frequency=1)
    assert not rep.all_passed


def test_random_component_field_rejects_unknown():
    with pytest.raises(ValueError):
        random_component_field("bogus", hyperbolic(8, 4), 0)


@settings(max_examples=6)
@given(seed=st.integers(0, 10 ** 5))
def test_one_form_gap(hyp48, seed):
    alpha = random_field(hyp48, 1, seed, decay=3.0, max_frequency=1)
    chk = one_form_gap_check(alpha)
    assert chk["gap_ratio"] >= chk["gap_bound"]
    assert chk["k_ratio"] <= chk["k_bound"]


def test_rayleigh_sampling_rejects_zero_samples():
    # constant 1-forms on the torus are conformal Killing, so K alpha vanishes
    tor = make_model(0, 4, "torus", shape=8, active=(0, 1), derivative="spectral")
    with pytest.raises(ValueError, match="zero imK sample"):
        rayleigh_sample("imK", tor, [0], min_frequency=0, max_frequency=0)
    rep = rayleigh_sample("imK", tor, range(4), max_frequency=1)
    assert rep.all_passed and rep.max_quotient < 0
