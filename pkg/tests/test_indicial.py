import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bachflow.indicial import (
    SUBSPACES,
    asymptotic_arguments,
    center,
    expected_roots_at_zero,
    indicial_operator,
    indicial_polynomial,
    indicial_radius,
    indicial_result,
    indicial_roots,
    outer_radicands,
    root_residual,
    roots_csv,
    scan_half_plane,
    thresholds,
)
from bachflow.linearized import apply_L
from bachflow.model_spaces import make_model
from bachflow.tensor_fields import TensorField

DIMS = list(range(4, 11))


def _power_tensor(space, subspace, gamma):
    """x^gamma times a constant matrix of the given block type, in dx components."""
    n = space.n
    e = np.zeros((n, n))
    if subspace == "V0":
        e = np.eye(n)
    elif subspace == "V1":
        e = -np.eye(n)
        e[0, 0] = n - 1
    elif subspace == "V2":
        e[0, 1] = e[1, 0] = 1.0
    else:
        e[1, 2] = e[2, 1] = 1.0
    x = space.coords[0]
    return TensorField(e[:, :, None] * np.broadcast_to(x ** gamma, space.grid.shape), space, "sym2"), e


@pytest.mark.parametrize("subspace", SUBSPACES)
@pytest.mark.parametrize("gamma", [-1.3, 0.4, 2.5])
def test_quartic_matches_operator_on_powers(subspace, gamma):
    # independent oracle: apply the discrete L to x^gamma E and read off the factor
    n = 5
    sp = make_model(-1, n, "hyperbolic", shape=(96,), active=(0,), order=8, x_range=(0.5, 2.0))
    v, e = _power_tensor(sp, subspace, gamma)
    lv = apply_L(v).data[..., 24:-24]
    k = np.unravel_index(np.argmax(np.abs(e)), e.shape)
    factor = lv[k] / v.data[(k[0], k[1], slice(24, -24))]
    want = indicial_operator(subspace, n)(gamma)
    np.testing.assert_allclose(factor, want, rtol=1e-6, atol=1e-6 * max(1.0, abs(want)))
    # and L keeps the block structure
    assert np.max(np.abs(lv - want * e[:, :, None] * v.data[k][None, None, 24:-24] / e[k])) \
        < 1e-5 * max(1.0, abs(want)) * np.max(np.abs(v.data))


@pytest.mark.parametrize("n", DIMS)
def test_integer_roots_at_zero(n):
    expect = expected_roots_at_zero(n)
    for s in SUBSPACES:
        found = np.sort(np.roots(indicial_polynomial(s, n, 0.0, "dx")).real)
        np.testing.assert_allclose(found, sorted(expect[s]), atol=1e-9)
        closed = np.sort(indicial_roots(s, n, 0.0, basis="dx").real)
        np.testing.assert_allclose(closed, sorted(expect[s]), atol=1e-12)
        shifted = np.sort(indicial_roots(s, n, 0.0).real)
        np.testing.assert_allclose(shifted, np.array(sorted(expect[s])) + 2, atol=1e-12)
    assert indicial_radius(n, 0.0) == pytest.approx((n - 3) / 2, abs=1e-12)


@pytest.mark.parametrize("n", [3, 4, 7])
def test_leading_coefficient_and_center(n):
    for s in SUBSPACES:
        coef = indicial_polynomial(s, n)
        assert coef[0] == -0.5 and len(coef) == 5
        assert indicial_polynomial(s, n, monic=True)[0] == 1.0
    assert center(n) == (n - 1) / 2
    assert center(n, "dx") == (n - 5) / 2


@given(n=st.integers(3, 12), re=st.floats(-30, 30), im=st.floats(-1e3, 1e3),
       basis=st.sampled_from(["dx", "dx/rho"]))
def test_closed_form_roots_solve_the_quartic(n, re, im, basis):
    lam = complex(re, im)
    for s in SUBSPACES:
        assert root_residual(s, n, lam, basis) < 1e-9
        roots = indicial_roots(s, n, lam, basis)
        # roots pair up symmetrically about the center
        c = center(n, basis)
        np.testing.assert_allclose(roots[:2] + roots[2:], 2 * c, atol=1e-9 * max(1, np.max(np.abs(roots))))


@pytest.mark.parametrize("n", DIMS)
def test_thresholds_close_the_radius(n):
    th = thresholds(n)
    assert th.r == (n - 1) / 8
    assert th.a == pytest.approx((n - 2) * (3 * n - 11) * (5 * n - 13) / 128)
    for name, subs in th.controls.items():
        eps = getattr(th, name)
        for s in subs:
            rad = outer_radicands(s, n, -eps)
            assert np.min(np.abs(rad)) < 1e-9 * max(1.0, eps)
        assert indicial_radius(n, -eps) < 1e-6
    # just to the right of the smallest threshold the radius is positive
    eps_min = min(th.eps_V0, th.eps_V1, th.eps_V2, th.eps_V3)
    assert indicial_radius(n, -0.99 * eps_min) > 0


@pytest.mark.parametrize("n", [4, 5, 6, 8])
def test_half_plane_scan(n):
    res = scan_half_plane(n)
    assert res.points > 20000
    assert res.min_radius >= (n - 1) / 8 - 1e-9
    assert res.holds
    assert res.argmin.real > -res.a_bound


def test_scan_falsifies_an_oversized_half_plane():
    n = 4
    eps_min = min(thresholds(n).eps_V1, thresholds(n).eps_V3, thresholds(n).eps_V0)
    res = scan_half_plane(n, a_bound=eps_min + 1.0)
    assert not res.holds
    with pytest.raises(ValueError):
        scan_half_plane(4, lam_grid=[-10.0])


def test_asymptotic_arguments():
    out = asymptotic_arguments(4, 0.05, 1e8)
    for s, d in out.items():
        args = np.abs(d["radicand_args"])
        assert np.all(np.isclose(args, np.pi / 4, atol=1e-3) | np.isclose(args, 3 * np.pi / 4, atol=1e-3)), s
        assert np.all(np.abs(d["root_real"]) > 0)


def test_roots_csv():
    text = roots_csv([indicial_result(4), indicial_result(5, 1 + 2j)])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["n", "re_lambda", "im_lambda", "subspace", "root_index", "re_mu", "im_mu", "radius"]
    assert len(rows) == 1 + 32
    assert float(rows[1][5]) in {5.0, 4.0, 1.0, 0.0}


@pytest.mark.parametrize("args", [(2,), (4, "bad")])
def test_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        center(*args)
    with pytest.raises(ValueError):
        indicial_operator("V9", 4)
