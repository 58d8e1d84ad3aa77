import numpy as np
import pytest
from hypothesis import given, strategies as st

from bachflow.model_spaces import (
    christoffel_at,
    make_model,
    metric_at,
    volume_weight_at,
)

from conftest import rel


def test_torus_is_flat():
    sp = make_model(0, 4, "torus", shape=16)
    assert not np.any(sp.christoffel)
    assert sp.scalar_exact() == 0.0
    assert sp.volume() == pytest.approx(1.0, abs=1e-14)


def test_hyperbolic_scalar_curvature():
    sp = make_model(-1, 4, "hyperbolic")
    assert sp.scalar_exact() == -12.0
    np.testing.assert_allclose(sp.ricci_exact(), -3.0 * np.broadcast_to(sp.metric, sp.ricci_exact().shape))


def test_hyperbolic_metric_and_weight_at_half():
    # cell-centred nodes: x = 0.3 + 0.08 (i + 1/2) is 0.5 at i = 2
    sp = make_model(-1, 4, "hyperbolic", shape=(5, 4), x_range=(0.3, 0.7))
    np.testing.assert_allclose(metric_at(sp, (2, 1)), 4.0 * np.eye(4), rtol=1e-14)
    assert volume_weight_at(sp, (2, 0)) == pytest.approx(16.0 * sp.grid.cell_volume, rel=1e-13)


def test_torus_weight_is_cell_volume():
    sp = make_model(0, 4, "torus", shape=(3, 4), active=(0, 1))
    assert volume_weight_at(sp, (1, 2)) == pytest.approx(sp.grid.cell_volume)


def test_hyperbolic_christoffel_closed_form():
    sp = make_model(-1, 4, "hyperbolic", shape=(6, 3))
    node = (3, 1)
    x = sp.grid.nodes(0)[3]
    gam = christoffel_at(sp, node)  # [k, i, j]
    expect = np.zeros((4, 4, 4))
    for j in range(4):
        expect[j, j, 0] -= 1.0 / x
        expect[j, 0, j] -= 1.0 / x if j else 0.0
    for a in range(1, 4):
        expect[0, a, a] = 1.0 / x
    np.testing.assert_allclose(gam, expect, atol=1e-14)
    np.testing.assert_array_equal(gam, np.swapaxes(gam, 1, 2))


def _stereographic_ricci_oracle(x: np.ndarray, n: int) -> np.ndarray:
    """Ricci of e^{2 phi} delta with phi = log 2 - log(1 + |x|^2), written out by hand."""
    r2 = float(x @ x)
    dphi = -2.0 * x / (1.0 + r2)
    hess = -2.0 * np.eye(n) / (1.0 + r2) + 4.0 * np.outer(x, x) / (1.0 + r2) ** 2
    lap = np.trace(hess)
    return -(n - 2) * (hess - np.outer(dphi, dphi)) - (lap + (n - 2) * dphi @ dphi) * np.eye(n)


def test_stereographic_ricci_is_3h():
    sp = make_model(1, 4, "stereographic", shape=5)
    rng = np.random.default_rng(1)
    for _ in range(5):
        node = tuple(rng.integers(0, 5, size=4))
        x = np.array([sp.grid.nodes(p)[i] for p, i in enumerate(node)])
        ric = _stereographic_ricci_oracle(x, 4)
        np.testing.assert_allclose(ric, 3.0 * metric_at(sp, node), atol=1e-12)
        np.testing.assert_allclose(sp.ricci_exact()[(Ellipsis,) + node], ric, atol=1e-12)


@pytest.mark.parametrize("kw, msg", [
    (dict(c=0, n=2), "dimension"),
    (dict(c=-1, n=4, chart="hyperbolic", x_range=(0.0, 1.0)), "x_min"),
    (dict(c=-1, n=4, chart="hyperbolic", x_range=(-1.0, 1.0)), "x_min"),
    (dict(c=-1, n=4, chart="stereographic"), "curvature"),
    (dict(c=0, n=4, chart="toric"), "curvature"),
    (dict(c=2, n=4), "curvature sign"),
    (dict(c=0, n=4, chart="klein"), "unknown chart"),
])
def test_make_model_rejects(kw, msg):
    c, n = kw.pop("c"), kw.pop("n")
    with pytest.raises(ValueError, match=msg):
        make_model(c, n, **kw)


def test_out_of_range_node():
    sp = make_model(0, 4, "torus", shape=4)
    with pytest.raises(IndexError):
        metric_at(sp, (0, 0, 0, 4))
    with pytest.raises(IndexError):
        christoffel_at(sp, (0, 0))


def test_hyperbolic_box_volume_converges_at_second_order():
    # volume of [1, 2] x [0, 1] x (unit fibre) under x^-4: int x^-4 dx = (1 - 1/8)/3
    exact = (1.0 - 1.0 / 8.0) / 3.0
    errs = []
    for m in (8, 16, 32):
        sp = make_model(-1, 4, "hyperbolic", shape=(m, 4), x_range=(1.0, 2.0), y_range=(0.0, 1.0))
        errs.append(abs(sp.volume() - exact))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_boundary_defining_function():
    sp = make_model(-1, 4, "hyperbolic", shape=(4, 3))
    np.testing.assert_allclose(sp.rho[:, 0], sp.grid.nodes(0))
    assert np.all(make_model(0, 4, shape=4).rho == 1.0)


@pytest.mark.parametrize("c, chart, kw", [
    (-1, "hyperbolic", {}),
    (1, "stereographic", {"shape": 4}),
    (1, "toric", {}),
    (0, "torus", {"shape": 4}),
])
@given(data=st.data())
def test_exact_curvature_invariants(c, chart, kw, data):
    sp = make_model(c, 4, chart, **kw)
    node = tuple(data.draw(st.integers(0, s - 1)) for s in sp.grid.shape)
    h = metric_at(sp, node)
    assert np.all(np.linalg.eigvalsh(h) > 0)
    np.testing.assert_array_equal(h, h.T)
    r = sp.riemann_exact()[(Ellipsis,) + tuple(0 if d == 1 else i for d, i in zip(sp.metric.shape[2:], node))]
    expect = c * (np.einsum("il,jk->ijkl", h, h) - np.einsum("ik,jl->ijkl", h, h))
    np.testing.assert_allclose(r, expect, atol=1e-12)
    # contracting gives Ric = c(n-1)h and the Schouten tensor is c h / 2
    ric = np.einsum("il,ijkl->jk", np.linalg.inv(h), r)
    assert rel(ric, c * 3 * h) < 1e-12 if c else np.allclose(ric, 0)


@pytest.mark.parametrize("c, chart, kw", [
    (-1, "hyperbolic", {"shape": (8, 5)}),
    (1, "toric", {"shape": 8}),
    (1, "stereographic", {"shape": 3}),
])
def test_christoffel_from_metric_derivatives(c, chart, kw):
    sp = make_model(c, 4, chart, **kw)
    # Gamma^k_ij = g^kk (d_i g_kj + d_j g_ki - d_k g_ij) / 2 for a diagonal metric
    g = sp.metric_diagonal
    dg = sp.metric_derivative  # [a, i, j]
    gam = sp.christoffel
    for k in range(4):
        for i in range(4):
            for j in range(4):
                want = 0.5 / g[k] * (dg[i, k, j] + dg[j, k, i] - dg[k, i, j])
                np.testing.assert_allclose(np.broadcast_to(gam[k, i, j], sp.grid.shape),
                                           np.broadcast_to(want, sp.grid.shape), atol=1e-12)
