import numpy as np
import pytest
from hypothesis import given, strategies as st

from bachflow.curvature import (
    GaugeParams,
    MetricField,
    bach_rhs_expanded,
    bach_tensor,
    bianchi,
    curvature_from_metric,
    flow_rhs,
    gauge_vector,
    kulkarni_nomizu,
    metric_divergence,
    metric_trace,
    schouten,
    weyl,
)
from bachflow.model_spaces import make_model
from bachflow.tensor_fields import (
    TensorField,
    covariant_derivative,
    divergence,
    hodge_d,
    l2_norm_sq,
    metric_field,
    random_field,
    rough_laplacian,
    trace,
)

from conftest import hyperbolic, rel, toric


def spectral_torus(n=4, shape=16, active=(0, 1)):
    return make_model(0, n, "torus", shape=shape, active=active, derivative="spectral")


def perturbed(space, seed, eps=1e-2):
    v = random_field(space, 2, seed, symmetry="sym2", max_frequency=1)
    return MetricField.perturbed(v, eps / v.max_abs())


def norm(a) -> float:
    return float(np.max(np.abs(np.asarray(a))))


# ---------------------------------------------------------------------- curvature
def test_flat_torus_curvature_vanishes():
    g = MetricField.background(spectral_torus())
    curv = curvature_from_metric(g)
    assert norm(curv.riemann) < 1e-12 and norm(curv.scalar) < 1e-12


@pytest.mark.parametrize("space", [
    make_model(-1, 4, "hyperbolic", shape=32, order=8),
    make_model(1, 4, "toric", shape=32, order=8),
])
def test_background_curvature_matches_closed_form(space):
    curv = curvature_from_metric(MetricField.background(space))
    inner = (Ellipsis, slice(8, -8), slice(8, -8))
    assert rel(curv.scalar[inner[1:]], np.full(curv.scalar[inner[1:]].shape, space.scalar_exact())) < 1e-5
    exact = np.broadcast_to(space.riemann_exact(), curv.riemann.shape)
    assert norm(curv.riemann[inner] - exact[inner]) < 1e-5 * norm(exact)


def test_hyperbolic_scalar_converges_at_stencil_order():
    errs = []
    for m in (16, 32):
        sp = make_model(-1, 4, "hyperbolic", shape=m, order=4)
        s = curvature_from_metric(MetricField.background(sp)).scalar
        errs.append(np.max(np.abs(s[m // 4:-m // 4] + 12.0)))
    assert np.log2(errs[0] / errs[1]) > 3.5


def test_conformal_scalar_curvature_oracle():
    # g = e^{2 eps phi} delta with phi = sin(2 pi x) cos(2 pi y):
    # S = -e^{-2u} (2(n-1) Lap u + (n-2)(n-1) |du|^2), u = eps phi
    sp = spectral_torus(shape=24)
    x, y = sp.coords[0] + 0 * sp.coords[1], sp.coords[1] + 0 * sp.coords[0]
    eps, k = 0.05, 2 * np.pi
    u = eps * np.sin(k * x) * np.cos(k * y)
    ux = eps * k * np.cos(k * x) * np.cos(k * y)
    uy = -eps * k * np.sin(k * x) * np.sin(k * y)
    lap = -2 * k ** 2 * u
    expect = -np.exp(-2 * u) * (6 * lap + 6 * (ux ** 2 + uy ** 2))
    g = MetricField(TensorField(np.exp(2 * u) * metric_field(sp).data, sp, "sym2"))
    assert rel(curvature_from_metric(g).scalar, expect) < 1e-9


# ---------------------------------------------------------------------- Schouten, Weyl, KN
@pytest.mark.parametrize("c", [-1, 1])
def test_schouten_of_background(c):
    sp = make_model(-1, 4, "hyperbolic", shape=32, order=8) if c < 0 else toric(32, 8)
    p = schouten(MetricField.background(sp)).data[..., 8:-8, 8:-8]
    h = metric_field(sp).data[..., 8:-8, 8:-8]
    assert norm(p - 0.5 * c * h) < 1e-5 * norm(h)


def test_schouten_recomputed_from_ricci():
    g = perturbed(spectral_torus(), 3)
    curv = curvature_from_metric(g)
    p = schouten(g, curv).data
    n = 4
    s = np.einsum("ij...,ij...->...", g.inverse, curv.ricci)
    assert norm(p - (curv.ricci - s * g.g.data / (2 * (n - 1))) / (n - 2)) < 1e-14
    assert norm(schouten(MetricField.background(spectral_torus())).data) < 1e-12


def test_kulkarni_nomizu_of_metric():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5, 5))
    h = a @ a.T + 5 * np.eye(5)
    hh = kulkarni_nomizu(h, h)
    expect = 2 * (np.einsum("il,jk->ijkl", h, h) - np.einsum("ik,jl->ijkl", h, h))
    np.testing.assert_allclose(hh, expect, atol=1e-12)


@given(seed=st.integers(0, 2 ** 16))
def test_kulkarni_nomizu_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, 4, 4))
    a, b = a + a.T, b + b.T
    np.testing.assert_allclose(kulkarni_nomizu(a, b), kulkarni_nomizu(b, a), atol=1e-13)
    r = kulkarni_nomizu(a, b)
    np.testing.assert_allclose(r, -np.swapaxes(r, 0, 1), atol=1e-13)
    np.testing.assert_allclose(r, np.einsum("ijkl->klij", r), atol=1e-13)


def test_weyl_of_background_vanishes():
    for sp in (make_model(-1, 4, "hyperbolic", shape=32, order=8), toric(32, 8)):
        w = weyl(MetricField.background(sp))[..., 8:-8, 8:-8]
        assert norm(w) < 1e-6


# ---------------------------------------------------------------------- Bach tensor
@pytest.mark.parametrize("c", [-1, 0, 1])
def test_bach_of_background_vanishes(c):
    sp = {-1: make_model(-1, 4, "hyperbolic", shape=32, order=8), 0: spectral_torus(),
          1: toric(32, 8)}[c]
    b = bach_tensor(MetricField.background(sp)).data[..., 10:-10, 10:-10] if c else \
        bach_tensor(MetricField.background(sp)).data
    assert norm(b) < 1e-5


@pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
def test_bach_is_trace_free(n):
    sp = spectral_torus(n, shape=12)
    g = perturbed(sp, n)
    b = bach_tensor(g)
    assert norm(metric_trace(b, g).data) < 1e-7 * b.max_abs()
    assert b.max_abs() > 1e-6  # a generic perturbation is not Bach flat


def test_bach_divergence_free_only_in_dimension_four():
    defects = {}
    for n in (4, 5):
        sp = spectral_torus(n, shape=24)
        g = perturbed(sp, 7, eps=5e-2)
        b = bach_tensor(g)
        defects[n] = norm(metric_divergence(b, g).data) / b.max_abs()
    assert defects[4] < 1e-8
    assert defects[5] > 1e-2


def test_bach_scales_under_constant_rescaling():
    sp = spectral_torus()
    g = perturbed(sp, 1)
    g4 = MetricField(TensorField(4.0 * g.g.data, sp, "sym2"))
    assert rel(bach_tensor(g4).data, 0.25 * bach_tensor(g).data) < 1e-10


def test_conformal_covariance_only_in_dimension_four():
    out = {}
    for n in (4, 5):
        sp = spectral_torus(n, shape=32)
        g = perturbed(sp, 11, eps=5e-2)
        x, y = sp.coords[0] + 0 * sp.coords[1], sp.coords[1] + 0 * sp.coords[0]
        f = 1.0 + 0.2 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
        gf = MetricField(TensorField(f ** 2 * g.g.data, sp, "sym2"))
        b, bf = bach_tensor(g).data, bach_tensor(gf).data
        out[n] = norm(bf - b / f ** 2) / norm(b)
    assert out[4] < 1e-8
    assert out[5] > 1e-2


def test_expanded_rhs_matches_bach_plus_scalar_term():
    sp = spectral_torus()
    g = perturbed(sp, 5, eps=5e-2)
    n = 4
    curv = curvature_from_metric(g)
    s = TensorField(curv.scalar, sp)
    lap_s = np.einsum("ij...,ij...->...", g.inverse,
                      covariant_derivative(covariant_derivative(s, g.connection), g.connection).data)
    want = bach_tensor(g).data + lap_s * g.g.data / (2 * (n - 1) * (n - 2))
    assert rel(bach_rhs_expanded(g).data, want) < 1e-7


# ---------------------------------------------------------------------- Bianchi, gauge, flow
def test_bianchi_of_background_and_linear_part(hyp48):
    h = metric_field(hyp48)
    inner = (Ellipsis, slice(12, -12), slice(12, -12))
    assert norm(bianchi(h).data[inner]) < 1e-3 * norm(h.data[inner])
    v = random_field(hyp48, 2, 4, symmetry="sym2", decay=6.5)
    lin = bianchi(h + v) - bianchi(h)
    # -h^{jk} v_{ij,k} = (delta v)_i with the sign convention delta v = -div v
    want = divergence(v) + 0.5 * hodge_d(trace(v))
    assert rel(lin.data, want.data) < 1e-12


def test_bianchi_of_background_ricci(hyp48):
    ric = curvature_from_metric(MetricField.background(hyp48)).ricci
    b = bianchi(TensorField(ric, hyp48, "sym2")).data[..., 12:-12, 12:-12]
    assert norm(b) < 1e-6 * norm(ric)


@pytest.mark.parametrize("c", [-1, 1])
def test_gauge_vector_linear_part(c):
    sp = hyperbolic(48, 6) if c < 0 else toric(40, 6)
    n = 4
    h = metric_field(sp)
    v = random_field(sp, 2, 2, symmetry="sym2", decay=6.5)
    z0 = gauge_vector(h, c)
    z = gauge_vector(h + v, c) - z0
    beta = bianchi(v)
    want = 0.5 * rough_laplacian(beta) - (c * (n - 1) / 2) * divergence(v) - (c / 4) * hodge_d(trace(v))
    assert rel(z.data, want.data) < 1e-10
    inner = (Ellipsis, slice(12, -12), slice(12, -12))
    assert norm(z0.data[inner]) < 1e-3 * norm(z.data[inner])


def test_gauge_vector_is_local():
    sp = toric(40, 6)
    v = random_field(sp, 2, 5, symmetry="sym2", decay=6.5)
    v.data[..., 16:, :] = 0.0
    z = gauge_vector(metric_field(sp) + v, 1) - gauge_vector(metric_field(sp), 1)
    # three stencil applications of half-width 3 cannot reach past node 25
    assert z.max_abs() > 0 and np.all(z.data[..., 28:, :] == 0.0)


def test_gauge_params_self_adjoint():
    g = GaugeParams.self_adjoint(-1, 4)
    assert (g.mu, g.nu) == (1.5, 0.25)
    assert GaugeParams.self_adjoint(0, 5) == GaugeParams(0.0, 0.0)


@pytest.mark.parametrize("c", [-1, 0, 1])
def test_background_is_stationary(c):
    sp = {-1: make_model(-1, 4, "hyperbolic", shape=32, order=8), 0: spectral_torus(),
          1: toric(32, 8)}[c]
    f = flow_rhs(MetricField.background(sp)).data
    f = f[..., 10:-10, 10:-10] if c else f
    # fourth derivatives of a curved background leave a discretization floor
    assert norm(f) < (1e-10 if c == 0 else 1e-3)


def test_flow_preserves_volume_to_first_order():
    sp = spectral_torus(shape=16)
    g = perturbed(sp, 8, eps=5e-2)
    f = flow_rhs(g)
    dens = metric_trace(f, g).data * g.sqrt_det / np.sqrt(np.prod(sp.metric_diagonal, axis=0))
    integral = sp.integrate(dens)
    scale = sp.integrate(np.abs(metric_trace(f, g).data))
    assert abs(integral) < 1e-10 * scale


def test_metric_field_rejects_indefinite():
    sp = spectral_torus(shape=4)
    bad = metric_field(sp).data.copy()
    bad[0, 0] = -1.0
    with pytest.raises(ValueError):
        MetricField(TensorField(bad, sp, "sym2"))
    assert MetricField.background(sp).volume() == pytest.approx(1.0)
    assert l2_norm_sq(metric_field(sp)) == pytest.approx(4.0)
