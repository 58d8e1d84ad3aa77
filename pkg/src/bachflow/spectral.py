"""Spectral bounds for the linearized operator and the identities behind them.

Three kinds of check live here:

* exact spectra: Fourier modes on the flat torus and spherical harmonics
  in the pure-trace component on the round sphere;
* integral and pointwise identities (Bochner and commutator formulas)
  evaluated on seeded compactly supported fields, reported as residuals;
* Rayleigh-quotient sampling per component of the splitting, compared to
  the claimed negative upper bounds.

Every universally quantified bound is tested by sampling only; a passing
report is evidence, never proof.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from itertools import combinations_with_replacement
from math import comb, gamma

import numpy as np

from .curvature import kulkarni_nomizu
from .linearized import apply_L, apply_L_trace, div_vector, double_divergence
from .model_spaces import ModelSpace
from .tensor_fields import (
    TensorField,
    a_tensor,
    bump_envelope,
    conformal_killing,
    covariant_derivative,
    d_nabla,
    d_nabla_star,
    delta_star,
    divergence,
    divergence_slot,
    form_inner,
    hodge_d,
    hodge_dstar,
    hodge_laplacian_1form,
    l2_inner,
    l2_norm_sq,
    random_field,
    rough_laplacian,
    scalar_times_metric,
    t_tensor,
    trace,
    traceless_part,
    valued_form_inner,
)

COMPONENTS = ("trace", "imK", "TT")


# ---------------------------------------------------------------------- exact spectra
def torus_mode_eigenvalue(k, period: float = 1.0) -> float:
    """Eigenvalue -(2 pi |k| / period)^4 / 2 of L on the flat-torus Fourier mode k."""
    k2 = float(np.sum(np.asarray(k, dtype=float) ** 2))
    return -0.5 * (4.0 * np.pi ** 2 * k2 / period ** 2) ** 2


def torus_mode_spectrum(k, n: int, period: float = 1.0) -> dict:
    """Eigenvalue data of L on the Fourier mode exp(2 pi i k.x / period).

    At c = 0 the operator reduces to minus half the squared Laplacian, so
    the eigenvalue is the same on all n(n+1)/2 symmetric components.
    """
    k = tuple(int(x) for x in k)
    if len(k) > n:
        raise ValueError("wave vector has more entries than the dimension")
    ev = torus_mode_eigenvalue(k, period)
    return {"k": list(k), "k_squared": int(sum(x * x for x in k)), "eigenvalue": ev,
            "multiplicity": n * (n + 1) // 2, "flow_rate": ev / (n - 2)}


def torus_mode_field(space: ModelSpace, k, seed: int = 0) -> TensorField:
    """cos(2 pi k.x / period) E for a seeded symmetric matrix E, on the torus grid."""
    if space.c != 0 or not space.grid.periodic:
        raise ValueError("torus modes need the periodic flat model")
    rng = np.random.default_rng(seed)
    e = rng.standard_normal((space.n, space.n))
    e = 0.5 * (e + e.T)
    period = space.chart.period
    phase = 0.0
    for a, ka in enumerate(k):
        if ka:
            if space.grid.axis_of(a) is None:
                raise ValueError(f"coordinate {a} carries a wave number but is not resolved")
            phase = phase + 2.0 * np.pi * ka * space.coords[a] / period
    wave = np.broadcast_to(np.cos(phase), space.grid.shape)
    return TensorField(e.reshape(e.shape + (1,) * space.grid.ndim) * wave, space, "sym2")


def torus_mode_check(space: ModelSpace, k, seed: int = 0) -> float:
    """Relative L^2 error between the discrete L and the exact eigenvalue on mode k."""
    v = torus_mode_field(space, k, seed)
    ev = torus_mode_eigenvalue(k, space.chart.period)
    lv = apply_L(v)
    if ev == 0.0:
        return float(np.sqrt(l2_norm_sq(lv) / l2_norm_sq(v)))
    return float(np.sqrt(l2_norm_sq(lv - ev * v) / l2_norm_sq(ev * v)))


def harmonic_multiplicity(k: int, n: int) -> int:
    """Dimension of degree-k spherical harmonics on S^n."""
    return comb(n + k, k) - (comb(n + k - 2, k - 2) if k >= 2 else 0)


def sphere_trace_spectrum(k_max: int, n: int) -> list[tuple[int, int, float, int]]:
    """(k, lambda_k, eigenvalue, multiplicity) for L(fh) on the unit sphere, k = 1..k_max.

    lambda_k = k(k+n-1); the eigenvalue is -lambda_k^2/2 + n lambda_k/2.
    Degree 0 (constants) is excluded since the flow preserves volume.
    """
    out = []
    for k in range(1, k_max + 1):
        lam = k * (k + n - 1)
        out.append((k, lam, -0.5 * lam ** 2 + 0.5 * n * lam, harmonic_multiplicity(k, n)))
    return out


# ---------------------------------------------------------------------- sphere Galerkin
def _monomials(dim: int, degree: int) -> list[tuple[int, ...]]:
    out = []
    for d in range(degree + 1):
        for combo in combinations_with_replacement(range(dim), d):
            e = [0] * dim
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return out


def _sphere_moment(expo: tuple[int, ...]) -> float:
    """Integral of x^expo over the unit sphere in R^len(expo)."""
    if any(e % 2 for e in expo):
        return 0.0
    halves = [(e + 1) / 2.0 for e in expo]
    return 2.0 * np.prod([gamma(h) for h in halves]) / gamma(sum(halves))


def _poly_laplacian(poly: dict) -> dict:
    out: dict = {}
    for expo, coef in poly.items():
        for i, e in enumerate(expo):
            if e >= 2:
                new = list(expo)
                new[i] -= 2
                key = tuple(new)
                out[key] = out.get(key, 0.0) + coef * e * (e - 1)
    return out


def _sphere_laplacian(poly: dict, n: int) -> dict:
    """Laplace-Beltrami of the restriction to S^n, as a polynomial on R^{n+1}.

    On a homogeneous polynomial of degree d, Delta_S = Delta_R - d(d+n-1)
    after restriction to the sphere.
    """
    out = _poly_laplacian(poly)
    for expo, coef in poly.items():
        d = sum(expo)
        out[expo] = out.get(expo, 0.0) - d * (d + n - 1) * coef
    return out


def _pair(p: dict, q: dict) -> float:
    total = 0.0
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            total += c1 * c2 * _sphere_moment(tuple(a + b for a, b in zip(e1, e2)))
    return total


@dataclass(frozen=True)
class SphereKernelResult:
    n: int
    degree: int
    dimension: int
    singular_values: list
    kernel_dimension: int
    separation: float
    spectrum: list


def sphere_trace_kernel(n: int, degree: int = 4, rel_tol: float = 1e-9) -> SphereKernelResult:
    """Null space of L on pure-trace tensors f h, f a mean-zero polynomial of bounded degree.

    Polynomials on R^{n+1} of degree <= ``degree`` restricted to the unit
    sphere span exactly the harmonics of degree <= ``degree``.  Moments are
    exact, so the Galerkin matrix is exact up to round-off.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    basis = [{e: 1.0} for e in _monomials(n + 1, degree)]
    gram = np.array([[_pair(p, q) for q in basis] for p in basis])
    op = []
    for p in basis:
        lap = _sphere_laplacian(p, n)
        lap2 = _sphere_laplacian(lap, n)
        # coefficient of h in L(fh) at c = 1: -Delta^2 f / 2 - n Delta f / 2
        img = {k: -0.5 * v for k, v in lap2.items()}
        for k, v in lap.items():
            img[k] = img.get(k, 0.0) - 0.5 * n * v
        op.append(img)
    stiff = np.array([[_pair(p, q) for q in op] for p in basis])
    lam, vec = np.linalg.eigh(gram)
    keep = lam > rel_tol * lam.max()
    ortho = vec[:, keep] / np.sqrt(lam[keep])
    # remove the constants (volume-preserving variations)
    const = np.array([_pair(p, {(0,) * (n + 1): 1.0}) for p in basis])
    cvec = ortho.T @ const
    cvec /= np.linalg.norm(cvec)
    proj = np.eye(ortho.shape[1]) - np.outer(cvec, cvec)
    q, _ = np.linalg.qr(proj)
    q = q[:, : ortho.shape[1] - 1]
    mat = q.T @ (ortho.T @ stiff @ ortho) @ q
    mat = 0.5 * (mat + mat.T)
    sv = np.sort(np.abs(np.linalg.eigvalsh(mat)))
    gaps = sv[1:] / np.maximum(sv[:-1], np.finfo(float).tiny)
    split = int(np.argmax(gaps))
    kernel = split + 1
    eig = np.sort(np.linalg.eigvalsh(mat))[::-1]
    return SphereKernelResult(n, degree, mat.shape[0], sv.tolist(), kernel, float(gaps[split]), eig.tolist())


# ---------------------------------------------------------------------- constants
def gap_constants(n: int) -> dict:
    """The three component constants of the hyperbolic spectral gap and their minimum."""
    if n < 4:
        raise ValueError("the hyperbolic gap is stated for n >= 4")
    trace_c = n * (n - 1) ** 2 / 8.0
    imk_c = n / 10.0
    tt_c = (n - 2) * (n - 3) ** 2 / 8.0
    return {"trace": trace_c, "imK": imk_c, "TT": tt_c, "a": min(trace_c, imk_c, tt_c)}


def claimed_bound(component: str, c: int, n: int) -> float:
    """Upper bound claimed for the Rayleigh quotient of a component."""
    if component not in COMPONENTS:
        raise ValueError(f"unknown component {component!r}")
    if c == 0:
        return 0.0
    if c == 1:
        return 0.0 if component == "trace" else -float(n)
    return -gap_constants(n)["a"]


# ---------------------------------------------------------------------- identity residuals
@dataclass(frozen=True)
class IdentityResidual:
    """Residual of an identity lhs = rhs, relative to the largest term."""

    name: str
    residual: float
    scale: float
    terms: dict = field(default_factory=dict)

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else self.residual


def _norm(u: TensorField) -> float:
    return float(np.sqrt(max(l2_norm_sq(u), 0.0)))


def _pointwise(name: str, lhs: TensorField, rhs_terms: dict, extra: dict | None = None) -> IdentityResidual:
    """Residual of lhs = sum(rhs_terms); ``extra`` adds fields that cancel inside lhs to the scale."""
    total = None
    for t in rhs_terms.values():
        total = t if total is None else total + t
    res = _norm(lhs - total)
    norms = {k: _norm(t) for k, t in rhs_terms.items()}
    norms["lhs"] = _norm(lhs)
    norms.update({k: _norm(t) for k, t in (extra or {}).items()})
    return IdentityResidual(name, res, max(norms.values()), norms)


def _integral(name: str, lhs: float, rhs_terms: dict) -> IdentityResidual:
    res = abs(lhs - sum(rhs_terms.values()))
    terms = dict(rhs_terms)
    terms["lhs"] = lhs
    return IdentityResidual(name, res, max(abs(x) for x in terms.values()), terms)


def koiso_identity_residual(v: TensorField) -> IdentityResidual:
    """|T|^2 / 2 = |nabla v|^2 - |delta v|^2 + c (n |v|^2 - |tr v|^2), integrated.

    T_ijk = v_{ij,k} - v_{jk,i}.  Any compactly supported symmetric v.
    """
    c, n = v.space.c, v.n
    rhs = {
        "grad": l2_norm_sq(covariant_derivative(v)),
        "div": -l2_norm_sq(divergence(v)),
        "zeroth": c * n * l2_norm_sq(v),
        "trace": -c * l2_norm_sq(trace(v)),
    }
    return _integral("koiso", 0.5 * l2_norm_sq(t_tensor(v)), rhs)


def a_norm_identity_residual(v: TensorField) -> IdentityResidual:
    """|A|^2 = 2|nabla^2 v|^2 - 2|nabla delta v|^2 + 4cn|delta v|^2
    + 2c(n+2)|nabla v|^2 - 2c^2(n^2+n)|v|^2 for traceless compactly supported v, A = nabla T."""
    c, n = v.space.c, v.n
    dv = divergence(v)
    rhs = {
        "hessian": 2.0 * l2_norm_sq(covariant_derivative(covariant_derivative(v))),
        "grad_div": -2.0 * l2_norm_sq(covariant_derivative(dv)),
        "div": 4.0 * c * n * l2_norm_sq(dv),
        "grad": 2.0 * c * (n + 2) * l2_norm_sq(covariant_derivative(v)),
        "zeroth": -2.0 * c * c * (n * n + n) * l2_norm_sq(v),
    }
    return _integral("a_norm", l2_norm_sq(a_tensor(v)), rhs)


def _rough(u: TensorField) -> TensorField:
    """nabla* nabla = -trace nabla^2 (nonnegative)."""
    return -rough_laplacian(u)


def weitzenbock_residual(alpha: TensorField) -> IdentityResidual:
    """nabla* nabla alpha = -Delta_H alpha - c(n-1) alpha on 1-forms, pointwise."""
    c, n = alpha.space.c, alpha.n
    rhs = {"hodge": -hodge_laplacian_1form(alpha), "ricci": (-c * (n - 1)) * alpha}
    return _pointwise("weitzenbock", _rough(alpha), rhs)


def commuted_rough_laplacian_residual(alpha: TensorField) -> IdentityResidual:
    """nabla* nabla K alpha = K nabla* nabla alpha - c(n+1) K alpha, pointwise."""
    c, n = alpha.space.c, alpha.n
    ka = conformal_killing(alpha)
    rhs = {"commuted": conformal_killing(_rough(alpha)), "shift": (-c * (n + 1)) * ka}
    return _pointwise("rough_laplacian_of_K", _rough(ka), rhs)


def k_hodge_residual(alpha: TensorField) -> IdentityResidual:
    """K nabla* nabla alpha = -K Delta_H alpha - c(n-1) K alpha, pointwise."""
    c, n = alpha.space.c, alpha.n
    rhs = {"hodge": -conformal_killing(hodge_laplacian_1form(alpha)),
           "shift": (-c * (n - 1)) * conformal_killing(alpha)}
    return _pointwise("K_of_rough_laplacian", conformal_killing(_rough(alpha)), rhs)


def kstar_k_residual(alpha: TensorField) -> IdentityResidual:
    """K*K alpha = -Delta_H alpha / 2 + (n-2)/(2n) d d* alpha - c(n-1) alpha, pointwise.

    K* is the divergence delta on trace-free tensors.
    """
    c, n = alpha.space.c, alpha.n
    rhs = {
        "hodge": -0.5 * hodge_laplacian_1form(alpha),
        "exact": ((n - 2) / (2.0 * n)) * hodge_d(hodge_dstar(alpha)),
        "zeroth": (-c * (n - 1)) * alpha,
    }
    return _pointwise("kstar_k", divergence(conformal_killing(alpha)), rhs)


def delta_star_commutator_residual(alpha: TensorField) -> IdentityResidual:
    """delta* nabla*nabla alpha - nabla*nabla delta* alpha = c(n+1) delta* alpha + 2c (delta alpha) h."""
    c, n = alpha.space.c, alpha.n
    first, second = delta_star(_rough(alpha)), _rough(delta_star(alpha))
    rhs = {"symmetric": (c * (n + 1)) * delta_star(alpha),
           "trace": scalar_times_metric((2.0 * c) * divergence(alpha))}
    return _pointwise("delta_star_commutator", first - second, rhs,
                      {"outer_order": first, "inner_order": second})


def k_commutator_residual(alpha: TensorField) -> IdentityResidual:
    """K nabla*nabla alpha - nabla*nabla K alpha = c(n+1) K alpha."""
    c, n = alpha.space.c, alpha.n
    first, second = conformal_killing(_rough(alpha)), _rough(conformal_killing(alpha))
    return _pointwise("K_commutator", first - second, {"shift": (c * (n + 1)) * conformal_killing(alpha)},
                      {"outer_order": first, "inner_order": second})


def bilaplacian_commutator_residual(v: TensorField) -> IdentityResidual:
    """(nabla*nabla)^2 v = (nabla*)^2 nabla^2 v + c(n-1) nabla*nabla v + 4c^2 (tr v) h - 4c^2 n v.

    (nabla*)^2 nabla^2 v is v_{ij,mp}^{pm}: the second derivative index is
    contracted first.
    """
    c, n = v.space.c, v.n
    hess = covariant_derivative(covariant_derivative(v))
    double = divergence_slot(divergence_slot(hess, 3), 2)
    lap = rough_laplacian(v)
    rhs = {
        "double_divergence": TensorField(double.data, v.space, "sym2"),
        "laplacian": (-c * (n - 1)) * lap,
        "trace": scalar_times_metric((4.0 * c * c) * trace(v)),
        "zeroth": (-4.0 * c * c * n) * v,
    }
    return _pointwise("bilaplacian_commutator", rough_laplacian(lap), rhs)


def fourth_order_commutator_residual(v: TensorField) -> IdentityResidual:
    """Commutation of v_{jk,i}^m_m^k for traceless v, pointwise in (i, j).

    v_{jk,i}^m_m^k = (div v)_{j,}^m_{m,i} + 2c (div v)_{i,j} - 2c (div div v) h_ij
    + c(n+2) Delta v_ij + 2c(n-1) (div v)_{j,i} + c^2 (n^2+n) v_ij, with
    (div v)_j = v_{jk,}^k.
    """
    c, n = v.space.c, v.n
    lap_grad = rough_laplacian(covariant_derivative(v))  # [j, k, i]
    lhs = np.swapaxes(divergence_slot(lap_grad, 1).data, 0, 1)  # (i, j)
    div = div_vector(v)
    grad_div = covariant_derivative(div).data  # [a, b] = (div v)_{a,b}
    outer = covariant_derivative(rough_laplacian(div)).data  # [j, i]
    sp = v.space
    rhs = {
        "outer": TensorField(np.swapaxes(outer, 0, 1), sp),
        "grad_div": TensorField((2.0 * c) * grad_div, sp),
        "divdiv": scalar_times_metric((-2.0 * c) * double_divergence(v)),
        "laplacian": (c * (n + 2)) * rough_laplacian(v),
        "grad_div_t": TensorField((2.0 * c * (n - 1)) * np.swapaxes(grad_div, 0, 1), sp),
        "zeroth": (c * c * (n * n + n)) * v,
    }
    rhs = {k: TensorField(t.data, sp) for k, t in rhs.items()}
    return _pointwise("fourth_order_commutator", TensorField(lhs, sp), rhs)


def imK_form_expansion(alpha: TensorField) -> IdentityResidual:
    """(K alpha, L K alpha) against its five-term expansion in d and d* (hyperbolic background).

    Terms: -|d d* d alpha|^2/4 - (n-1)/(2n) |d* d d* alpha|^2 - (n-1) |Delta_H alpha|^2
    - (n-1)^2 |d alpha|^2 - n(n-1)/2 |d* alpha|^2, with form norms.
    """
    n = alpha.n
    if alpha.space.c != -1:
        raise ValueError("the five-term expansion is stated on the hyperbolic background")
    ka = conformal_killing(alpha)
    direct = l2_inner(ka, apply_L(ka))
    da = hodge_d(alpha)
    dsa = hodge_dstar(alpha)
    dd_d = hodge_d(hodge_dstar(da))
    ds_d_ds = hodge_dstar(hodge_d(dsa))
    lap_h = hodge_laplacian_1form(alpha)
    terms = {
        "dd*d": -0.25 * form_inner(dd_d, dd_d),
        "d*dd*": -((n - 1) / (2.0 * n)) * form_inner(ds_d_ds, ds_d_ds),
        "hodge": -(n - 1) * form_inner(lap_h, lap_h),
        "d": -((n - 1) ** 2) * form_inner(da, da),
        "d*": -(n * (n - 1) / 2.0) * form_inner(dsa, dsa),
    }
    return _integral("imK_expansion", direct, terms)


def weitzenbock_suite(alpha: TensorField, v: TensorField) -> list[IdentityResidual]:
    """All identity residuals for one seeded 1-form and one seeded symmetric tensor."""
    v0 = traceless_part(v)
    out = [
        koiso_identity_residual(v),
        a_norm_identity_residual(v0),
        weitzenbock_residual(alpha),
        commuted_rough_laplacian_residual(alpha),
        k_hodge_residual(alpha),
        kstar_k_residual(alpha),
        delta_star_commutator_residual(alpha),
        k_commutator_residual(alpha),
        bilaplacian_commutator_residual(v),
        fourth_order_commutator_residual(v0),
    ]
    if alpha.space.c == -1:
        out.append(imK_form_expansion(alpha))
    return out


# ---------------------------------------------------------------------- TT forms
@dataclass(frozen=True)
class TTFormReport:
    """Identities and inequalities of the TT quadratic-form estimate for one sample.

    ``budget`` is the part of the identities that only vanishes for exactly
    TT input: |nabla delta v|^2/2 + (n-1)|delta v|^2/2.  ``defect`` is
    |delta v| / |v|.
    """

    identities: list
    inequalities: dict
    quadratic_form: float
    norm_sq: float
    defect: float
    budget: float

    @property
    def inequalities_hold(self) -> bool:
        return all(ok for _, _, ok in self.inequalities.values())


def tt_form_checks(v: TensorField) -> TTFormReport:
    """Quadratic-form identities and bounds for a (numerically) TT tensor on the hyperbolic background.

    For traceless v one has exactly
    (v, Lv) = -(|A|^2 - (n-1)|T|^2)/4 - |nabla delta v|^2/2 + (n-1)|delta v|^2/2,
    so the gap between (v, Lv) and the TT-only right-hand sides is at most
    the reported budget plus discretization error.
    """
    n = v.n
    if v.space.c != -1:
        raise ValueError("the TT form checks are stated on the hyperbolic background")
    q = l2_inner(v, apply_L(v))
    vv = l2_norm_sq(v)
    t = t_tensor(v)
    a_sq = l2_norm_sq(covariant_derivative(t))
    t_sq = l2_norm_sq(t)
    dv = divergence(v)
    budget = 0.5 * l2_norm_sq(covariant_derivative(dv)) + 0.5 * (n - 1) * l2_norm_sq(dv)
    hess = l2_norm_sq(covariant_derivative(covariant_derivative(v)))
    grad = l2_norm_sq(covariant_derivative(v))
    # T is a T*M-valued 2-form: form slots 0 and 2, value slot 1
    dt = d_nabla(t, 2)
    dst = d_nabla_star(t, 1)
    dt_sq = valued_form_inner(dt, dt, 3)
    dst_sq = valued_form_inner(dst, dst, 1)
    identities = [
        _integral("int_est1", q, {"hessian": -0.5 * hess, "grad": 0.5 * (2 * n + 1) * grad, "zeroth": n * vv}),
        _integral("spec_est_AT", q, {"A": -0.25 * a_sq, "T": 0.25 * (n - 1) * t_sq}),
        _integral("spec_est_AT_with_defect", q, {"A": -0.25 * a_sq, "T": 0.25 * (n - 1) * t_sq,
                                                "grad_div": -0.5 * l2_norm_sq(covariant_derivative(dv)),
                                                "div": 0.5 * (n - 1) * l2_norm_sq(dv)}),
        _integral("refined", q, {"d": -0.125 * dt_sq, "d_star": -0.125 * dst_sq, "T": -0.25 * (n - 2) * t_sq}),
        _integral("d_nabla_bochner", a_sq - (2 * n - 3) * t_sq, {"d": 0.5 * dt_sq, "d_star": 0.5 * dst_sq}),
    ]
    inequalities = {
        "A_dominates_T": (a_sq, (n - 1) * t_sq, a_sq >= (n - 1) * t_sq),
        "lvv": (q, -0.25 * (n - 2) * t_sq, q <= -0.25 * (n - 2) * t_sq),
        "fin_est_tt": (q, -(n - 2) * (n - 3) ** 2 / 8.0 * vv, q <= -(n - 2) * (n - 3) ** 2 / 8.0 * vv),
    }
    defect = float(np.sqrt(l2_norm_sq(dv) / vv)) if vv > 0 else 0.0
    return TTFormReport(identities, inequalities, q, vv, defect, budget)


# ---------------------------------------------------------------------- seeded samples
def weyl_part(r: np.ndarray, space: ModelSpace) -> np.ndarray:
    """Totally trace-free part of an algebraic curvature tensor (background metric)."""
    n = space.n
    g = space.metric
    ginv = space.inverse_metric
    g = np.broadcast_to(g, (n, n) + space.grid.shape)
    ric = np.einsum("il...,ijkl...->jk...", ginv, r)
    scal = np.einsum("jk...,jk...->...", ginv, ric)
    p = (ric - scal * g / (2.0 * (n - 1))) / (n - 2)
    return r - kulkarni_nomizu(p, g)


def random_tt_field(space: ModelSpace, seed: int, **kw) -> TensorField:
    """Compactly supported TT tensor v_ij = W_{ikjl,}^{lk} from a seeded Weyl-symmetric W.

    On a constant-curvature background the divergence of such a double
    divergence vanishes identically (the commutators only produce traces
    of W), so the TT defect is pure discretization error.
    """
    kw.setdefault("min_frequency", 1)
    rng = np.random.default_rng(seed)
    a = random_field(space, 2, rng, symmetry="sym2", **kw).data
    b = random_field(space, 2, rng, symmetry="sym2", **kw).data
    w = weyl_part(kulkarni_nomizu(a, b), space)
    wf = TensorField(w, space)
    inner = divergence_slot(wf, 3)  # [i, k, j]
    v = TensorField(divergence_slot(inner, 1).data, space, "sym2")
    return traceless_part(v)


def random_trace_field(space: ModelSpace, seed: int, *, mean_zero: bool | None = None, **kw) -> TensorField:
    """f h with f a seeded bump; on the sphere f is made mean-zero with the envelope."""
    kw.setdefault("min_frequency", 1)
    f = random_field(space, 0, seed, **kw)
    mean_zero = space.c == 1 if mean_zero is None else mean_zero
    if mean_zero:
        env = bump_envelope(space, kw.get("decay", 7.5)) if not space.grid.periodic else np.ones(space.grid.shape)
        e = TensorField(env, space)
        one = TensorField(np.ones(space.grid.shape), space)
        f = f - (l2_inner(f, one) / l2_inner(e, one)) * e
    return scalar_times_metric(f)


def random_imk_field(space: ModelSpace, seed: int, **kw) -> TensorField:
    """K alpha for a seeded compactly supported 1-form alpha.

    Constant modes are excluded: on the torus they are conformal Killing.
    """
    kw.setdefault("min_frequency", 1)
    return conformal_killing(random_field(space, 1, seed, **kw))


def random_component_field(component: str, space: ModelSpace, seed: int, **kw) -> TensorField:
    if component == "trace":
        return random_trace_field(space, seed, **kw)
    if component == "imK":
        return random_imk_field(space, seed, **kw)
    if component == "TT":
        return random_tt_field(space, seed, **kw)
    raise ValueError(f"unknown component {component!r}")


def trace_quadratic_form(f: TensorField) -> float:
    """(fh, L(fh)) = n (f, coefficient of h in L(fh))."""
    return f.n * l2_inner(f, apply_L_trace(f))


def one_form_gap_check(alpha: TensorField) -> dict:
    """|d alpha|^2 + |d* alpha|^2 against (n-3)^2/4 |alpha|^2 and |K alpha|^2 <= 5(n-1)(...)."""
    n = alpha.n
    da = hodge_d(alpha)
    dsa = hodge_dstar(alpha)
    energy = form_inner(da, da) + form_inner(dsa, dsa)
    aa = l2_norm_sq(alpha)
    kk = l2_norm_sq(conformal_killing(alpha))
    return {"energy": energy, "norm_sq": aa, "k_norm_sq": kk,
            "gap_ratio": energy / aa, "gap_bound": 0.25 * (n - 3) ** 2,
            "k_ratio": kk / energy, "k_bound": 5.0 * (n - 1)}


@dataclass
class SpectralReport:
    """Rayleigh-quotient samples for one component on one background."""

    component: str
    c: int
    n: int
    bound: float
    tolerance: float
    seeds: list = field(default_factory=list)
    quotients: list = field(default_factory=list)
    passed: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(self.passed)

    @property
    def max_quotient(self) -> float:
        return max(self.quotients) if self.quotients else float("nan")

    def to_json(self) -> str:
        d = asdict(self)
        d["all_passed"] = self.all_passed
        return json.dumps(d)


def rayleigh_sample(component: str, space: ModelSpace, seeds, *, bound: float | None = None,
                    tolerance: float = 1e-3, **field_kw) -> SpectralReport:
    """Sample (v, Lv)/(v, v) over seeded fields of one component and compare to ``bound``."""
    bound = claimed_bound(component, space.c, space.n) if bound is None else bound
    rep = SpectralReport(component, space.c, space.n, bound, tolerance)
    for s in seeds:
        v = random_component_field(component, space, int(s), **field_kw)
        norm_sq = l2_norm_sq(v)
        if norm_sq == 0.0:
            raise ValueError(f"seed {s} gives a zero {component} sample")
        q = l2_inner(v, apply_L(v)) / norm_sq
        rep.seeds.append(int(s))
        rep.quotients.append(float(q))
        rep.passed.append(bool(q <= bound + tolerance))
    return rep


__all__ = [
    "COMPONENTS",
    "IdentityResidual",
    "SpectralReport",
    "SphereKernelResult",
    "TTFormReport",
    "a_norm_identity_residual",
    "bilaplacian_commutator_residual",
    "claimed_bound",
    "commuted_rough_laplacian_residual",
    "delta_star_commutator_residual",
    "fourth_order_commutator_residual",
    "gap_constants",
    "harmonic_multiplicity",
    "imK_form_expansion",
    "k_commutator_residual",
    "k_hodge_residual",
    "koiso_identity_residual",
    "kstar_k_residual",
    "one_form_gap_check",
    "random_component_field",
    "random_imk_field",
    "random_trace_field",
    "random_tt_field",
    "rayleigh_sample",
    "sphere_trace_kernel",
    "sphere_trace_spectrum",
    "torus_mode_check",
    "torus_mode_eigenvalue",
    "torus_mode_field",
    "torus_mode_spectrum",
    "trace_quadratic_form",
    "tt_form_checks",
    "weitzenbock_residual",
    "weitzenbock_suite",
    "weyl_part",
]
