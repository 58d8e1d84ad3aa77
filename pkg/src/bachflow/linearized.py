"""The linearized gauge-adjusted Bach operator at a constant-curvature metric.

The operator is assembled term by term from covariant-derivative
primitives (not by differentiating the nonlinear flow), and every term
is available by name through :func:`linearized_terms`.  The flow
``dg/dt = F(g)`` linearizes at the background to ``L / (n - 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curvature import GaugeParams, MetricField, flow_rhs
from .tensor_fields import (
    TensorField,
    conformal_killing,
    delta_star,
    divergence,
    divergence_slot,
    hessian,
    l2_inner,
    l2_norm_sq,
    pointwise_norm_sq,
    rough_laplacian,
    scalar_times_metric,
    trace,
)

__all__ = [
    "GaugeParams",
    "div_vector",
    "double_divergence",
    "linearized_ricci",
    "linearized_schouten",
    "linearized_terms",
    "apply_L_general",
    "apply_L_adjoint_general",
    "apply_L",
    "apply_L_trace",
    "apply_L_tt",
    "apply_L_K",
    "quadratic_form",
    "rayleigh_quotient",
    "asymmetry_defect",
    "adjoint_defect",
    "gauge_sensitive_pair",
    "LinearizationCheck",
    "linearization_defect",
    "linearization_check",
]


def div_vector(v: TensorField) -> TensorField:
    """(div v)_i = v_{ip,}^p = -(delta v)_i."""
    return divergence_slot(v, 1)


def double_divergence(v: TensorField) -> TensorField:
    """v_{pm,}^{mp}, the scalar div div v."""
    return divergence_slot(div_vector(v), 0)


def _grad_div_sym(v: TensorField) -> TensorField:
    """(div v)_{i,j} + (div v)_{j,i}."""
    return 2.0 * delta_star(div_vector(v))


def _check_sym2(v: TensorField):
    if v.rank != 2:
        raise ValueError("expected a symmetric 2-tensor field")


def linearized_ricci(v: TensorField) -> TensorField:
    """First variation of Ricci at h in direction v.

    -Delta v / 2 + ((div v)_{i,j} + (div v)_{j,i}) / 2 - Hess(tr v) / 2
    - c (tr v) h + c n v.
    """
    _check_sym2(v)
    c, n = v.space.c, v.n
    tr = trace(v)
    out = -0.5 * rough_laplacian(v) + 0.5 * _grad_div_sym(v) - 0.5 * hessian(tr)
    if c:
        out = out - c * scalar_times_metric(tr) + (c * n) * v
    return TensorField(out.data, v.space, "sym2")


def linearized_schouten(v: TensorField) -> TensorField:
    """First variation of the Schouten tensor at h in direction v."""
    _check_sym2(v)
    c, n = v.space.c, v.n
    tr = trace(v)
    lap_tr = rough_laplacian(tr)
    dd = double_divergence(v)
    a = 1.0 / (2.0 * (n - 2))
    b = 1.0 / (2.0 * (n - 1) * (n - 2))
    out = (-a) * rough_laplacian(v) + a * _grad_div_sym(v) - a * hessian(tr)
    out = out + scalar_times_metric(b * lap_tr - b * dd)
    if c:
        out = out - (c * a) * scalar_times_metric(tr) + (c * n * a) * v
    return TensorField(out.data, v.space, "sym2")


def linearized_terms(v: TensorField, gauge: GaugeParams | None = None, *, adjoint: bool = False) -> dict[str, TensorField]:
    """Named terms of L v (or of its formal adjoint) in a general gauge.

    Terms with a vanishing coefficient are omitted.
    """
    _check_sym2(v)
    space = v.space
    c, n = space.c, space.n
    gauge = GaugeParams.self_adjoint(c, n) if gauge is None else gauge
    tr = trace(v)
    lap_v = rough_laplacian(v)
    terms: dict[str, TensorField] = {"bilaplacian": -0.5 * rough_laplacian(lap_v)}
    if c:
        terms["laplacian"] = (c * (n + 2) / 2.0) * lap_v
        terms["lap_trace_h"] = scalar_times_metric((-c) * rough_laplacian(tr))
        terms["trace_h"] = scalar_times_metric((c * c) * tr)
        terms["identity"] = (-c * c * n) * v
    k_gd = (c - 2.0 * gauge.mu) / 2.0
    if k_gd:
        terms["grad_div"] = k_gd * _grad_div_sym(v)
    k_dd, k_ht = -c, -(c - 4.0 * gauge.nu) / 2.0
    if adjoint:
        k_dd, k_ht = k_ht, k_dd
    if k_dd:
        terms["divdiv_h"] = scalar_times_metric(k_dd * double_divergence(v))
    if k_ht:
        terms["hess_trace"] = k_ht * hessian(tr)
    return terms


def _sum(terms: dict[str, TensorField], like: TensorField) -> TensorField:
    out = np.zeros_like(like.data)
    for t in terms.values():
        out = out + t.data
    return TensorField(out, like.space, "sym2")


def apply_L_general(v: TensorField, gauge: GaugeParams | None = None) -> TensorField:
    """L v for gauge parameters (mu, nu); c and n come from the background."""
    return _sum(linearized_terms(v, gauge), v)


def apply_L_adjoint_general(v: TensorField, gauge: GaugeParams | None = None) -> TensorField:
    """The formal L^2 adjoint L* v for gauge parameters (mu, nu)."""
    return _sum(linearized_terms(v, gauge, adjoint=True), v)


def apply_L(v: TensorField) -> TensorField:
    """L v in the self-adjoint gauge mu = -c(n-1)/2, nu = -c/4."""
    return apply_L_general(v, None)


def apply_L_trace(f: TensorField) -> TensorField:
    """Coefficient of h in L(f h): -Delta^2 f / 2 - (c n / 2) Delta f."""
    if f.rank != 0:
        raise ValueError("apply_L_trace expects a scalar field")
    c, n = f.space.c, f.n
    lap = rough_laplacian(f)
    out = -0.5 * rough_laplacian(lap)
    if c:
        out = out - (c * n / 2.0) * lap
    return out


def apply_L_tt(v: TensorField) -> TensorField:
    """L restricted to TT tensors: -Delta^2 v / 2 + c(n+2)/2 Delta v - c^2 n v."""
    _check_sym2(v)
    c, n = v.space.c, v.n
    lap = rough_laplacian(v)
    out = -0.5 * rough_laplacian(lap)
    if c:
        out = out + (c * (n + 2) / 2.0) * lap - (c * c * n) * v
    return TensorField(out.data, v.space, "sym2")


def apply_L_K(alpha: TensorField) -> TensorField:
    """L(K alpha) through the image-of-K form.

    -Delta^2 K alpha / 2 + c(n+2)/2 Delta K alpha - c n K delta K alpha - c^2 n K alpha;
    at c = -1 this is -(nabla* nabla)^2 K alpha / 2 + (n+2)/2 nabla* nabla K alpha
    + n K delta K alpha - n K alpha with nabla* nabla = -Delta.
    """
    if alpha.rank != 1:
        raise ValueError("apply_L_K expects a 1-form")
    c, n = alpha.space.c, alpha.n
    ka = conformal_killing(alpha)
    lap = rough_laplacian(ka)
    out = -0.5 * rough_laplacian(lap)
    if c:
        out = (out + (c * (n + 2) / 2.0) * lap - (c * n) * conformal_killing(divergence(ka))
               - (c * c * n) * ka)
    return TensorField(out.data, alpha.space, "sym2")


def quadratic_form(v: TensorField, gauge: GaugeParams | None = None) -> float:
    """(v, L v) by quadrature."""
    return l2_inner(v, apply_L_general(v, gauge))


def rayleigh_quotient(v: TensorField, lv: TensorField | None = None) -> float:
    """(v, L v) / (v, v)."""
    lv = apply_L(v) if lv is None else lv
    return l2_inner(v, lv) / l2_inner(v, v)



def asymmetry_defect(u: TensorField, w: TensorField, gauge: GaugeParams | None = None) -> float:
    """|(L u, w) - (u, L w)| / (|L u| |w| + |u| |L w|).

    Normalizing by the operator norms keeps the number resolution
    independent: a fourth-order operator makes the raw pairing large.
    """
    lu = apply_L_general(u, gauge)
    lw = apply_L_general(w, gauge)
    scale = (np.sqrt(l2_norm_sq(lu) * l2_norm_sq(w)) + np.sqrt(l2_norm_sq(u) * l2_norm_sq(lw)))
    return abs(l2_inner(lu, w) - l2_inner(u, lw)) / scale


def adjoint_defect(u: TensorField, w: TensorField, gauge: GaugeParams | None = None) -> float:
    """Normalized |(L u, w) - (u, L* w)| for the printed adjoint."""
    lu = apply_L_general(u, gauge)
    lsw = apply_L_adjoint_general(w, gauge)
    scale = (np.sqrt(l2_norm_sq(lu) * l2_norm_sq(w)) + np.sqrt(l2_norm_sq(u) * l2_norm_sq(lsw)))
    return abs(l2_inner(lu, w) - l2_inner(u, lsw)) / scale


def linearization_defect(v: TensorField, s: float, gauge: GaugeParams | None = None,
                         lv: TensorField | None = None) -> float:
    """Relative L^2 size of (F(h + s v) - F(h - s v)) / (2 s) - L v / (n - 2)."""
    _check_sym2(v)
    n = v.n
    lv = apply_L_general(v, gauge) if lv is None else lv
    fp = flow_rhs(MetricField.perturbed(v, s), gauge=gauge).data
    fm = flow_rhs(MetricField.perturbed(v, -s), gauge=gauge).data
    diff = TensorField((fp - fm) / (2.0 * s) - lv.data / (n - 2), v.space, "sym2")
    return float(np.sqrt(l2_norm_sq(diff) / l2_norm_sq(lv))) * (n - 2)


@dataclass(frozen=True)
class LinearizationCheck:
    steps: tuple[float, ...]
    defects: tuple[float, ...]
    order: float


def linearization_check(v: TensorField, amplitude: float = 0.08, halvings: int = 2,
                        gauge: GaugeParams | None = None) -> LinearizationCheck:
    """Fit the convergence order of :func:`linearization_defect` in the step.

    ``v`` is rescaled to unit pointwise sup-norm, so ``amplitude`` is the
    largest relative metric perturbation.  The step is halved ``halvings``
    times and the order is the least-squares slope in log-log.
    """
    peak = float(np.sqrt(pointwise_norm_sq(v).max()))
    unit = TensorField(v.data / peak, v.space, "sym2")
    lv = apply_L_general(unit, gauge)
    steps = tuple(amplitude / 2.0 ** k for k in range(halvings + 1))
    defects = tuple(linearization_defect(unit, s, gauge, lv) for s in steps)
    order = float(np.polyfit(np.log(steps), np.log(defects), 1)[0])
    return LinearizationCheck(steps, defects, order)


def gauge_sensitive_pair(space, seed: int = 0, width: float = 0.45) -> tuple[TensorField, TensorField]:
    """A seeded pair (f h, w) of unit geometric size on the half-space chart.

    Random bumps sized to the coordinate box are short compared with the
    curvature radius, so the fourth-order terms swamp the second-order
    gauge terms that break symmetry.  Here both envelopes are Gaussian in
    log x with width ``width``, which is order one in hyperbolic distance,
    and ``w`` is scaled by x^-2 so its pointwise norm is order one.
    """
    if space.c != -1 or space.grid.ndim != 2:
        raise ValueError("gauge_sensitive_pair needs a two-axis hyperbolic slab")
    rng = np.random.default_rng(seed)
    x = space.grid.nodes(0)[:, None]
    y = space.grid.nodes(1)[None, :]
    shift = (0.3, 0.4)
    env = np.exp(-np.log(x) ** 2 / (2 * width ** 2) - y ** 2 / 2)
    env_w = np.exp(-(np.log(x) - shift[0]) ** 2 / (2 * width ** 2) - (y - shift[1]) ** 2 / 2)
    f = TensorField(env * (1.0 + 0.5 * np.cos(np.log(x) + rng.uniform(0, 2 * np.pi))), space)
    m = rng.standard_normal((space.n, space.n))
    m = m + m.T
    w = TensorField(m[:, :, None, None] * (env_w / x ** 2)[None, None], space, "sym2")
    return scalar_times_metric(f), w
