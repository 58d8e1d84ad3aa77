"""Curvature of a general metric field and the gauge-adjusted flow.

The Christoffel symbols of a metric g are obtained from finite (or
Fourier) differences of g; curvature then needs one more difference of
the Christoffel symbols, and the Bach tensor two further covariant
derivatives, four metric derivatives in all.

Sign conventions: R_ijk^l = d_i Gamma^l_jk - d_j Gamma^l_ik
+ Gamma^m_jk Gamma^l_im - Gamma^m_ik Gamma^l_jm, R_ijkl = R_ijk^m g_ml,
Ric_jk = g^il R_ijkl, so the round sphere has R_ijkl = g_il g_jk - g_ik g_jl.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model_spaces import ModelSpace
from .tensor_fields import (
    Connection,
    TensorField,
    _nabla,
    _laplacian,
    _trace,
    _divergence_slot,
    metric_field,
)


def _move_in(a: np.ndarray) -> np.ndarray:
    return np.moveaxis(a, (0, 1), (-2, -1))


def _move_out(a: np.ndarray) -> np.ndarray:
    return np.moveaxis(a, (-2, -1), (0, 1))


@dataclass(frozen=True, eq=False)
class MetricField:
    """A positive-definite sym2 field g on a background grid."""

    g: TensorField

    def __post_init__(self):
        if self.g.rank != 2:
            raise ValueError("a metric field must have rank 2")
        if self.g.symmetry != "sym2":
            object.__setattr__(self, "g", TensorField(self.g.data, self.g.space, "sym2"))
        if not np.all(np.isfinite(self.g.data)):
            raise FloatingPointError("metric field contains non-finite values")
        lam = np.linalg.eigvalsh(_move_in(self.g.data))
        if lam.min() <= 0.0:
            raise ValueError(f"metric lost positive definiteness (min eigenvalue {lam.min():.3e})")

    @classmethod
    def background(cls, space: ModelSpace) -> "MetricField":
        return cls(metric_field(space))

    @classmethod
    def perturbed(cls, v: TensorField, s: float = 1.0) -> "MetricField":
        """h + s v."""
        return cls(TensorField(metric_field(v.space).data + s * v.data, v.space, "sym2"))

    @property
    def space(self) -> ModelSpace:
        return self.g.space

    @property
    def n(self) -> int:
        return self.g.space.n

    @cached_property
    def inverse(self) -> np.ndarray:
        return _move_out(np.linalg.inv(_move_in(self.g.data)))

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(np.linalg.det(_move_in(self.g.data)))

    @cached_property
    def metric_derivative(self) -> np.ndarray:
        """dg[a, b, c] = d_a g_bc by differences."""
        space = self.space
        out = np.zeros((self.n,) + self.g.data.shape)
        for a in range(self.n):
            d = space.partial(self.g.data, a)
            if not np.isscalar(d):
                out[a] = d
        return out

    @cached_property
    def christoffel(self) -> np.ndarray:
        dg = self.metric_derivative
        low = 0.5 * (np.einsum("ijl...->lij...", dg) + np.einsum("jil...->lij...", dg) - dg)
        return np.einsum("kl...,lij...->kij...", self.inverse, low)

    @cached_property
    def connection(self) -> Connection:
        return Connection(self.space, self.inverse, self.christoffel, self.sqrt_det, diagonal=False)

    def volume(self) -> float:
        return float(np.sum(self.connection.volume_weight))


@dataclass(frozen=True)
class Curvature:
    """Riemann (all lowered and with last index raised), Ricci and scalar curvature."""

    riemann: np.ndarray
    riemann_up: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray


def curvature_from_metric(g: MetricField) -> Curvature:
    """Riemann, Ricci and scalar curvature of g via differenced Christoffels."""
    gam = g.christoffel
    space = g.space
    n = g.n
    dgam = np.zeros((n,) + gam.shape)
    for a in range(n):
        d = space.partial(gam, a)
        if not np.isscalar(d):
            dgam[a] = d
    # dgam[a, l, j, k] = d_a Gamma^l_jk
    r_up = (np.einsum("iljk...->ijkl...", dgam) - np.einsum("jlik...->ijkl...", dgam)
            + np.einsum("mjk...,lim...->ijkl...", gam, gam)
            - np.einsum("mik...,ljm...->ijkl...", gam, gam))
    riem = np.einsum("ijkm...,ml...->ijkl...", r_up, g.g.data)
    ric = np.einsum("ijki...->jk...", r_up)
    ric = 0.5 * (ric + np.swapaxes(ric, 0, 1))
    scal = np.einsum("jk...,jk...->...", g.inverse, ric)
    return Curvature(riem, r_up, ric, scal)


def kulkarni_nomizu(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a o b)_ijkl = a_il b_jk + a_jk b_il - a_ik b_jl - a_jl b_ik."""
    return (np.einsum("il...,jk...->ijkl...", a, b) + np.einsum("jk...,il...->ijkl...", a, b)
            - np.einsum("ik...,jl...->ijkl...", a, b) - np.einsum("jl...,ik...->ijkl...", a, b))


def schouten(g: MetricField, curv: Curvature | None = None) -> TensorField:
    """P = (Ric - S g / (2(n-1))) / (n-2)."""
    curv = curvature_from_metric(g) if curv is None else curv
    n = g.n
    p = (curv.ricci - curv.scalar * g.g.data / (2.0 * (n - 1))) / (n - 2)
    return TensorField(p, g.space, "sym2")


def weyl(g: MetricField, curv: Curvature | None = None) -> np.ndarray:
    """W = R - P o g."""
    curv = curvature_from_metric(g) if curv is None else curv
    return curv.riemann - kulkarni_nomizu(schouten(g, curv).data, g.g.data)


def _raise_both(g: MetricField, a: np.ndarray) -> np.ndarray:
    return np.einsum("ka...,lb...,ab...->kl...", g.inverse, g.inverse, a)


def bach_tensor(g: MetricField) -> TensorField:
    """B_ij = P_{ij,k}^k - P_{ik,j}^k + P^kl W_kijl."""
    curv = curvature_from_metric(g)
    conn = g.connection
    p = schouten(g, curv).data
    w = curv.riemann - kulkarni_nomizu(p, g.g.data)
    lap = _laplacian(conn, p, 2)
    ddp = _nabla(conn, _nabla(conn, p, 2), 3)  # [i, k, j, m] = P_{ik,jm}
    cross = _trace(conn, ddp, 1, 3, 4)
    quad = np.einsum("kl...,kijl...->ij...", _raise_both(g, p), w)
    return TensorField(lap - cross + quad, g.space, "sym2")


def bach_rhs_expanded(g: MetricField) -> TensorField:
    """Right-hand side of the modified Bach flow in curvature form.

    (1/(n-2)) Ric_{ij,k}^k - S_{,ij}/(2(n-1)) - 2 R_jki^m P_m^k - Ric_j^m P_im
    - P^kl (P o g)_kijl, which equals B + Delta S g / (2(n-1)(n-2)).
    """
    n = g.n
    curv = curvature_from_metric(g)
    conn = g.connection
    p = schouten(g, curv).data
    lap_ric = _laplacian(conn, curv.ricci, 2)
    hess_s = _nabla(conn, _nabla(conn, curv.scalar, 0), 1)
    return TensorField(lap_ric / (n - 2) - hess_s / (2.0 * (n - 1)) + _quadratic_terms(g, curv, p),
                       g.space, "sym2")


def _quadratic_terms(g: MetricField, curv: Curvature, p: np.ndarray) -> np.ndarray:
    ginv = g.inverse
    p_mixed = np.einsum("mk...,ka...->ma...", p, ginv)      # P_m^a
    ric_mixed = np.einsum("jp...,pm...->jm...", curv.ricci, ginv)  # Ric_j^m
    t1 = -2.0 * np.einsum("jkim...,mk...->ij...", curv.riemann_up, p_mixed)
    t2 = -np.einsum("jm...,im...->ij...", ric_mixed, p)
    t3 = -np.einsum("kl...,kijl...->ij...", _raise_both(g, p), kulkarni_nomizu(p, g.g.data))
    return t1 + t2 + t3


def bianchi(g: MetricField | TensorField, space: ModelSpace | None = None) -> TensorField:
    """[beta_h(g)]_i = -h^jk g_{ij,k} + (h^jk g_jk)_{,i}/2, derivatives of h."""
    gf = g.g if isinstance(g, MetricField) else g
    conn = Connection.background(gf.space)
    div = _divergence_slot(conn, gf.data, 1, 2)
    tr = _trace(conn, gf.data, 0, 1, 2)
    return TensorField(-div + 0.5 * _nabla(conn, tr, 0), gf.space)


@dataclass(frozen=True)
class GaugeParams:
    """Coefficients (mu, nu) of delta_h g and d tr_h g in the gauge vector."""

    mu: float
    nu: float

    @classmethod
    def self_adjoint(cls, c: float, n: int) -> "GaugeParams":
        return cls(-c * (n - 1) / 2.0, -c / 4.0)


def gauge_vector(g: MetricField | TensorField, c: float | None = None, gauge: GaugeParams | None = None) -> TensorField:
    """Z = Delta_h beta_h(g) / 2 + mu delta_h g + nu d tr_h g.

    The default gauge is the self-adjoint one, mu = -c(n-1)/2, nu = -c/4.
    """
    gf = g.g if isinstance(g, MetricField) else g
    space = gf.space
    c = space.c if c is None else c
    gauge = GaugeParams.self_adjoint(c, space.n) if gauge is None else gauge
    conn = Connection.background(space)
    beta = bianchi(gf).data
    delta_g = -_divergence_slot(conn, gf.data, 1, 2)
    dtr = _nabla(conn, _trace(conn, gf.data, 0, 1, 2), 0)
    z = 0.5 * _laplacian(conn, beta, 1) + gauge.mu * delta_g + gauge.nu * dtr
    return TensorField(z, space)


def flow_rhs(g: MetricField, c: float | None = None, gauge: GaugeParams | None = None) -> TensorField:
    """Right-hand side F(g) of the gauge-adjusted Bach flow.

    F(g) = (Ric_{ij,k}^k + 2 delta_g^* Z)/(n-2) - 2 R_jki^m P_m^k - Ric_j^m P_im
    - P^kl (P o g)_kijl, with covariant derivatives of g except inside Z.
    """
    n = g.n
    c = g.space.c if c is None else c
    curv = curvature_from_metric(g)
    conn = g.connection
    p = schouten(g, curv).data
    z = gauge_vector(g, c, gauge).data
    dz = _nabla(conn, z, 1)
    sym_dz = 0.5 * (dz + np.swapaxes(dz, 0, 1))
    lap_ric = _laplacian(conn, curv.ricci, 2)
    out = (lap_ric + 2.0 * sym_dz) / (n - 2) + _quadratic_terms(g, curv, p)
    return TensorField(out, g.space, "sym2")


def metric_divergence(u: TensorField, g: MetricField) -> TensorField:
    """delta_g of a sym2 field: -u_{ij,}^j with respect to g."""
    return TensorField(-_divergence_slot(g.connection, u.data, 1, 2), u.space)


def metric_trace(u: TensorField, g: MetricField) -> TensorField:
    return TensorField(_trace(g.connection, u.data, 0, 1, 2), u.space)


def conformal_scalar_oracle(space: ModelSpace, phi: np.ndarray, dphi: list, ddphi: list) -> np.ndarray:
    """Scalar curvature of e^{2 phi} times the flat metric, from closed-form phi derivatives.

    S = -e^{-2 phi} (2(n-1) Lap phi + (n-2)(n-1) |d phi|^2), the standard
    formula for a conformal change of a flat metric.
    """
    n = space.n
    lap = sum(ddphi)
    grad2 = sum(d ** 2 for d in dphi)
    return -np.exp(-2.0 * phi) * (2.0 * (n - 1) * lap + (n - 2) * (n - 1) * grad2)
