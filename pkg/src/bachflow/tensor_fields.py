"""Grid-sampled covariant tensor fields and the first-order calculus on them.

A :class:`TensorField` stores components ``u[i_1, ..., i_k, *grid]`` with
all indices down.  Covariant derivatives append the new derivative slot
last, so ``covariant_derivative(v).data[i, j, k]`` is v_{ij,k}.

All differential operators take an optional :class:`Connection`.  The
default is the exact Levi-Civita connection of the background; the
curvature pipeline builds connections of other metrics from finite
differences.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import factorial
from string import ascii_lowercase

import numpy as np

from .model_spaces import ModelSpace

SYMMETRIES = ("none", "sym2", "sym-first-two", "skew-first-last")
_LETTERS = ascii_lowercase.replace("z", "")


class Connection:
    """Metric, inverse metric, Christoffel symbols and volume weight.

    Parameters
    ----------
    space : ModelSpace
        Supplies the grid, the differentiation backend and the quadrature.
    inverse_metric : ndarray, shape (n, n, *b)
    christoffel : ndarray, shape (n, n, n, *b)
        ``christoffel[k, i, j] = Gamma^k_ij``.
    sqrt_det : ndarray
        Square root of the metric determinant.
    diagonal : bool
        Whether the inverse metric is diagonal (enables cheaper paths).
    """

    def __init__(self, space: ModelSpace, inverse_metric, christoffel, sqrt_det, *, diagonal: bool):
        self.space = space
        self.n = space.n
        self.inverse_metric = inverse_metric
        self.christoffel = christoffel
        self.diagonal = diagonal
        self.flat = not np.any(christoffel)
        inactive = [a for a in range(space.n) if space.grid.axis_of(a) is None]
        w = sqrt_det * space.grid.cell_volume * space.chart.fiber_volume(inactive)
        self.volume_weight = np.broadcast_to(w, space.grid.shape)

    @classmethod
    def background(cls, space: ModelSpace) -> "Connection":
        key = "_background_connection"
        conn = space.__dict__.get(key)
        if conn is None:
            conn = cls(space, space.inverse_metric, space.christoffel, space.sqrt_det, diagonal=True)
            space.__dict__[key] = conn
        return conn

    @cached_property
    def inverse_diagonal(self) -> np.ndarray:
        return np.stack([self.inverse_metric[a, a] for a in range(self.n)])

    @cached_property
    def christoffel_entries(self) -> list[list[tuple[int, int, np.ndarray]]]:
        """Per direction a, the nonzero (k, i, Gamma^k_ai) triples."""
        out = []
        for a in range(self.n):
            row = []
            for k in range(self.n):
                for i in range(self.n):
                    gam = self.christoffel[k, a, i]
                    if np.any(gam):
                        row.append((k, i, gam))
            out.append(row)
        return out

    @cached_property
    def contracted_christoffel(self) -> np.ndarray:
        """gamma^k = g^{ab} Gamma^k_ab."""
        return np.einsum("ab...,kab...->k...", self.inverse_metric, self.christoffel)


def _metric_of(conn: Connection) -> np.ndarray:
    """Lowered metric of a connection."""
    if conn.diagonal:
        d = 1.0 / conn.inverse_diagonal
        out = np.zeros((conn.n, conn.n) + d.shape[1:])
        for a in range(conn.n):
            out[a, a] = d[a]
        return out
    g = np.linalg.inv(np.moveaxis(conn.inverse_metric, (0, 1), (-2, -1)))
    return np.moveaxis(g, (-2, -1), (0, 1))


def _conn(space_or_field, conn: Connection | None) -> Connection:
    if conn is not None:
        return conn
    space = space_or_field.space if isinstance(space_or_field, TensorField) else space_or_field
    return Connection.background(space)


@dataclass(frozen=True, eq=False)
class TensorField:
    """Covariant tensor field sampled on the grid of a model space.

    The declared symmetry is imposed on construction by projection, so it
    holds exactly afterwards.
    """

    data: np.ndarray
    space: ModelSpace
    symmetry: str = "none"

    def __post_init__(self):
        if self.symmetry not in SYMMETRIES:
            raise ValueError(f"unknown symmetry tag {self.symmetry!r}")
        data = np.asarray(self.data, dtype=float)
        g = self.space.grid.shape
        rank = data.ndim - len(g)
        if rank < 0 or data.shape[rank:] != g or any(s != self.space.n for s in data.shape[:rank]):
            raise ValueError(f"array of shape {data.shape} is not a tensor field on grid {g} with n={self.space.n}")
        if self.symmetry in ("sym2", "sym-first-two"):
            if rank < 2 or (self.symmetry == "sym2" and rank != 2):
                raise ValueError(f"symmetry {self.symmetry!r} needs a rank-2 (or higher) field")
            data = 0.5 * (data + np.swapaxes(data, 0, 1))
        elif self.symmetry == "skew-first-last":
            if rank < 2:
                raise ValueError("skew-first-last needs rank >= 2")
            data = 0.5 * (data - np.swapaxes(data, 0, rank - 1))
        object.__setattr__(self, "data", data)

    @property
    def rank(self) -> int:
        return self.data.ndim - self.space.grid.ndim

    @property
    def n(self) -> int:
        return self.space.n

    def _new(self, data, symmetry=None) -> "TensorField":
        return TensorField(data, self.space, self.symmetry if symmetry is None else symmetry)

    def __add__(self, other):
        if isinstance(other, TensorField):
            sym = self.symmetry if self.symmetry == other.symmetry else "none"
            return self._new(self.data + other.data, sym)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, TensorField):
            sym = self.symmetry if self.symmetry == other.symmetry else "none"
            return self._new(self.data - other.data, sym)
        return NotImplemented

    def __neg__(self):
        return self._new(-self.data)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return self._new(self.data * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._new(self.data / scalar)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    @classmethod
    def zeros(cls, space: ModelSpace, rank: int, symmetry: str = "none") -> "TensorField":
        return cls(space.zeros(rank), space, symmetry)

    @classmethod
    def from_function(cls, space: ModelSpace, func, symmetry: str = "none") -> "TensorField":
        """Evaluate ``func(coords)`` returning a component array (broadcast to the grid)."""
        arr = np.asarray(func(space.coords), dtype=float)
        lead = arr.ndim - space.grid.ndim
        return cls(np.broadcast_to(arr, arr.shape[:lead] + space.grid.shape).copy(), space, symmetry)


def metric_field(space: ModelSpace) -> TensorField:
    """The background metric h as a sym2 field."""
    return TensorField(np.broadcast_to(space.metric, (space.n,) * 2 + space.grid.shape).copy(), space, "sym2")


def scalar_times_metric(f: TensorField) -> TensorField:
    """The pure-trace tensor f h."""
    h = metric_field(f.space).data
    return TensorField(f.data * h, f.space, "sym2")


# ---------------------------------------------------------------------- array level kernels
def _subs(rank: int) -> str:
    return _LETTERS[:rank]


def _gamma_action(conn: Connection, u: np.ndarray, a: int, rank: int) -> np.ndarray | float:
    """sum over slots t of Gamma^c_{a i_t} u_{..c..}."""
    if conn.flat or rank == 0:
        return 0.0
    entries = conn.christoffel_entries[a]
    if not entries:
        return 0.0
    out = np.zeros(np.broadcast_shapes(u.shape, (1,) * rank + entries[0][2].shape))
    for t in range(rank):
        src = np.moveaxis(u, t, 0)
        dst = np.moveaxis(out, t, 0)
        for k, i, gam in entries:
            dst[i] += gam * src[k]
    return out


def _nabla_dir(conn: Connection, u: np.ndarray, a: int, rank: int) -> np.ndarray:
    d = conn.space.partial(u, a)
    g = _gamma_action(conn, u, a, rank)
    out = d - g
    if np.isscalar(out):
        return np.zeros_like(u)
    return np.broadcast_to(out, u.shape) if out.shape != u.shape else out


def _nabla_dir_slice(conn: Connection, u: np.ndarray, a: int, rank: int, slot: int) -> np.ndarray:
    """np.take(_nabla_dir(conn, u, a, rank), a, axis=slot) without forming the full derivative."""
    piece = np.take(u, a, axis=slot)
    d = conn.space.partial(piece, a)
    out = np.zeros(piece.shape) if np.isscalar(d) else np.array(d, dtype=float)
    if conn.flat:
        return out
    for k, i, gam in conn.christoffel_entries[a]:
        if i == a:
            out -= gam * np.take(u, k, axis=slot)
    if rank > 1:
        others = [t for t in range(rank) if t != slot]
        for pos, t in enumerate(others):
            src = np.moveaxis(piece, pos, 0)
            dst = np.moveaxis(out, pos, 0)
            for k, i, gam in conn.christoffel_entries[a]:
                dst[i] -= gam * src[k]
    return out


def _nabla(conn: Connection, u: np.ndarray, rank: int) -> np.ndarray:
    return np.stack([_nabla_dir(conn, u, a, rank) for a in range(conn.n)], axis=rank)


def _trace(conn: Connection, u: np.ndarray, s1: int, s2: int, rank: int) -> np.ndarray:
    idx = list(_subs(rank))
    idx[s1], idx[s2] = "y", "z"
    rest = "".join(c for c in idx if c not in "yz")
    return np.einsum(f"{''.join(idx)}...,yz...->{rest}...", u, conn.inverse_metric)


def _divergence_slot(conn: Connection, u: np.ndarray, slot: int, rank: int) -> np.ndarray:
    """Contraction of a fresh derivative index with ``slot`` of u."""
    n = conn.n
    out = 0.0
    if conn.diagonal:
        ginv = conn.inverse_diagonal
        for a in range(n):
            out = out + ginv[a] * _nabla_dir_slice(conn, u, a, rank, slot)
        return out
    for b in range(n):
        d = _nabla_dir(conn, u, b, rank)
        for a in range(n):
            out = out + conn.inverse_metric[a, b] * np.take(d, a, axis=slot)
    return out


def _laplacian(conn: Connection, u: np.ndarray, rank: int) -> np.ndarray:
    """Rough Laplacian g^{ab} u_{;ab}.

    For a diagonal metric the pure second derivative uses a direct
    second-difference stencil; the Christoffel terms are differenced once.
    """
    space = conn.space
    if not conn.diagonal:
        return _trace(conn, _nabla(conn, _nabla(conn, u, rank), rank + 1), rank, rank + 1, rank + 2)
    ginv = conn.inverse_diagonal
    out = np.zeros(u.shape)
    if conn.flat:
        for a in range(conn.n):
            d2 = space.partial(u, a, deriv=2)
            if not np.isscalar(d2):
                out += ginv[a] * d2
        return out
    gamma_vec = conn.contracted_christoffel
    for a in range(conn.n):
        ga_u = _gamma_action(conn, u, a, rank)
        nab = space.partial(u, a) - ga_u
        d2 = space.partial(u, a, deriv=2)
        dg = space.partial(np.broadcast_to(ga_u, u.shape), a) if not np.isscalar(ga_u) else 0.0
        second = d2 - dg - _gamma_action(conn, nab, a, rank)
        out = out + ginv[a] * second
        out = out - gamma_vec[a] * nab
    return out


def _inner_density(conn: Connection, u: np.ndarray, w: np.ndarray, rank: int) -> np.ndarray:
    if rank == 0:
        return u * w
    if conn.diagonal:
        ginv = conn.inverse_diagonal
        prod = u * w
        for t in range(rank):
            shape = [1] * rank
            shape[t] = conn.n
            prod = prod * ginv.reshape(tuple(shape) + ginv.shape[1:])
        return prod.reshape((-1,) + prod.shape[rank:]).sum(axis=0)
    raised = u
    idx = _subs(rank)
    for t in range(rank):
        src = idx[:t] + "z" + idx[t + 1:]
        raised = np.einsum(f"{src}...,z{idx[t]}...->{idx}...", raised, conn.inverse_metric)
    return (raised * w).reshape((-1,) + u.shape[rank:]).sum(axis=0)


# ---------------------------------------------------------------------- public operators
def covariant_derivative(u: TensorField, conn: Connection | None = None) -> TensorField:
    """nabla u, with the derivative index appended as the last slot."""
    conn = _conn(u, conn)
    return TensorField(_nabla(conn, u.data, u.rank), u.space)


def covariant_derivative_along(u: TensorField, a: int, conn: Connection | None = None) -> TensorField:
    """The component nabla_a u (same rank as u)."""
    conn = _conn(u, conn)
    return TensorField(_nabla_dir(conn, u.data, a, u.rank), u.space, u.symmetry)


def trace(u: TensorField, s1: int = 0, s2: int = 1, conn: Connection | None = None) -> TensorField:
    """Metric contraction of two slots."""
    conn = _conn(u, conn)
    return TensorField(_trace(conn, u.data, s1, s2, u.rank), u.space)


def divergence_slot(u: TensorField, slot: int, conn: Connection | None = None) -> TensorField:
    """u_{..a..,}^a: contraction of a derivative with ``slot``."""
    conn = _conn(u, conn)
    return TensorField(_divergence_slot(conn, u.data, slot, u.rank), u.space)


def divergence(v: TensorField, conn: Connection | None = None) -> TensorField:
    """delta v with [delta v]_i = -v_{ij,}^j (also -div of a 1-form)."""
    conn = _conn(v, conn)
    return TensorField(-_divergence_slot(conn, v.data, v.rank - 1, v.rank), v.space)


def delta_star(w: TensorField, conn: Connection | None = None) -> TensorField:
    """Formal adjoint of delta: (w_{i,j} + w_{j,i}) / 2."""
    conn = _conn(w, conn)
    return TensorField(_nabla(conn, w.data, 1), w.space, "sym2")


def conformal_killing(alpha: TensorField, conn: Connection | None = None) -> TensorField:
    """K alpha = delta* alpha - (1/n) (alpha_{k,}^k) h, trace free by construction."""
    conn = _conn(alpha, conn)
    da = _nabla(conn, alpha.data, 1)
    sym = 0.5 * (da + np.swapaxes(da, 0, 1))
    n = conn.n
    if conn.diagonal:
        ginv = conn.inverse_diagonal
        div = sum(ginv[a] * sym[a, a] for a in range(n))
        for a in range(n):
            sym[a, a] = sym[a, a] - div / (n * ginv[a])
        return TensorField(sym, alpha.space, "sym2")
    div = _trace(conn, sym, 0, 1, 2)
    return TensorField(sym - div * _metric_of(conn) / n, alpha.space, "sym2")


def rough_laplacian(u: TensorField, conn: Connection | None = None) -> TensorField:
    """Delta u = tr nabla^2 u (nonpositive spectrum)."""
    conn = _conn(u, conn)
    return TensorField(_laplacian(conn, u.data, u.rank), u.space, u.symmetry)


def hessian(f: TensorField, conn: Connection | None = None) -> TensorField:
    """f_{,ij} (symmetric for a scalar)."""
    conn = _conn(f, conn)
    return TensorField(_nabla(conn, _nabla(conn, f.data, 0), 1), f.space, "sym2")


def l2_inner(u: TensorField, w: TensorField, conn: Connection | None = None) -> float:
    """L^2 pairing of two fields of equal rank by quadrature."""
    if u.rank != w.rank:
        raise ValueError("l2_inner needs fields of equal rank")
    conn = _conn(u, conn)
    dens = _inner_density(conn, u.data, w.data, u.rank)
    return float(np.sum(dens * conn.volume_weight))


def l2_norm_sq(u: TensorField, conn: Connection | None = None) -> float:
    return l2_inner(u, u, conn)


def pointwise_norm_sq(u: TensorField, conn: Connection | None = None) -> np.ndarray:
    conn = _conn(u, conn)
    return _inner_density(conn, u.data, u.data, u.rank)


# ---------------------------------------------------------------------- T and A tensors
def t_tensor(v: TensorField, conn: Connection | None = None) -> TensorField:
    """T_ijk = v_{ij,k} - v_{jk,i}; skew in (i, k)."""
    dv = covariant_derivative(v, conn).data
    return TensorField(dv - np.einsum("jki...->ijk...", dv), v.space, "skew-first-last")


def a_tensor(v: TensorField, conn: Connection | None = None) -> TensorField:
    """A = nabla T."""
    return covariant_derivative(t_tensor(v, conn), conn)


# ---------------------------------------------------------------------- exterior calculus
def hodge_d(u: TensorField, conn: Connection | None = None) -> TensorField:
    """Exterior derivative of a 0- or 1-form; (d alpha)_ij = alpha_{j,i} - alpha_{i,j}."""
    conn = _conn(u, conn)
    if u.rank == 0:
        return TensorField(_nabla(conn, u.data, 0), u.space)
    if u.rank == 1:
        da = _nabla(conn, u.data, 1)
        return TensorField(np.swapaxes(da, 0, 1) - da, u.space, "skew-first-last")
    raise ValueError("hodge_d is implemented for 0- and 1-forms")


def hodge_dstar(u: TensorField, conn: Connection | None = None) -> TensorField:
    """Codifferential: d* alpha = -alpha_{k,}^k, (d* beta)_j = -beta_{ij,}^i."""
    conn = _conn(u, conn)
    if u.rank == 1:
        return TensorField(-_divergence_slot(conn, u.data, 0, 1), u.space)
    if u.rank == 2:
        return TensorField(-_divergence_slot(conn, u.data, 0, 2), u.space)
    raise ValueError("hodge_dstar is implemented for 1- and 2-forms")


def hodge_laplacian_1form(alpha: TensorField, conn: Connection | None = None) -> TensorField:
    """Delta_H alpha = -(d d* + d* d) alpha."""
    return -(hodge_d(hodge_dstar(alpha, conn), conn) + hodge_dstar(hodge_d(alpha, conn), conn))


def form_inner(u: TensorField, w: TensorField, conn: Connection | None = None) -> float:
    """Inner product of ordinary p-forms, (1/p!) times the full contraction."""
    return l2_inner(u, w, conn) / factorial(u.rank)


# ---------------------------------------------------------------------- T*M-valued forms
def d_nabla(u: TensorField, p: int, conn: Connection | None = None) -> TensorField:
    """Exterior covariant derivative of a T*M-valued p-form, p in {1, 2}.

    The value index is slot 1; the remaining slots are form slots.
    p = 1: [d eta]_ijk = (eta_{kj,i} - eta_{ij,k}) / 2.
    p = 2: [d T]_ijkl = (T_{kjl,i} + T_{lji,k} + T_{ijk,l}) / 3.
    """
    du = covariant_derivative(u, conn).data
    if p == 1:
        if u.rank != 2:
            raise ValueError("d_nabla with p=1 needs a rank-2 field")
        return TensorField(0.5 * (np.einsum("kji...->ijk...", du) - du), u.space)
    if p == 2:
        if u.rank != 3:
            raise ValueError("d_nabla with p=2 needs a rank-3 field")
        out = (np.einsum("kjli...->ijkl...", du) + np.einsum("ljik...->ijkl...", du)
               + np.einsum("ijkl...->ijkl...", du))
        return TensorField(out / 3.0, u.space)
    raise ValueError("p must be 1 or 2")


def d_nabla_star(u: TensorField, p: int, conn: Connection | None = None) -> TensorField:
    """Formal adjoint of :func:`d_nabla`, mapping (p+1)-forms to p-forms.

    p = 1: [d* w]_ij = -2 w_{kji,}^k.  p = 2: [d* w]_ijk = -3 w_{ljik,}^l.
    """
    conn = _conn(u, conn)
    if p == 1:
        if u.rank != 3:
            raise ValueError("d_nabla_star with p=1 needs a rank-3 field")
        div = _divergence_slot(conn, u.data, 0, 3)  # indices (j, i)
        return TensorField(-2.0 * np.einsum("ji...->ij...", div), u.space)
    if p == 2:
        if u.rank != 4:
            raise ValueError("d_nabla_star with p=2 needs a rank-4 field")
        div = _divergence_slot(conn, u.data, 0, 4)  # indices (j, i, k)
        return TensorField(-3.0 * np.einsum("jik...->ijk...", div), u.space)
    raise ValueError("p must be 1 or 2")


def valued_form_inner(u: TensorField, w: TensorField, p: int, conn: Connection | None = None) -> float:
    """Pairing of T*M-valued p-forms: p! times the full contraction."""
    return factorial(p) * l2_inner(u, w, conn)


# ---------------------------------------------------------------------- random fields
def bump_envelope(space: ModelSpace, decay: float = 7.5, center=None) -> np.ndarray:
    """Smooth Gaussian envelope on the active box, negligible on its edge.

    ``decay`` is the half-width of the box in units of the Gaussian width,
    so the envelope is exp(-decay^2 / 2) at the edge midpoints.
    """
    g = space.grid
    env = np.ones(g.shape)
    for p in range(g.ndim):
        lo, hi = g.lower[p], g.upper[p]
        mid = 0.5 * (lo + hi) if center is None else center[p]
        sigma = 0.5 * (hi - lo) / decay
        shape = [1] * g.ndim
        shape[p] = g.shape[p]
        env = env * np.exp(-0.5 * ((g.nodes(p) - mid) / sigma) ** 2).reshape(shape)
    return env


def random_field(space: ModelSpace, rank: int, seed: int | np.random.Generator = 0, *,
                 symmetry: str = "none", traceless: bool = False, modes: int = 3,
                 max_frequency: int = 2, decay: float = 7.5, min_frequency: int = 0) -> TensorField:
    """Seeded smooth test field.

    On the periodic torus the field is a random trigonometric polynomial;
    on other charts it is a Gaussian bump times such a polynomial, so it
    vanishes to round-off on the box edge.
    """
    rng = np.random.default_rng(seed)
    g = space.grid
    comp = (space.n,) * rank
    data = np.zeros(comp + g.shape)
    for _ in range(modes):
        coef = rng.standard_normal(comp)
        phase = np.zeros(g.shape)
        for p in range(g.ndim):
            k = rng.integers(min_frequency, max_frequency + 1)
            width = g.upper[p] - g.lower[p]
            shape = [1] * g.ndim
            shape[p] = g.shape[p]
            phase = phase + (2.0 * np.pi * k / width * (g.nodes(p) - g.lower[p])).reshape(shape)
        wave = np.cos(phase + rng.uniform(0.0, 2.0 * np.pi))
        data += coef.reshape(comp + (1,) * g.ndim) * wave
    if not g.periodic:
        data *= bump_envelope(space, decay)
    field = TensorField(data, space, symmetry)
    if traceless:
        if rank != 2:
            raise ValueError("traceless fields must have rank 2")
        field = traceless_part(field)
    return field


def traceless_part(v: TensorField, conn: Connection | None = None) -> TensorField:
    """v - (tr v / n) h (with respect to the background metric)."""
    conn = _conn(v, conn)
    tr = _trace(conn, v.data, 0, 1, 2)
    return TensorField(v.data - tr * _metric_of(conn) / v.n, v.space, v.symmetry)
