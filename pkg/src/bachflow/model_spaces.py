"""Constant-curvature backgrounds on structured coordinate grids.

Every chart here has a diagonal metric whose entries and first
derivatives are known in closed form.  Only the *active* coordinates
carry grid axes; the remaining coordinates are directions along which
the metric is invariant (translations of the torus and of the half-space
boundary, rotation angles of the torus-symmetric sphere chart), so a
field that does not depend on them is a legitimate field on the space
and all of its derivatives along them vanish.

Field arrays have shape ``(n,) * rank + grid.shape``.  Metric-derived
arrays are kept in a broadcastable shape with the same number of grid
axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .stencils import finite_difference, fourier_derivative


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product grid over the active chart coordinates.

    Non-periodic axes are cell centred, so the midpoint rule is the
    quadrature and no node sits on the box edge.
    """

    active: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    shape: tuple[int, ...]
    periodic: bool

    def __post_init__(self):
        if not (len(self.active) == len(self.lower) == len(self.upper) == len(self.shape)):
            raise ValueError("grid axes, bounds and shape must have equal length")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("grid bounds must satisfy lower < upper")
        if any(s < 1 for s in self.shape):
            raise ValueError("grid shape entries must be positive")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / s for lo, hi, s in zip(self.lower, self.upper, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def nodes(self, axis: int) -> np.ndarray:
        lo, h, s = self.lower[axis], self.spacing[axis], self.shape[axis]
        offset = 0.0 if self.periodic else 0.5
        return lo + (np.arange(s) + offset) * h

    def axis_of(self, coordinate: int) -> int | None:
        try:
            return self.active.index(coordinate)
        except ValueError:
            return None


class Chart:
    """Diagonal-metric coordinate chart of a constant-curvature space."""

    name = "chart"
    curvature = 0
    periodic = False

    def __init__(self, n: int):
        self.n = n

    # coordinates that may be left without a grid axis
    def ignorable(self) -> frozenset[int]:
        return frozenset()

    def default_active(self) -> tuple[int, ...]:
        return tuple(range(self.n))

    def default_bounds(self, a: int) -> tuple[float, float]:
        raise NotImplementedError

    def default_coordinate(self, a: int) -> float:
        return 0.0

    def fiber_volume(self, inactive: Sequence[int]) -> float:
        """Measure of the ignored directions (per unit length if unbounded)."""
        return 1.0

    def metric_diag(self, x: list[np.ndarray]) -> list[np.ndarray]:
        raise NotImplementedError

    def metric_diag_derivative(self, x: list[np.ndarray]) -> list[list[np.ndarray]]:
        """``out[a][b]`` is the partial derivative along coordinate a of g_bb."""
        raise NotImplementedError

    def boundary_defining_function(self, x: list[np.ndarray]) -> np.ndarray:
        return np.ones_like(x[0], dtype=float)

    def validate(self, lower, upper, active):
        pass


class FlatTorus(Chart):
    """Flat torus R^n / (L Z)^n with the Euclidean metric."""

    name = "torus"
    curvature = 0
    periodic = True

    def __init__(self, n: int, period: float = 1.0):
        super().__init__(n)
        if period <= 0:
            raise ValueError("torus period must be positive")
        self.period = float(period)

    def ignorable(self):
        return frozenset(range(self.n))

    def default_bounds(self, a):
        return 0.0, self.period

    def fiber_volume(self, inactive):
        return self.period ** len(inactive)

    def metric_diag(self, x):
        return [np.ones_like(x[0], dtype=float) for _ in range(self.n)]

    def metric_diag_derivative(self, x):
        zero = np.zeros_like(x[0], dtype=float)
        return [[zero] * self.n for _ in range(self.n)]

    def validate(self, lower, upper, active):
        for lo, hi in zip(lower, upper):
            if not np.isclose(hi - lo, self.period):
                raise ValueError("torus grid must span exactly one period per axis")


class HyperbolicHalfSpace(Chart):
    """Upper half-space model x^{-2}(dx^2 + dy^2), coordinate 0 is x > 0."""

    name = "hyperbolic"
    curvature = -1

    def __init__(self, n: int, x_range=(0.5, 2.0), y_range=(-1.0, 1.0)):
        super().__init__(n)
        x_min, x_max = map(float, x_range)
        if x_min <= 0:
            raise ValueError(f"half-space slab needs x_min > 0, got {x_min}")
        if x_max <= x_min:
            raise ValueError("half-space slab needs x_max > x_min")
        self.x_range = (x_min, x_max)
        self.y_range = tuple(map(float, y_range))

    def ignorable(self):
        return frozenset(range(1, self.n))

    def default_active(self):
        return (0, 1)

    def default_bounds(self, a):
        return self.x_range if a == 0 else self.y_range

    def metric_diag(self, x):
        g = x[0] ** -2.0
        return [g] * self.n

    def metric_diag_derivative(self, x):
        dg = -2.0 * x[0] ** -3.0
        zero = np.zeros_like(dg)
        return [[dg] * self.n if a == 0 else [zero] * self.n for a in range(self.n)]

    def boundary_defining_function(self, x):
        return np.asarray(x[0], dtype=float)

    def validate(self, lower, upper, active):
        if 0 not in active:
            raise ValueError("the x coordinate of the half-space must be active")
        i = active.index(0)
        if lower[i] <= 0:
            raise ValueError(f"half-space slab needs x_min > 0, got {lower[i]}")


class SphereStereographic(Chart):
    """Unit sphere in stereographic coordinates, 4 (1 + |x|^2)^{-2} dx^2."""

    name = "stereographic"
    curvature = 1

    def __init__(self, n: int, half_width: float = 1.0):
        super().__init__(n)
        self.half_width = float(half_width)

    def default_bounds(self, a):
        return -self.half_width, self.half_width

    def metric_diag(self, x):
        r2 = sum(xi ** 2 for xi in x)
        g = 4.0 / (1.0 + r2) ** 2
        return [g] * self.n

    def metric_diag_derivative(self, x):
        r2 = sum(xi ** 2 for xi in x)
        return [[-16.0 * x[a] / (1.0 + r2) ** 3] * self.n for a in range(self.n)]

    def validate(self, lower, upper, active):
        if len(active) != self.n:
            raise ValueError("the stereographic chart has no symmetry directions: all axes must be active")


class SphereToric(Chart):
    """Unit sphere as a torus-invariant warped product.

    With n + 1 = 2m + e (e in {0, 1}) write S^n in C^m x R^e as
    points (r_1 e^{i phi_1}, ..., r_m e^{i phi_m}, t).  The moduli and t
    are the ambient coordinates of a quotient sphere S^q, q = n - m,
    parametrised by hyperspherical angles theta_1..theta_q (coordinates
    0..q-1).  The metric is the round metric of S^q plus sum r_i^2 dphi_i^2,
    so the m angles phi_i (coordinates q..n-1) are symmetry directions.
    """

    name = "toric"
    curvature = 1

    def __init__(self, n: int, margin: float = 0.15):
        super().__init__(n)
        self.m = (n + 1) // 2
        self.e = (n + 1) % 2
        self.q = n - self.m
        self.margin = float(margin)
        # factors[b] lists (angle index, 's' or 'c') whose product squared is g_bb
        q = self.q
        factors = []
        for j in range(q):
            factors.append([(i, "s") for i in range(j)])
        ambient = []
        for j in range(q + 1):
            f = [(i, "s") for i in range(j)]
            if j < q:
                f.append((j, "c"))
            ambient.append(f)
        for i in range(self.m):
            factors.append(ambient[self.e + i])
        self.factors = factors

    def ignorable(self):
        return frozenset(range(self.q, self.n))

    def default_active(self):
        return tuple(range(self.q))

    def default_bounds(self, a):
        if a < self.q:
            return self.margin, 0.5 * np.pi - self.margin
        return 0.0, 2.0 * np.pi

    def fiber_volume(self, inactive):
        return (2.0 * np.pi) ** len(inactive)

    def _entry(self, x, fac):
        out = np.ones_like(x[0], dtype=float)
        for i, kind in fac:
            out = out * (np.sin(x[i]) if kind == "s" else np.cos(x[i])) ** 2
        return out

    def metric_diag(self, x):
        return [self._entry(x, f) for f in self.factors]

    def metric_diag_derivative(self, x):
        g = self.metric_diag(x)
        zero = np.zeros_like(x[0], dtype=float)
        out = [[zero] * self.n for _ in range(self.n)]
        for b, fac in enumerate(self.factors):
            for i, kind in fac:
                logd = 2.0 / np.tan(x[i]) if kind == "s" else -2.0 * np.tan(x[i])
                out[i][b] = out[i][b] + g[b] * logd
        return out

    def validate(self, lower, upper, active):
        for a in range(self.q):
            if a not in active:
                raise ValueError("all quotient angles of the toric sphere chart must be active")
        for lo, hi, a in zip(lower, upper, active):
            if a < self.q and (lo <= 0 or hi >= 0.5 * np.pi + 1e-12):
                raise ValueError("quotient angles must stay inside (0, pi/2)")


CHARTS = {
    "torus": FlatTorus,
    "hyperbolic": HyperbolicHalfSpace,
    "stereographic": SphereStereographic,
    "toric": SphereToric,
}


@dataclass(frozen=True, eq=False)
class ModelSpace:
    """Constant-curvature background sampled on a structured grid.

    Use :func:`make_model` to construct one.  ``derivative`` selects the
    partial-derivative backend: ``"fd"`` (centred finite differences of
    ``order``) or ``"spectral"`` (exact Fourier differentiation, torus
    only).
    """

    c: int
    n: int
    chart: Chart
    grid: Grid
    order: int = 4
    derivative: str = "fd"

    # ---------------------------------------------------------------- coordinates
    @cached_property
    def coords(self) -> list[np.ndarray]:
        nd = self.grid.ndim
        out = []
        for a in range(self.n):
            p = self.grid.axis_of(a)
            if p is None:
                out.append(np.full((1,) * nd, self.chart.default_coordinate(a)))
            else:
                shape = [1] * nd
                shape[p] = self.grid.shape[p]
                out.append(self.grid.nodes(p).reshape(shape))
        return out

    def _full(self, arr) -> np.ndarray:
        nd = self.grid.ndim
        arr = np.asarray(arr, dtype=float)
        return arr.reshape(arr.shape + (1,) * (nd - arr.ndim)) if arr.ndim < nd else arr

    def _bshape(self, arrays) -> tuple[int, ...]:
        return np.broadcast_shapes(*(np.shape(a) for a in arrays), (1,) * self.grid.ndim)

    # ---------------------------------------------------------------- metric data
    @cached_property
    def metric_diagonal(self) -> np.ndarray:
        """Diagonal entries h_aa, shape (n, *bshape)."""
        g = self.chart.metric_diag(self.coords)
        shape = self._bshape(g)
        return np.stack([np.broadcast_to(gi, shape) for gi in g]).astype(float)

    @cached_property
    def inverse_metric_diagonal(self) -> np.ndarray:
        return 1.0 / self.metric_diagonal

    @cached_property
    def metric(self) -> np.ndarray:
        """Full metric array h_ab, shape (n, n, *bshape)."""
        d = self.metric_diagonal
        out = np.zeros((self.n, self.n) + d.shape[1:])
        for a in range(self.n):
            out[a, a] = d[a]
        return out

    @cached_property
    def inverse_metric(self) -> np.ndarray:
        d = self.inverse_metric_diagonal
        out = np.zeros((self.n, self.n) + d.shape[1:])
        for a in range(self.n):
            out[a, a] = d[a]
        return out

    @cached_property
    def metric_derivative(self) -> np.ndarray:
        """Partial derivatives dh[a, b, c] = d_a h_bc (closed form)."""
        dd = self.chart.metric_diag_derivative(self.coords)
        shape = self._bshape([x for row in dd for x in row] + [self.metric_diagonal[0]])
        out = np.zeros((self.n,) * 3 + shape)
        for a in range(self.n):
            if self.grid.axis_of(a) is None and a in self.chart.ignorable():
                continue
            for b in range(self.n):
                out[a, b, b] = np.broadcast_to(dd[a][b], shape)
        return out

    @cached_property
    def christoffel(self) -> np.ndarray:
        """Christoffel symbols gamma[k, i, j] = Gamma^k_ij (closed form)."""
        dg = self.metric_derivative
        ginv = self.inverse_metric_diagonal
        lowered = 0.5 * (np.einsum("ijk...->kij...", dg) + np.einsum("jik...->kij...", dg) - dg)
        return ginv[:, None, None] * lowered

    @cached_property
    def is_flat_chart(self) -> bool:
        return not np.any(self.christoffel)

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(np.prod(self.metric_diagonal, axis=0))

    @cached_property
    def volume_weight(self) -> np.ndarray:
        """sqrt(det h) times the cell measure (and the symmetry-fiber measure)."""
        inactive = [a for a in range(self.n) if self.grid.axis_of(a) is None]
        w = self.sqrt_det * self.grid.cell_volume * self.chart.fiber_volume(inactive)
        return np.broadcast_to(w, self.grid.shape)

    @cached_property
    def rho(self) -> np.ndarray:
        """Boundary defining function (x on the half-space, 1 otherwise)."""
        return np.broadcast_to(self._full(self.chart.boundary_defining_function(self.coords)),
                               self.grid.shape)

    # ---------------------------------------------------------------- exact curvature
    def riemann_exact(self) -> np.ndarray:
        h = self.metric
        return self.c * (np.einsum("il...,jk...->ijkl...", h, h)
                         - np.einsum("ik...,jl...->ijkl...", h, h))

    def ricci_exact(self) -> np.ndarray:
        return self.c * (self.n - 1) * self.metric

    def scalar_exact(self) -> float:
        return float(self.c * self.n * (self.n - 1))

    def schouten_exact(self) -> np.ndarray:
        return 0.5 * self.c * self.metric

    # ---------------------------------------------------------------- differentiation
    def partial(self, u: np.ndarray, a: int, deriv: int = 1) -> np.ndarray | float:
        """Partial derivative along chart coordinate ``a`` of a field array.

        Returns the scalar 0.0 for a symmetry direction.
        """
        p = self.grid.axis_of(a)
        if p is None:
            return 0.0
        axis = u.ndim - self.grid.ndim + p
        if self.derivative == "spectral":
            return fourier_derivative(u, axis, self.grid.upper[p] - self.grid.lower[p], deriv=deriv)
        return finite_difference(u, axis, self.grid.spacing[p], deriv=deriv,
                                 order=self.order, periodic=self.grid.periodic)

    def integrate(self, f: np.ndarray) -> float:
        """Integral of a scalar field with respect to the background volume."""
        return float(np.sum(f * self.volume_weight))

    def volume(self) -> float:
        return float(np.sum(self.volume_weight))

    def zeros(self, rank: int) -> np.ndarray:
        return np.zeros((self.n,) * rank + self.grid.shape)


def make_model(c: int, n: int, chart: str | Chart = None, *, shape: Sequence[int] | int = 16,
               active: Sequence[int] | None = None, bounds: Sequence[tuple[float, float]] | None = None,
               order: int = 4, derivative: str = "fd", **chart_params) -> ModelSpace:
    """Build a model space of curvature ``c`` and dimension ``n``.

    Parameters
    ----------
    c : {-1, 0, 1}
        Sectional curvature.
    n : int
        Dimension, at least 3.
    chart : str or Chart, optional
        ``"torus"``, ``"hyperbolic"``, ``"stereographic"`` or ``"toric"``.
        Defaults to the torus, the half-space, or the stereographic
        sphere according to ``c``.
    shape : int or sequence of int
        Grid points per active axis.
    active : sequence of int, optional
        Chart coordinates that carry a grid axis.
    bounds : sequence of (lo, hi), optional
        Coordinate box for the active axes.
    order : int
        Finite-difference order (even).
    derivative : {"fd", "spectral"}
        Partial-derivative backend; ``"spectral"`` needs the torus.
    **chart_params
        Forwarded to the chart (``period``, ``x_range``, ``y_range``, ...).
    """
    if c not in (-1, 0, 1):
        raise ValueError(f"curvature sign must be -1, 0 or 1, got {c}")
    if n < 3:
        raise ValueError(f"dimension must be at least 3, got {n}")
    if chart is None:
        chart = {0: "torus", -1: "hyperbolic", 1: "stereographic"}[c]
    if isinstance(chart, str):
        try:
            chart = CHARTS[chart](n, **chart_params)
        except KeyError:
            raise ValueError(f"unknown chart {chart!r}; choose from {sorted(CHARTS)}") from None
    elif chart_params:
        raise ValueError("chart parameters given together with a chart instance")
    if chart.n != n:
        raise ValueError("chart dimension does not match n")
    if chart.curvature != c:
        raise ValueError(f"chart {chart.name!r} has curvature {chart.curvature}, not {c}")
    active = tuple(chart.default_active() if active is None else active)
    if len(set(active)) != len(active) or any(not 0 <= a < n for a in active):
        raise ValueError("active coordinates must be distinct indices in [0, n)")
    missing = set(range(n)) - set(active) - chart.ignorable()
    if missing:
        raise ValueError(f"coordinates {sorted(missing)} are not symmetry directions and must be active")
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),) * len(active)
    if bounds is None:
        bounds = [chart.default_bounds(a) for a in active]
    lower = tuple(float(b[0]) for b in bounds)
    upper = tuple(float(b[1]) for b in bounds)
    chart.validate(lower, upper, active)
    if derivative not in ("fd", "spectral"):
        raise ValueError("derivative backend must be 'fd' or 'spectral'")
    if derivative == "spectral" and not chart.periodic:
        raise ValueError("spectral differentiation needs the periodic torus chart")
    grid = Grid(active, lower, upper, tuple(int(s) for s in shape), chart.periodic)
    return ModelSpace(c, n, chart, grid, order, derivative)


def _check_node(space: ModelSpace, node) -> tuple[int, ...]:
    node = tuple(int(i) for i in np.atleast_1d(node))
    if len(node) != space.grid.ndim or any(not 0 <= i < s for i, s in zip(node, space.grid.shape)):
        raise IndexError(f"node {node} outside grid of shape {space.grid.shape}")
    return node


def _at(arr: np.ndarray, lead: int, node: tuple[int, ...]) -> np.ndarray:
    idx = tuple(0 if arr.shape[lead + p] == 1 else i for p, i in enumerate(node))
    return np.array(arr[(Ellipsis,) + idx] if lead else arr[idx])


def metric_at(space: ModelSpace, node) -> np.ndarray:
    """Exact metric matrix at a grid node."""
    return _at(space.metric, 2, _check_node(space, node))


def christoffel_at(space: ModelSpace, node) -> np.ndarray:
    """Exact Christoffel symbols ``[k, i, j] = Gamma^k_ij`` at a grid node."""
    return _at(space.christoffel, 3, _check_node(space, node))


def volume_weight_at(space: ModelSpace, node) -> float:
    """Quadrature weight sqrt(det h) x cell measure at a grid node."""
    return float(space.volume_weight[_check_node(space, node)])
