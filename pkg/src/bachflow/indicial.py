"""Indicial roots of lambda - L at the boundary of hyperbolic space.

Symmetric 2-tensors split into four invariant subspaces for the indicial
operator: pure trace (V0), the trace-free diagonal block with q_00 and
q_aa tied together (V1), mixed q_0a components (V2) and tangential
trace-free q_ab (V3).  On each the indicial operator is a quartic in the
exponent.  Two bases are used:

* ``"dx"``: components in dx^i, exponent gamma;
* ``"dx/rho"``: components in dx^i / x, exponent mu = gamma + 2.

The quartics are assembled from the first-order building blocks
(x d/dx acting on x^gamma) and the closed-form roots are checked against
them.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

SUBSPACES = ("V0", "V1", "V2", "V3")
BASES = ("dx", "dx/rho")
_SHIFT = {"dx": 0.0, "dx/rho": 2.0}


def _check(n: int, basis: str, subspace: str | None = None):
    if n < 3:
        raise ValueError(f"dimension must be at least 3, got {n}")
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}, got {basis!r}")
    if subspace is not None and subspace not in SUBSPACES:
        raise ValueError(f"subspace must be one of {SUBSPACES}, got {subspace!r}")


def center(n: int, basis: str = "dx/rho") -> float:
    """Symmetry center of the root pairs: (n-1)/2 for dx/rho, (n-5)/2 for dx."""
    _check(n, basis)
    return (n - 1) / 2.0 - 2.0 + _SHIFT[basis]


def indicial_operator(subspace: str, n: int) -> Polynomial:
    """Indicial polynomial of L on a subspace, in the dx-basis exponent gamma.

    The variable stands for x d/dx acting on x^gamma.
    """
    _check(n, "dx", subspace)
    d = Polynomial([0.0, 1.0])
    if subspace == "V0":
        # the trace coefficient -Delta^2 f/2 - c n Delta f/2 on x^(gamma+2),
        # Delta x^m = (m^2 + (1-n) m) x^m
        m = d + 2
        s = m ** 2 + (1 - n) * m
        return -0.5 * s ** 2 + 0.5 * n * s
    p = -d ** 2 + (n - 5) * d
    if subspace == "V1":
        q = p + (4 * n - 6)
        b = -(n - 1) * (d ** 2 + (5 - n) * d + (6 - 3 * n))
        return -0.5 * q ** 2 + 0.5 * (n + 2) * q + b - n
    if subspace == "V2":
        w = p + (3 * n - 4)
        return -0.5 * w ** 2 + 0.5 * (n + 2) * w - 0.5 * n * (d + 3) * (d + 2 - n) - n
    w = p + (2 * n - 4)
    return -0.5 * w ** 2 + 0.5 * (n + 2) * w - n


def indicial_polynomial(subspace: str, n: int, lam: complex = 0.0, basis: str = "dx",
                        *, monic: bool = False) -> np.ndarray:
    """Coefficients (highest degree first) of I(L) - lambda in the basis exponent.

    The roots are the indicial roots of lambda - L.  Unnormalized, the
    leading coefficient is -1/2.
    """
    _check(n, basis, subspace)
    poly = indicial_operator(subspace, n)
    if basis == "dx/rho":
        poly = poly(Polynomial([-2.0, 1.0]))
    coef = poly.coef.astype(complex)
    coef[0] -= lam
    out = coef[::-1]
    if monic:
        out = out / out[0]
    if np.all(np.isreal(out)):
        out = out.real
    return out


# radical families mu = c +- sqrt(outer +- inner_scale * sqrt(inner_const - inner_lambda * lam)) / 2
def _family(subspace: str, n: int) -> tuple[float, float, float, float]:
    if subspace in ("V0", "V1"):
        return n * n + 1.0, 2.0, float(n * n), 8.0
    if subspace == "V2":
        return n * n - 2.0 * n + 5.0, 4.0, float((n - 1) ** 2), 2.0
    return n * n - 4.0 * n + 5.0, 2.0, float((n - 2) ** 2), 8.0


def outer_radicands(subspace: str, n: int, lam: complex) -> np.ndarray:
    """The two expressions under the outer square root (inner sign +, -)."""
    _check(n, "dx", subspace)
    outer, scale, const, slope = _family(subspace, n)
    inner = np.sqrt(np.asarray(const - slope * np.asarray(lam, dtype=complex), dtype=complex))
    return np.stack([outer + scale * inner, outer - scale * inner])


def indicial_roots(subspace: str, n: int, lam: complex = 0.0, basis: str = "dx/rho") -> np.ndarray:
    """The four closed-form roots, signs enumerated as (+,+), (+,-), (-,+), (-,-).

    The first sign is the outer one.  Principal square roots throughout;
    the sign enumeration covers both branches.
    """
    _check(n, basis, subspace)
    radicand = outer_radicands(subspace, n, lam)
    x = np.sqrt(radicand)
    c = center(n, basis)
    return np.array([c + 0.5 * x[0], c + 0.5 * x[1], c - 0.5 * x[0], c - 0.5 * x[1]])


def root_residual(subspace: str, n: int, lam: complex = 0.0, basis: str = "dx/rho") -> float:
    """Largest |quartic(root)| over the closed-form roots, relative to the coefficient scale."""
    coef = indicial_polynomial(subspace, n, lam, basis)
    roots = indicial_roots(subspace, n, lam, basis)
    vals = np.abs(np.polyval(coef, roots))
    scale = np.abs(np.polyval(np.abs(coef), np.abs(roots)))
    return float(np.max(vals / np.maximum(scale, 1.0)))


@dataclass(frozen=True)
class IndicialResult:
    """All sixteen roots of lambda - L for one (n, lambda, basis)."""

    n: int
    lam: complex
    basis: str
    roots: dict
    center: float
    radius: float

    def table(self) -> list[tuple[str, int, complex]]:
        return [(s, i, complex(r)) for s in SUBSPACES for i, r in enumerate(self.roots[s])]


def indicial_result(n: int, lam: complex = 0.0, basis: str = "dx/rho") -> IndicialResult:
    roots = {s: indicial_roots(s, n, lam, basis) for s in SUBSPACES}
    c = center(n, basis)
    radius = min(float(np.min(np.abs(r.real - c))) for r in roots.values())
    return IndicialResult(n, complex(lam), basis, roots, c, radius)


def indicial_radius(n: int, lam: complex = 0.0) -> float:
    """min over the sixteen roots of |Re mu - (n-1)/2| (basis independent)."""
    return indicial_result(n, lam).radius


def expected_roots_at_zero(n: int) -> dict:
    """Integer roots at lambda = 0 in the dx basis."""
    return {
        "V0": [-3, -2, n - 3, n - 2],
        "V1": [-3, -2, n - 3, n - 2],
        "V2": [-3, -1, n - 4, n - 2],
        "V3": [-2, -1, n - 4, n - 3],
    }


@dataclass(frozen=True)
class Thresholds:
    """Critical values of epsilon (lambda = -epsilon) and the rate/radius constants.

    ``eps_V1`` and ``eps_V3`` are labeled as in the threshold formulas;
    ``controls`` names the subspace whose inner root pair reaches the
    center at each threshold.
    """

    n: int
    eps_V0: float
    eps_V1: float
    eps_V2: float
    eps_V3: float
    a: float
    r: float

    @property
    def controls(self) -> dict:
        return {"eps_V0": ("V0", "V1"), "eps_V2": ("V0", "V1"), "eps_V1": ("V3",), "eps_V3": ("V2",)}


def thresholds(n: int) -> Thresholds:
    _check(n, "dx")
    return Thresholds(
        n,
        eps_V0=(n * n - 1) ** 2 / 32.0,
        eps_V1=((n - 2) ** 2 - 1) ** 2 / 32.0,
        eps_V2=(n * n - 1) ** 2 / 32.0,
        eps_V3=((n - 1) ** 2 - 4) ** 2 / 32.0,
        a=(n - 2) * (3 * n - 11) * (5 * n - 13) / 128.0,
        r=(n - 1) / 8.0,
    )


@dataclass(frozen=True)
class ScanResult:
    """Outcome of a half-plane radius scan.

    A sampled minimum above the target is evidence, not proof: the scan
    can only falsify the claimed bound.
    """

    n: int
    a_bound: float
    points: int
    min_radius: float
    argmin: complex
    target: float

    @property
    def holds(self) -> bool:
        return self.min_radius >= self.target - 1e-9


def _radius_many(n: int, lam: np.ndarray) -> np.ndarray:
    c = center(n, "dx/rho")
    out = np.full(lam.shape, np.inf)
    for s in ("V0", "V2", "V3"):  # V1 shares the V0 quartic
        x = np.sqrt(outer_radicands(s, n, lam))
        out = np.minimum(out, np.min(np.abs(0.5 * x.real), axis=0))
    return out


def default_lambda_grid(a_bound: float, *, delta: float = 1e-6, re_max: float = 50.0,
                        im_max: float = 1e4, n_re: int = 60, n_im: int = 401) -> np.ndarray:
    """Rectangle [-a+delta, re_max] x [-im_max, im_max] with log-spaced imaginary parts, plus rays."""
    near = -a_bound + delta + np.concatenate([[0.0], np.geomspace(1e-6, a_bound + 1.0, n_re // 2 - 1)])
    re = np.concatenate([near, np.linspace(near[-1], re_max, n_re - n_re // 2 + 1)[1:]])
    pos = np.geomspace(1e-4, im_max, n_im // 2)
    im = np.concatenate([-pos[::-1], [0.0], pos])
    grid = (re[:, None] + 1j * im[None, :]).ravel()
    rays = np.concatenate([(-a_bound + delta) + 1j * np.geomspace(1.0, im_max, 200) * sgn for sgn in (1, -1)])
    return np.concatenate([grid, rays])


def scan_half_plane(n: int, a_bound: float | None = None, lam_grid=None) -> ScanResult:
    """Minimum indicial radius over sampled lambda with Re lambda > -a_bound."""
    a_bound = thresholds(n).a if a_bound is None else float(a_bound)
    lam = default_lambda_grid(a_bound) if lam_grid is None else np.asarray(lam_grid, dtype=complex).ravel()
    lam = lam[lam.real > -a_bound]
    if lam.size == 0:
        raise ValueError("the lambda grid has no points in the half-plane")
    rad = _radius_many(n, lam)
    i = int(np.argmin(rad))
    return ScanResult(n, a_bound, int(lam.size), float(rad[i]), complex(lam[i]), (n - 1) / 8.0)


def asymptotic_arguments(n: int, eps: float, y: float) -> dict:
    """Arguments of the outer radicands and of their square roots at lambda = -eps + i y.

    For large |y| the radicands approach arguments +-pi/4 or +-3pi/4, so
    their principal roots have arguments +-pi/8 or +-3pi/8 and nonzero real part.
    """
    lam = complex(-eps, y)
    out = {}
    for s in ("V0", "V2", "V3"):
        rad = outer_radicands(s, n, lam)
        out[s] = {"radicand_args": np.angle(rad).tolist(), "root_args": np.angle(np.sqrt(rad)).tolist(),
                  "root_real": np.sqrt(rad).real.tolist()}
    return out


def roots_csv(results: list[IndicialResult]) -> str:
    """CSV with columns n, Re lambda, Im lambda, subspace, root index, Re mu, Im mu, radius."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "re_lambda", "im_lambda", "subspace", "root_index", "re_mu", "im_mu", "radius"])
    for res in results:
        for s, i, r in res.table():
            w.writerow([res.n, repr(res.lam.real), repr(res.lam.imag), s, i, repr(r.real), repr(r.imag),
                        repr(res.radius)])
    return buf.getvalue()


__all__ = [
    "BASES",
    "IndicialResult",
    "SUBSPACES",
    "ScanResult",
    "Thresholds",
    "asymptotic_arguments",
    "center",
    "default_lambda_grid",
    "expected_roots_at_zero",
    "indicial_operator",
    "indicial_polynomial",
    "indicial_radius",
    "indicial_result",
    "indicial_roots",
    "outer_radicands",
    "root_residual",
    "roots_csv",
    "scan_half_plane",
    "thresholds",
]
