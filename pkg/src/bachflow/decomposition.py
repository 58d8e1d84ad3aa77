"""L^2-orthogonal splitting v = K alpha + f h + v0 of symmetric 2-tensors.

The pure-trace part is pointwise (f = tr v / n).  The image-of-K part
solves the normal equations K*K alpha = delta v_traceless: by exact
per-mode algebra on the torus, and by preconditioned conjugate gradients
elsewhere, with alpha confined to an interior mask so that it stays
compactly supported.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .model_spaces import ModelSpace
from .tensor_fields import (
    TensorField,
    conformal_killing,
    divergence,
    l2_inner,
    l2_norm_sq,
    scalar_times_metric,
    trace,
    traceless_part,
)


@dataclass(frozen=True)
class SolverInfo:
    """Conjugate-gradient diagnostics."""

    iterations: int
    relative_residual: float
    converged: bool
    min_ritz_value: float
    max_ritz_value: float


@dataclass(frozen=True, eq=False)
class SplitResult:
    """Parts of the splitting and their defects."""

    alpha: TensorField
    f: TensorField
    tt: TensorField
    k_alpha: TensorField
    divergence_residual: float
    trace_residual: float
    orthogonality: dict = field(default_factory=dict)
    reconstruction: float = 0.0
    solver: SolverInfo | None = None

    @property
    def trace_part(self) -> TensorField:
        return scalar_times_metric(self.f)


def _wavenumbers(space: ModelSpace) -> list[np.ndarray]:
    g = space.grid
    out = []
    for a in range(space.n):
        p = g.axis_of(a)
        if p is None:
            out.append(np.zeros((1,) * g.ndim))
            continue
        shape = [1] * g.ndim
        shape[p] = g.shape[p]
        period = g.upper[p] - g.lower[p]
        out.append((2.0 * np.pi * np.fft.fftfreq(g.shape[p], d=period / g.shape[p])).reshape(shape))
    return out


def _modal_split(v: TensorField):
    space = v.space
    n = space.n
    axes = tuple(range(2, 2 + space.grid.ndim))
    tr = np.einsum("ii...->...", v.data)
    v0 = v.data - tr * np.eye(n).reshape((n, n) + (1,) * space.grid.ndim) / n
    vh = np.fft.fftn(v0, axes=axes)
    xi = np.broadcast_arrays(*_wavenumbers(space), np.zeros(space.grid.shape))[:-1]
    xi = np.stack(xi)
    k2 = np.sum(xi ** 2, axis=0)
    safe = np.where(k2 > 0, k2, 1.0)
    # K* v0 = delta v0 has symbol -i xi_j v0_ij
    rhs = -1j * np.einsum("j...,ij...->i...", xi, vh)
    beta = (n - 2.0) / (2.0 * n - 2.0)
    xr = np.einsum("i...,i...->...", xi, rhs)
    ah = (2.0 / safe) * (rhs - beta * xi * xr / safe)
    ah = np.where(k2 > 0, ah, 0.0)
    xa = np.einsum("i...,i...->...", xi, ah)
    kah = 0.5j * (np.einsum("i...,j...->ij...", ah, xi) + np.einsum("i...,j...->ij...", xi, ah))
    kah -= (1j / n) * xa * np.eye(n).reshape((n, n) + (1,) * space.grid.ndim)
    alpha = np.real(np.fft.ifftn(ah, axes=tuple(range(1, 1 + space.grid.ndim))))
    ka = np.real(np.fft.ifftn(kah, axes=axes))
    return (TensorField(alpha, space), TensorField(tr / n, space), TensorField(v0 - ka, space, "sym2"),
            TensorField(ka, space, "sym2"))


def interior_mask(space: ModelSpace, margin: int | None = None) -> np.ndarray:
    """Boolean mask of nodes at least ``margin`` cells inside every non-periodic edge."""
    g = space.grid
    margin = space.order + 2 if margin is None else margin
    mask = np.ones(g.shape, dtype=bool)
    if g.periodic:
        return mask
    for p in range(g.ndim):
        shape = [1] * g.ndim
        shape[p] = g.shape[p]
        idx = np.arange(g.shape[p])
        keep = (idx >= margin) & (idx < g.shape[p] - margin)
        mask = mask & keep.reshape(shape)
    return mask


def _preconditioner(space: ModelSpace) -> np.ndarray:
    """Rough diagonal of K*K: the principal part 1/2 |xi|^2 at the grid cutoff."""
    g = space.grid
    ginv = space.inverse_metric_diagonal
    d = np.full(np.broadcast_shapes(ginv.shape[1:], (1,) * g.ndim), float(space.n - 1))
    for a in range(space.n):
        p = g.axis_of(a)
        if p is not None:
            d = d + 2.0 * ginv[a] / g.spacing[p] ** 2
    return np.broadcast_to(d, g.shape)


def conjugate_gradient(apply, rhs: TensorField, inner, precond, *, tol: float = 1e-10,
                       maxiter: int = 500) -> tuple[TensorField, SolverInfo]:
    """Preconditioned CG in the L^2 inner product ``inner``.

    Written out (rather than calling a library solver) so that the Lanczos
    coefficients are available for the Ritz-value degeneracy diagnostic.
    """
    x = TensorField.zeros(rhs.space, rhs.rank)
    r = rhs
    z = precond(r)
    p = z
    rz = inner(r, z)
    norm0 = np.sqrt(max(inner(rhs, rhs), 1e-300))
    alphas, betas = [], []
    res = 1.0
    it = 0
    for it in range(1, maxiter + 1):
        ap = apply(p)
        pap = inner(p, ap)
        if pap <= 0:
            break
        a = rz / pap
        x = x + a * p
        r = r - a * ap
        alphas.append(a)
        res = np.sqrt(max(inner(r, r), 0.0)) / norm0
        if res < tol:
            break
        z = precond(r)
        rz_new = inner(r, z)
        b = rz_new / rz
        betas.append(b)
        rz = rz_new
        p = z + b * p
    ritz = _ritz_values(alphas, betas)
    return x, SolverInfo(it, float(res), bool(res < tol), float(ritz[0]), float(ritz[-1]))


def _ritz_values(alphas, betas) -> np.ndarray:
    if not alphas:
        return np.array([np.nan])
    k = len(alphas)
    diag = np.empty(k)
    off = np.empty(max(k - 1, 0))
    for j in range(k):
        diag[j] = 1.0 / alphas[j] + (betas[j - 1] / alphas[j - 1] if j > 0 else 0.0)
        if j < k - 1:
            off[j] = np.sqrt(max(betas[j], 0.0)) / alphas[j]
    return eigvalsh_tridiagonal(diag, off)


def _symmetrized_derivative(alpha: np.ndarray, space: ModelSpace) -> np.ndarray:
    """(S alpha)_ij = (d_i alpha_j + d_j alpha_i) / 2 - Gamma^k_ij alpha_k."""
    n = space.n
    out = np.zeros((n, n) + alpha.shape[1:])
    for i in range(n):
        d = space.partial(alpha, i)
        if np.isscalar(d):
            continue
        out[i] += 0.5 * d
        out[:, i] += 0.5 * d
    return out - np.einsum("kij...,k...->ij...", space.christoffel, alpha)


def _symmetrized_derivative_transpose(w: np.ndarray, space: ModelSpace) -> np.ndarray:
    """Exact transpose of S for the quadrature inner products, valid away from the box edge.

    Centered stencils are antisymmetric, so the transpose of d_i is -d_i
    acting on the weighted field.
    """
    n = space.n
    ginv = space.inverse_metric_diagonal
    omega = space.volume_weight
    wt = w * omega * ginv[:, None] * ginv[None, :]
    out = -np.einsum("kij...,ij...->k...", space.christoffel, wt)
    for i in range(n):
        d = space.partial(wt[i], i)
        if not np.isscalar(d):
            out = out - d
    return out / (omega * ginv)


def _traceless(w: np.ndarray, space: ModelSpace) -> np.ndarray:
    ginv = space.inverse_metric_diagonal
    tr = np.einsum("a...,aa...->...", ginv, w)
    return w - tr * space.metric / space.n


def _least_squares_alpha(v0: TensorField, tol: float, maxiter: int | None):
    """Minimize ||v0 - K alpha||^2 over alpha supported on the interior mask.

    The normal operator is assembled from the exact discrete transpose of
    K, so it is symmetric positive definite and CG applies.
    """
    space = v0.space
    mask = interior_mask(space)
    diag = _preconditioner(space)

    def apply(a: TensorField) -> TensorField:
        ka = _traceless(_symmetrized_derivative(a.data * mask, space), space)
        return TensorField(_symmetrized_derivative_transpose(ka, space) * mask, space)

    def precond(r: TensorField) -> TensorField:
        return TensorField(r.data / diag, space)

    rhs = TensorField(_symmetrized_derivative_transpose(v0.data, space) * mask, space)
    maxiter = 10 * int(np.prod(space.grid.shape)) if maxiter is None else maxiter
    return conjugate_gradient(apply, rhs, l2_inner, precond, tol=tol, maxiter=maxiter)


def _residual_region(space: ModelSpace) -> np.ndarray:
    return interior_mask(space, 2 * (space.order + 2))


def split(v: TensorField, *, tol: float = 1e-10, maxiter: int | None = None) -> SplitResult:
    """Split v into K alpha + f h + v0 with v0 (numerically) TT.

    On the flat torus the image-of-K part is removed mode by mode with the
    exact Fourier symbol.  Elsewhere alpha is supported on
    :func:`interior_mask` (the box stands in for the whole space), and the
    reported TT defects are measured on a region a stencil width inside
    that mask.
    """
    if v.rank != 2:
        raise ValueError("split expects a symmetric 2-tensor")
    space = v.space
    info = None
    if space.grid.periodic and space.c == 0:
        alpha, f, tt, ka = _modal_split(v)
        region = np.ones(space.grid.shape)
    else:
        f = trace(v) / space.n
        v0 = traceless_part(v)
        alpha, info = _least_squares_alpha(v0, tol, maxiter)
        ka = conformal_killing(alpha)
        tt = TensorField((v0 - ka).data, space, "sym2")
        region = _residual_region(space)
    fh = scalar_times_metric(f)
    vv = max(l2_norm_sq(v), 1e-300)
    ortho = {
        "K_alpha.fh": l2_inner(ka, fh) / vv,
        "K_alpha.tt": l2_inner(ka, tt) / vv,
        "fh.tt": l2_inner(fh, tt) / vv,
    }
    recon = np.sqrt(l2_norm_sq(v - ka - fh - tt) / vv)
    tt_norm = max(np.sqrt(l2_norm_sq(tt)), 1e-300)
    div_res = np.sqrt(l2_norm_sq(TensorField(divergence(tt).data * region, space))) / tt_norm
    tr_res = np.sqrt(l2_norm_sq(trace(tt))) / tt_norm
    if info is not None and not info.converged:
        warnings.warn(f"splitting solver stopped at relative residual {info.relative_residual:.2e}",
                      RuntimeWarning, stacklevel=2)
    return SplitResult(alpha, f, tt, ka, float(div_res), float(tr_res), ortho, float(recon), info)


def tt_project(v: TensorField, **kw) -> TensorField:
    """The TT part v0 of the splitting."""
    return split(v, **kw).tt


def coercivity_check_K(alpha: TensorField) -> float:
    """||K alpha||^2 / ||alpha||^2."""
    den = l2_norm_sq(alpha)
    if den <= 0:
        raise ValueError("coercivity ratio needs a nonzero 1-form")
    return l2_norm_sq(conformal_killing(alpha)) / den


def k_star_k_symbol(xi: np.ndarray, n: int) -> np.ndarray:
    """Flat symbol of K*K at covector xi: |xi|^2 I / 2 + (1/2 - 1/n) xi xi^T."""
    xi = np.asarray(xi, dtype=float)
    return 0.5 * np.dot(xi, xi) * np.eye(len(xi)) + (0.5 - 1.0 / n) * np.outer(xi, xi)


__all__ = [
    "SplitResult",
    "SolverInfo",
    "split",
    "tt_project",
    "coercivity_check_K",
    "conjugate_gradient",
    "interior_mask",
    "k_star_k_symbol",
]
