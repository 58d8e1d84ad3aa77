"""Finite-difference and Fourier differentiation along one array axis.

Centered stencils are used in the interior.  On non-periodic axes the
first and last few rows switch to one-sided stencils of the same formal
order, so fields that do not vanish at the box edge (for example a
background metric) are still differentiated consistently.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights on nodes ``x`` evaluated at ``z``.

    Parameters
    ----------
    z : float
        Evaluation point.
    x : array_like
        Stencil nodes.
    m : int
        Highest derivative order wanted.

    Returns
    -------
    ndarray, shape (m + 1, len(x))
        Row ``d`` holds the weights of the ``d``-th derivative.
    """
    x = np.asarray(x, dtype=float)
    npts = len(x)
    c = np.zeros((npts, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, npts):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c.T


@lru_cache(maxsize=None)
def centered_weights(deriv: int, order: int) -> tuple[np.ndarray, int]:
    """Centered weights (in units of the spacing) and the half width."""
    if order % 2 or order < 2:
        raise ValueError(f"stencil order must be even and >= 2, got {order}")
    half = order // 2 + (deriv - 1) // 2
    offsets = np.arange(-half, half + 1)
    return fornberg_weights(0.0, offsets, deriv)[deriv], half


@lru_cache(maxsize=None)
def boundary_weights(deriv: int, order: int, size: int) -> tuple[np.ndarray, ...]:
    """One-sided weights for the leading rows of a non-periodic axis."""
    _, half = centered_weights(deriv, order)
    npts = min(order + deriv, size)
    nodes = np.arange(npts)
    return tuple(fornberg_weights(float(i), nodes, deriv)[deriv] for i in range(half))


def finite_difference(u: np.ndarray, axis: int, spacing: float, *, deriv: int = 1,
                      order: int = 4, periodic: bool = False) -> np.ndarray:
    """Derivative of ``u`` along ``axis`` by finite differences."""
    w, half = centered_weights(deriv, order)
    scale = spacing ** -deriv
    size = u.shape[axis]
    if periodic:
        out = np.zeros_like(u, dtype=float)
        for off, wk in zip(range(-half, half + 1), w):
            if wk != 0.0:
                out += wk * np.roll(u, -off, axis=axis)
        return out * scale
    if size < order + deriv + 1:
        raise ValueError(f"axis of length {size} too short for a stencil of order {order}")
    src = np.moveaxis(u, axis, 0)
    out = np.zeros(src.shape, dtype=float)
    for off, wk in zip(range(-half, half + 1), w):
        if wk != 0.0:
            out[half:size - half] += wk * src[half + off:size - half + off]
    rows = boundary_weights(deriv, order, size)
    npts = len(rows[0])
    for i, wi in enumerate(rows):
        out[i] = np.tensordot(wi, src[:npts], axes=1)
        out[size - 1 - i] = (-1) ** deriv * np.tensordot(wi, src[::-1][:npts], axes=1)
    out *= scale
    return np.moveaxis(out, 0, axis)


def fourier_derivative(u: np.ndarray, axis: int, period: float, *, deriv: int = 1) -> np.ndarray:
    """Exact modal derivative of a periodic field along ``axis``."""
    size = u.shape[axis]
    k = 2j * np.pi * np.fft.rfftfreq(size, d=period / size)
    symbol = k ** deriv
    if deriv % 2 and size % 2 == 0:
        symbol[-1] = 0.0
    shape = [1] * u.ndim
    shape[axis] = symbol.size
    spec = np.fft.rfft(u, axis=axis) * symbol.reshape(shape)
    return np.fft.irfft(spec, n=size, axis=axis)
