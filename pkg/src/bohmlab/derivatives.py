"""Grid derivatives (spectral and 2nd/4th-order central) and cubic point interpolation.

All routines act on the trailing `grid.dims` axes of an array, so fields with
a leading component axis pass through unchanged. Non-wrapping variants use
one-sided stencils of matching order at the array ends; they exist because
derived fields such as the unwrapped phase S or the velocity field need not
be periodic even when the wave function is.
"""

from __future__ import annotations

from enum import Enum
from functools import lru_cache

import numpy as np
import scipy.fft

from .errors import BohmlabError, ConfigurationError
from .grid import Boundary, Grid


class Scheme(str, Enum):
    SPECTRAL = "spectral"
    FD2 = "central_fd2"
    FD4 = "central_fd4"


def default_scheme(grid: Grid) -> Scheme:
    return Scheme.SPECTRAL if grid.boundary is Boundary.PERIODIC else Scheme.FD4


@lru_cache(maxsize=64)
def _wavenumbers(n: int, dx: float) -> np.ndarray:
    return 2.0 * np.pi * scipy.fft.fftfreq(n, d=dx)


def spectral_wavenumbers(grid: Grid, axis: int) -> np.ndarray:
    return _wavenumbers(grid.points[axis], grid.spacing[axis])


def _field_axis(values: np.ndarray, grid: Grid, axis: int) -> int:
    if axis < 0 or axis >= grid.dims:
        raise BohmlabError(f"axis {axis} out of range for a {grid.dims}D grid")
    return values.ndim - grid.dims + axis


def _reshape_along(vec: np.ndarray, values: np.ndarray, ax: int) -> np.ndarray:
    shape = [1] * values.ndim
    shape[ax] = vec.size
    return vec.reshape(shape)


def _check_spectral(grid: Grid) -> None:
    if grid.boundary is not Boundary.PERIODIC:
        raise ConfigurationError("spectral differentiation requires a periodic grid")


def gradient(values: np.ndarray, grid: Grid, axis: int, scheme: Scheme | None = None,
             wrap: bool | None = None) -> np.ndarray:
    """First derivative along one grid axis."""
    scheme = scheme or default_scheme(grid)
    ax = _field_axis(values, grid, axis)
    dx = grid.spacing[axis]
    if scheme is Scheme.SPECTRAL:
        _check_spectral(grid)
        k = _reshape_along(spectral_wavenumbers(grid, axis), values, ax)
        return scipy.fft.ifft(1j * k * scipy.fft.fft(values, axis=ax), axis=ax)
    if wrap is None:
        wrap = grid.boundary is Boundary.PERIODIC
    if scheme is Scheme.FD2:
        return _fd1_2(values, ax, dx, wrap)
    if scheme is Scheme.FD4:
        return _fd1_4(values, ax, dx, wrap)
    raise ConfigurationError(f"unknown scheme {scheme}")


def second_derivative(values: np.ndarray, grid: Grid, axis: int, scheme: Scheme | None = None,
                      wrap: bool | None = None) -> np.ndarray:
    scheme = scheme or default_scheme(grid)
    ax = _field_axis(values, grid, axis)
    dx = grid.spacing[axis]
    if scheme is Scheme.SPECTRAL:
        _check_spectral(grid)
        k = _reshape_along(spectral_wavenumbers(grid, axis), values, ax)
        return scipy.fft.ifft(-(k ** 2) * scipy.fft.fft(values, axis=ax), axis=ax)
    if wrap is None:
        wrap = grid.boundary is Boundary.PERIODIC
    if scheme is Scheme.FD2:
        return _fd2_2(values, ax, dx, wrap)
    if scheme is Scheme.FD4:
        return _fd2_4(values, ax, dx, wrap)
    raise ConfigurationError(f"unknown scheme {scheme}")


def laplacian(values: np.ndarray, grid: Grid, scheme: Scheme | None = None,
              wrap: bool | None = None) -> np.ndarray:
    out = second_derivative(values, grid, 0, scheme, wrap)
    for axis in range(1, grid.dims):
        out = out + second_derivative(values, grid, axis, scheme, wrap)
    return out


def _take(values: np.ndarray, ax: int, sl) -> np.ndarray:
    idx = [slice(None)] * values.ndim
    idx[ax] = sl
    return values[tuple(idx)]


def _set(values: np.ndarray, ax: int, sl, rhs) -> None:
    idx = [slice(None)] * values.ndim
    idx[ax] = sl
    values[tuple(idx)] = rhs


def _fd1_2(f: np.ndarray, ax: int, dx: float, wrap: bool) -> np.ndarray:
    if wrap:
        return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2 * dx)
    out = np.empty_like(f, dtype=np.result_type(f, float))
    _set(out, ax, slice(1, -1), (_take(f, ax, slice(2, None)) - _take(f, ax, slice(None, -2))) / (2 * dx))
    f0, f1, f2 = (_take(f, ax, i) for i in (0, 1, 2))
    _set(out, ax, 0, (-3 * f0 + 4 * f1 - f2) / (2 * dx))
    g0, g1, g2 = (_take(f, ax, i) for i in (-1, -2, -3))
    _set(out, ax, -1, (3 * g0 - 4 * g1 + g2) / (2 * dx))
    return out


def _fd1_4(f: np.ndarray, ax: int, dx: float, wrap: bool) -> np.ndarray:
    if wrap:
        return (
            -np.roll(f, -2, axis=ax) + 8 * np.roll(f, -1, axis=ax)
            - 8 * np.roll(f, 1, axis=ax) + np.roll(f, 2, axis=ax)
        ) / (12 * dx)
    out = np.empty_like(f, dtype=np.result_type(f, float))
    inner = (
        -_take(f, ax, slice(4, None)) + 8 * _take(f, ax, slice(3, -1))
        - 8 * _take(f, ax, slice(1, -3)) + _take(f, ax, slice(None, -4))
    ) / (12 * dx)
    _set(out, ax, slice(2, -2), inner)
    c = [_take(f, ax, i) for i in range(5)]
    _set(out, ax, 0, (-25 * c[0] + 48 * c[1] - 36 * c[2] + 16 * c[3] - 3 * c[4]) / (12 * dx))
    _set(out, ax, 1, (-3 * c[0] - 10 * c[1] + 18 * c[2] - 6 * c[3] + c[4]) / (12 * dx))
    d = [_take(f, ax, -(i + 1)) for i in range(5)]
    _set(out, ax, -1, (25 * d[0] - 48 * d[1] + 36 * d[2] - 16 * d[3] + 3 * d[4]) / (12 * dx))
    _set(out, ax, -2, (3 * d[0] + 10 * d[1] - 18 * d[2] + 6 * d[3] - d[4]) / (12 * dx))
    return out


def _fd2_2(f: np.ndarray, ax: int, dx: float, wrap: bool) -> np.ndarray:
    if wrap:
        return (np.roll(f, -1, axis=ax) - 2 * f + np.roll(f, 1, axis=ax)) / dx**2
    out = np.empty_like(f, dtype=np.result_type(f, float))
    inner = (
        _take(f, ax, slice(2, None)) - 2 * _take(f, ax, slice(1, -1)) + _take(f, ax, slice(None, -2))
    ) / dx**2
    _set(out, ax, slice(1, -1), inner)
    c = [_take(f, ax, i) for i in range(4)]
    _set(out, ax, 0, (2 * c[0] - 5 * c[1] + 4 * c[2] - c[3]) / dx**2)
    d = [_take(f, ax, -(i + 1)) for i in range(4)]
    _set(out, ax, -1, (2 * d[0] - 5 * d[1] + 4 * d[2] - d[3]) / dx**2)
    return out


def _fd2_4(f: np.ndarray, ax: int, dx: float, wrap: bool) -> np.ndarray:
    if wrap:
        return (
            -np.roll(f, -2, axis=ax) + 16 * np.roll(f, -1, axis=ax) - 30 * f
            + 16 * np.roll(f, 1, axis=ax) - np.roll(f, 2, axis=ax)
        ) / (12 * dx**2)
    out = np.empty_like(f, dtype=np.result_type(f, float))
    inner = (
        -_take(f, ax, slice(4, None)) + 16 * _take(f, ax, slice(3, -1)) - 30 * _take(f, ax, slice(2, -2))
        + 16 * _take(f, ax, slice(1, -3)) - _take(f, ax, slice(None, -4))
    ) / (12 * dx**2)
    _set(out, ax, slice(2, -2), inner)
    c = [_take(f, ax, i) for i in range(6)]
    _set(out, ax, 0, (45 * c[0] - 154 * c[1] + 214 * c[2] - 156 * c[3] + 61 * c[4] - 10 * c[5]) / (12 * dx**2))
    _set(out, ax, 1, (10 * c[0] - 15 * c[1] - 4 * c[2] + 14 * c[3] - 6 * c[4] + c[5]) / (12 * dx**2))
    d = [_take(f, ax, -(i + 1)) for i in range(6)]
    _set(out, ax, -1, (45 * d[0] - 154 * d[1] + 214 * d[2] - 156 * d[3] + 61 * d[4] - 10 * d[5]) / (12 * dx**2))
    _set(out, ax, -2, (10 * d[0] - 15 * d[1] - 4 * d[2] + 14 * d[3] - 6 * d[4] + d[5]) / (12 * dx**2))
    return out


# ---------------------------------------------------------------------------
# Cubic interpolation at off-grid points. Interior cells use the Catmull-Rom
# basis (C1 across cells); on box grids the two edge cells fall back to the
# Lagrange cubic through the shifted stencil, which keeps cubic order.

def _catmull_rom_weights(u: np.ndarray) -> np.ndarray:
    u2, u3 = u * u, u * u * u
    w = np.empty((u.size, 4))
    w[:, 0] = 0.5 * (-u3 + 2 * u2 - u)
    w[:, 1] = 0.5 * (3 * u3 - 5 * u2 + 2)
    w[:, 2] = 0.5 * (-3 * u3 + 4 * u2 + u)
    w[:, 3] = 0.5 * (u3 - u2)
    return w


def _lagrange_weights(s: np.ndarray) -> np.ndarray:
    # nodes at local coordinates -1, 0, 1, 2
    w = np.empty((s.size, 4))
    w[:, 0] = -s * (s - 1) * (s - 2) / 6.0
    w[:, 1] = (s + 1) * (s - 1) * (s - 2) / 2.0
    w[:, 2] = -(s + 1) * s * (s - 2) / 2.0
    w[:, 3] = (s + 1) * s * (s - 1) / 6.0
    return w


def _axis_stencil(grid: Grid, axis: int, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (indices (m,4), weights (m,4)) for cubic interpolation along one axis."""
    a, b = grid.extents[axis]
    n = grid.points[axis]
    dx = grid.spacing[axis]
    x = np.asarray(coords, dtype=float)
    if grid.boundary is Boundary.PERIODIC:
        xi = (x - a) / dx
        base = np.floor(xi).astype(np.int64)
        u = xi - base
        idx = (base[:, None] + np.arange(-1, 3)[None, :]) % n
        return idx, _catmull_rom_weights(u)
    # box: allow a hair of float slop at the walls, reject genuine exits
    slop = 1e-9 * (b - a)
    if np.any(x < a - slop) or np.any(x > b + slop):
        raise BohmlabError("interpolation point outside box grid domain")
    x = np.clip(x, a, b)
    xi = (x - a) / dx
    base = np.clip(np.floor(xi).astype(np.int64), 0, n - 2)
    inner = np.clip(base, 1, n - 3)
    s = xi - inner  # in [-1, 2] at the edges, [0, 1) inside
    idx = inner[:, None] + np.arange(-1, 3)[None, :]
    edge = (base != inner)
    w = np.empty((x.size, 4))
    if np.any(~edge):
        w[~edge] = _catmull_rom_weights(s[~edge])
    if np.any(edge):
        w[edge] = _lagrange_weights(s[edge])
    return idx, w


def cubic_interp(values: np.ndarray, grid: Grid, points: np.ndarray) -> np.ndarray:
    """Interpolate field values at points of shape (m, dims); returns (..., m).

    `values` may carry leading axes (components, stacks); the trailing axes
    must match grid.shape.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != grid.dims:
        raise BohmlabError(f"points must have {grid.dims} coordinates")
    if grid.boundary is Boundary.PERIODIC:
        pts = grid.wrap(pts)
    if grid.dims == 1:
        idx, w = _axis_stencil(grid, 0, pts[:, 0])
        gathered = values[..., idx]            # (..., m, 4)
        return np.einsum("...mi,mi->...m", gathered, w)
    idx0, w0 = _axis_stencil(grid, 0, pts[:, 0])
    idx1, w1 = _axis_stencil(grid, 1, pts[:, 1])
    gathered = values[..., idx0[:, :, None], idx1[:, None, :]]  # (..., m, 4, 4)
    return np.einsum("...mij,mi,mj->...m", gathered, w0, w1)
