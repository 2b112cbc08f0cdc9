"""Uniform 1D/2D grids, complex wave-function storage, polar decomposition, field I/O.

Natural units hbar = m = 1 by default; both constants are carried explicitly
so any consistent unit system works. Fields live on a grid as C-contiguous
arrays of shape (components, *grid.shape).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    BohmlabError,
    DegenerateStateError,
    ShapeMismatchError,
    UnsupportedOperationError,
)

# Relative amplitude below which the phase S is considered undefined.
DEFAULT_NODE_THRESHOLD = 1e-8


class Boundary(str, Enum):
    PERIODIC = "periodic"
    BOX = "box"


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid over [x_min, x_max) per axis.

    Periodic grids exclude the right endpoint (spacing L/n); box grids
    include it (spacing L/(n-1)).
    """

    extents: tuple[tuple[float, float], ...]
    points: tuple[int, ...]
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        extents = tuple((float(a), float(b)) for a, b in self.extents)
        points = tuple(int(n) for n in self.points)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if len(extents) not in (1, 2):
            raise ShapeMismatchError("grid must be 1D or 2D")
        if len(points) != len(extents):
            raise ShapeMismatchError("points and extents must have matching length")
        for (a, b), n in zip(extents, points):
            if n < 8:
                raise ShapeMismatchError("need at least 8 points per axis")
            if not b > a:
                raise ShapeMismatchError(f"empty axis extent [{a}, {b})")

    @property
    def dims(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple[float, ...]:
        out = []
        for (a, b), n in zip(self.extents, self.points):
            if self.boundary is Boundary.PERIODIC:
                out.append((b - a) / n)
            else:
                out.append((b - a) / (n - 1))
        return tuple(out)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_coords(self, axis: int) -> np.ndarray:
        a, _ = self.extents[axis]
        dx = self.spacing[axis]
        return a + dx * np.arange(self.points[axis])

    def meshes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*[self.axis_coords(k) for k in range(self.dims)], indexing="ij"))

    def coordinate_field(self, axis: int) -> np.ndarray:
        """Coordinate values of the given axis sampled at every grid point."""
        return self.meshes()[axis]

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Map points into the fundamental domain (periodic grids only)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.boundary is not Boundary.PERIODIC:
            return pts
        out = pts.copy()
        for k, (a, b) in enumerate(self.extents):
            out[:, k] = a + np.mod(out[:, k] - a, b - a)
        return out

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the grid domain (closed on box grids)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(pts.shape[0], dtype=bool)
        for k, (a, b) in enumerate(self.extents):
            if self.boundary is Boundary.PERIODIC:
                continue
            ok &= (pts[:, k] >= a) & (pts[:, k] <= b)
        return ok

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "extents": [list(e) for e in self.extents],
            "points": list(self.points),
            "boundary": self.boundary.value,
        }

    @staticmethod
    def from_dict(d: dict) -> "Grid":
        return Grid(
            extents=tuple(tuple(e) for e in d["extents"]),
            points=tuple(d["points"]),
            boundary=Boundary(d["boundary"]),
        )


@dataclass(frozen=True)
class WaveFunction:
    """Complex amplitudes on a grid at one time stamp.

    `amplitudes` has shape (components, *grid.shape); scalar states use one
    component, spinors two. The array is frozen after construction.
    """

    grid: Grid
    amplitudes: np.ndarray
    t: float = 0.0
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        amp = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amp.shape == self.grid.shape:
            amp = amp[np.newaxis]
        if amp.ndim != self.grid.dims + 1 or amp.shape[1:] != self.grid.shape:
            raise ShapeMismatchError(
                f"amplitudes shape {amp.shape} incompatible with grid {self.grid.shape}"
            )
        if amp.shape[0] not in (1, 2):
            raise ShapeMismatchError("only scalar (1) and spinor (2) components supported")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "hbar", float(self.hbar))

    @property
    def components(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.components == 1

    def with_amplitudes(self, amplitudes: np.ndarray, t: float | None = None) -> "WaveFunction":
        return WaveFunction(
            grid=self.grid,
            amplitudes=amplitudes,
            t=self.t if t is None else t,
            mass=self.mass,
            hbar=self.hbar,
        )


def density(psi: WaveFunction) -> np.ndarray:
    """rho(q) = psi^dag psi, summed over components."""
    return np.sum(np.abs(psi.amplitudes) ** 2, axis=0)


def norm(psi: WaveFunction) -> float:
    """sqrt of sum_q psi^dag psi dx^dims."""
    return float(np.sqrt(np.sum(density(psi)) * psi.grid.cell_volume))


def normalize(psi: WaveFunction) -> WaveFunction:
    n = norm(psi)
    if not np.isfinite(n) or n < 1e-300:
        raise DegenerateStateError("cannot normalize a zero-norm wave function")
    return psi.with_amplitudes(psi.amplitudes / n)


def inner_product(phi: WaveFunction, psi: WaveFunction) -> complex:
    """Discrete <phi|psi> = sum_q phi^dag psi dx^dims."""
    if phi.grid != psi.grid:
        raise ShapeMismatchError("inner product requires a shared grid")
    if phi.components != psi.components:
        raise ShapeMismatchError("inner product requires matching component counts")
    return complex(np.sum(np.conj(phi.amplitudes) * psi.amplitudes) * phi.grid.cell_volume)


@dataclass(frozen=True)
class PolarForm:
    """Amplitude R >= 0 and unwrapped phase action S with psi = R exp(iS/hbar).

    `valid` marks points where R is above the node threshold; S carries no
    meaning where valid is False.
    """

    grid: Grid
    R: np.ndarray
    S: np.ndarray
    valid: np.ndarray
    t: float = 0.0
    mass: float = 1.0
    hbar: float = 1.0


def _unwrap_from(theta: np.ndarray, i0: int) -> np.ndarray:
    """Unwrap a 1D phase array outward from index i0, keeping theta[i0] fixed."""
    out = np.empty_like(theta)
    out[i0:] = np.unwrap(theta[i0:])
    out[: i0 + 1] = np.unwrap(theta[: i0 + 1][::-1])[::-1]
    return out


def to_polar(psi: WaveFunction, node_threshold: float = DEFAULT_NODE_THRESHOLD) -> PolarForm:
    """Polar decomposition psi = R exp(iS/hbar) for scalar states.

    S is hbar * arg(psi), unwrapped axis by axis starting from the global
    maximum of R. Points with R below node_threshold * max(R) are masked
    invalid (the phase is undefined there).
    """
    if not psi.is_scalar:
        raise UnsupportedOperationError("polar form is defined for scalar wave functions only")
    amp = psi.amplitudes[0]
    R = np.abs(amp)
    theta = np.angle(amp)
    rmax = float(R.max())
    valid = R > node_threshold * rmax if rmax > 0 else np.zeros_like(R, dtype=bool)

    if psi.grid.dims == 1:
        i0 = int(np.argmax(R))
        S = _unwrap_from(theta, i0)
    else:
        i0, j0 = np.unravel_index(int(np.argmax(R)), R.shape)
        S = np.empty_like(theta)
        seed_row = _unwrap_from(theta[i0], j0)
        for j in range(theta.shape[1]):
            col = _unwrap_from(theta[:, j], i0)
            # shift by a multiple of 2*pi so the column agrees with the seed row
            col += seed_row[j] - col[i0]
            S[:, j] = col
    return PolarForm(
        grid=psi.grid, R=R, S=psi.hbar * S, valid=valid,
        t=psi.t, mass=psi.mass, hbar=psi.hbar,
    )


def from_polar(polar: PolarForm) -> WaveFunction:
    amp = polar.R * np.exp(1j * polar.S / polar.hbar)
    return WaveFunction(
        grid=polar.grid, amplitudes=amp[np.newaxis],
        t=polar.t, mass=polar.mass, hbar=polar.hbar,
    )


# ---------------------------------------------------------------------------
# Field dump format: one CSV per (component of a) field, plus a JSON sidecar
# with the grid metadata.

def write_field_csv(path: str | Path, grid: Grid, values: np.ndarray) -> None:
    """Dump one field component: columns are axis indices then re,im or value."""
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ShapeMismatchError(f"field shape {values.shape} does not match grid {grid.shape}")
    is_complex = np.iscomplexobj(values)
    index_cols = [f"i{k}" for k in range(grid.dims)]
    header = index_cols + (["re", "im"] if is_complex else ["value"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for idx in np.ndindex(*grid.shape):
            v = values[idx]
            row = list(idx) + (
                [repr(float(v.real)), repr(float(v.imag))] if is_complex else [repr(float(v))]
            )
            writer.writerow(row)


def read_field_csv(path: str | Path, grid: Grid) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        is_complex = header[-2:] == ["re", "im"]
        out = np.zeros(grid.shape, dtype=np.complex128 if is_complex else np.float64)
        nidx = grid.dims
        for row in reader:
            idx = tuple(int(x) for x in row[:nidx])
            if is_complex:
                out[idx] = float(row[nidx]) + 1j * float(row[nidx + 1])
            else:
                out[idx] = float(row[nidx])
    return out


def write_grid_sidecar(path: str | Path, grid: Grid, **meta) -> None:
    payload = grid.to_dict()
    payload["spacing"] = list(grid.spacing)
    payload.update(meta)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def read_grid_sidecar(path: str | Path) -> tuple[Grid, dict]:
    with open(path) as fh:
        payload = json.load(fh)
    grid = Grid.from_dict(payload)
    meta = {k: v for k, v in payload.items() if k not in ("dims", "extents", "points", "boundary", "spacing")}
    return grid, meta
