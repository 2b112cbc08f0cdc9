"""Time-dependent Schrodinger propagation and the analytic reference-state library.

Two propagators cover the scenarios: Strang-split spectral stepping on
periodic grids (exp(-iV dt/2h) exp(-iT dt/h) exp(-iV dt/2h)) and
Crank-Nicolson on 1D box grids with psi = 0 at the walls. Snapshots are the
only interface to the rest of the package; each carries its exact time and
is immutable.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.linalg

from .derivatives import Scheme, default_scheme, gradient, spectral_wavenumbers
from .errors import (
    ConfigurationError,
    ShapeMismatchError,
    TruncationError,
    UnitarityError,
)
from .grid import (
    Boundary,
    Grid,
    WaveFunction,
    density,
    norm,
    normalize,
    read_field_csv,
    read_grid_sidecar,
    write_field_csv,
    write_grid_sidecar,
)

NORM_ABORT_DRIFT = 1e-6


class Method(str, Enum):
    SPLIT_STEP = "split_step"
    CRANK_NICOLSON = "crank_nicolson"


@dataclass(frozen=True)
class Propagator:
    method: Method
    dt: float
    potential: np.ndarray | None = None
    stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "stride", int(self.stride))
        if self.dt <= 0 or self.stride < 1:
            raise ConfigurationError("propagator needs dt > 0 and stride >= 1")
        if self.potential is not None:
            v = np.asarray(self.potential, dtype=float)
            v.setflags(write=False)
            object.__setattr__(self, "potential", v)


@dataclass(frozen=True)
class EvolutionRecord:
    """Uniformly spaced snapshots of one propagation run."""

    snapshots: tuple[WaveFunction, ...]
    method: Method
    dt: float
    stride: int
    potential: np.ndarray | None = None

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def snapshot_spacing(self) -> float:
        return self.dt * self.stride

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        first = self.snapshots[0]
        meta = {
            "method": self.method.value,
            "dt": self.dt,
            "stride": self.stride,
            "times": [s.t for s in self.snapshots],
            "components": first.components,
            "hbar": first.hbar,
            "mass": first.mass,
            "has_potential": self.potential is not None,
        }
        write_grid_sidecar(directory / "metadata.json", self.grid, **meta)
        if self.potential is not None:
            write_field_csv(directory / "potential.csv", self.grid, self.potential)
        for i, snap in enumerate(self.snapshots):
            for c in range(snap.components):
                write_field_csv(directory / f"psi_{i:05d}_c{c}.csv", self.grid, snap.amplitudes[c])

    @staticmethod
    def load(directory: str | Path) -> "EvolutionRecord":
        directory = Path(directory)
        grid, meta = read_grid_sidecar(directory / "metadata.json")
        potential = None
        if meta.get("has_potential"):
            potential = read_field_csv(directory / "potential.csv", grid).real
        snaps = []
        for i, t in enumerate(meta["times"]):
            comps = [
                read_field_csv(directory / f"psi_{i:05d}_c{c}.csv", grid)
                for c in range(meta["components"])
            ]
            snaps.append(
                WaveFunction(grid=grid, amplitudes=np.stack(comps), t=t,
                             mass=meta["mass"], hbar=meta["hbar"])
            )
        return EvolutionRecord(
            snapshots=tuple(snaps), method=Method(meta["method"]),
            dt=meta["dt"], stride=meta["stride"], potential=potential,
        )


def _kinetic_phase(grid: Grid, dt: float, hbar: float, mass: float) -> np.ndarray:
    ks = [spectral_wavenumbers(grid, a) for a in range(grid.dims)]
    mesh = np.meshgrid(*ks, indexing="ij")
    k2 = sum(m**2 for m in mesh)
    return np.exp(-0.5j * hbar * k2 * dt / mass)


def _cn_banded(grid: Grid, potential, dt, hbar, mass):
    n = grid.points[0]
    dx = grid.spacing[0]
    v = np.zeros(n) if potential is None else potential
    off = -(hbar**2) / (2 * mass * dx**2)
    diag = (hbar**2) / (mass * dx**2) + v
    gamma = 1j * dt / (2 * hbar)
    # banded form of (1 + gamma H); walls pinned to zero via identity rows
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = gamma * off
    ab[1, :] = 1.0 + gamma * diag
    ab[2, :-1] = gamma * off
    ab[0, 1] = 0.0
    ab[1, 0] = 1.0
    ab[1, -1] = 1.0
    ab[2, -2] = 0.0
    b_off = -gamma * off
    b_diag = 1.0 - gamma * diag
    return ab, b_off, b_diag


def _cfl_check(grid: Grid, prop: Propagator, hbar: float, mass: float) -> None:
    k_max = max(np.pi / dx for dx in grid.spacing)
    e_kin = hbar**2 * k_max**2 / (2 * mass)
    v_max = 0.0 if prop.potential is None else float(np.max(np.abs(prop.potential)))
    if prop.dt * max(e_kin, v_max) / hbar > np.pi:
        warnings.warn(
            "time step resolves less than one radian of the fastest grid mode; "
            f"dt*E_max/hbar = {prop.dt * max(e_kin, v_max) / hbar:.2f}",
            RuntimeWarning,
            stacklevel=2,
        )


def evolve(psi0: WaveFunction, prop: Propagator, steps: int) -> EvolutionRecord:
    """Propagate and record a snapshot every `stride` steps (plus the start).

    Aborts with UnitarityError if the norm drifts more than 1e-6 relative.
    """
    grid = psi0.grid
    if prop.method is Method.SPLIT_STEP and grid.boundary is not Boundary.PERIODIC:
        raise ConfigurationError("split-step propagation requires a periodic grid")
    if prop.method is Method.CRANK_NICOLSON:
        if grid.boundary is not Boundary.BOX:
            raise ConfigurationError("Crank-Nicolson propagation requires a box grid")
        if grid.dims != 1:
            raise ConfigurationError("Crank-Nicolson propagation is implemented in 1D")
    if prop.potential is not None and prop.potential.shape != grid.shape:
        raise ShapeMismatchError("potential shape does not match grid")
    if steps % prop.stride != 0:
        raise ConfigurationError("steps must be a multiple of the snapshot stride")
    _cfl_check(grid, prop, psi0.hbar, psi0.mass)

    hbar, mass = psi0.hbar, psi0.mass
    amp = psi0.amplitudes.copy()
    norm0 = norm(psi0)
    axes = tuple(range(1, grid.dims + 1))
    snaps = [psi0]

    if prop.method is Method.SPLIT_STEP:
        kin = _kinetic_phase(grid, prop.dt, hbar, mass)
        half_v = (
            np.exp(-0.5j * prop.potential * prop.dt / hbar)
            if prop.potential is not None
            else None
        )
        for step in range(1, steps + 1):
            if half_v is not None:
                amp = amp * half_v
            amp = scipy.fft.ifftn(kin * scipy.fft.fftn(amp, axes=axes), axes=axes)
            if half_v is not None:
                amp = amp * half_v
            if step % prop.stride == 0:
                t = psi0.t + step * prop.dt
                snap = psi0.with_amplitudes(amp.copy(), t=t)
                _check_norm(snap, norm0)
                snaps.append(snap)
    else:
        ab, b_off, b_diag = _cn_banded(grid, prop.potential, prop.dt, hbar, mass)
        for step in range(1, steps + 1):
            for c in range(amp.shape[0]):
                u = amp[c]
                rhs = b_diag * u
                rhs[1:] += b_off * u[:-1]
                rhs[:-1] += b_off * u[1:]
                rhs[0] = 0.0
                rhs[-1] = 0.0
                amp[c] = scipy.linalg.solve_banded((1, 1), ab, rhs)
            if step % prop.stride == 0:
                t = psi0.t + step * prop.dt
                snap = psi0.with_amplitudes(amp.copy(), t=t)
                _check_norm(snap, norm0)
                snaps.append(snap)

    return EvolutionRecord(
        snapshots=tuple(snaps), method=prop.method, dt=prop.dt,
        stride=prop.stride, potential=prop.potential,
    )


def _check_norm(snap: WaveFunction, norm0: float) -> None:
    drift = abs(norm(snap) / norm0 - 1.0)
    if drift > NORM_ABORT_DRIFT:
        raise UnitarityError(f"norm drift {drift:.3e} at t = {snap.t:g}")


# ---------------------------------------------------------------------------
# Analytic reference states. Every family returns a normalized WaveFunction;
# localized families verify that the grid contains the state.


def lattice_momentum(grid: Grid, k: float, axis: int = 0) -> float:
    """Nearest wavenumber representable as a periodic mode, 2*pi*j/L."""
    a, b = grid.extents[axis]
    base = 2 * np.pi / (b - a)
    return base * round(k / base)


def _check_tail(psi: WaveFunction) -> None:
    rho = density(psi) * psi.grid.cell_volume
    tail = 0.0
    if psi.grid.dims == 1:
        tail = float(rho[:2].sum() + rho[-2:].sum())
    else:
        tail = float(rho[:2].sum() + rho[-2:].sum() + rho[:, :2].sum() + rho[:, -2:].sum())
    if tail > 1e-8:
        raise TruncationError(f"state leaves {tail:.2e} probability mass at the grid boundary")


def _gaussian_profile(grid: Grid, x0, sigma, k0) -> np.ndarray:
    meshes = grid.meshes()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    k0 = np.atleast_1d(np.asarray(k0, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if sigma.size == 1:
        sigma = np.repeat(sigma, grid.dims)
    arg = np.zeros(grid.shape, dtype=complex)
    for a in range(grid.dims):
        d = meshes[a] - x0[a]
        arg += -(d**2) / (4 * sigma[a] ** 2) + 1j * k0[a] * d
    return np.exp(arg)


def plane_wave(grid: Grid, k, hbar: float = 1.0, mass: float = 1.0, t: float = 0.0) -> WaveFunction:
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    if grid.boundary is Boundary.PERIODIC:
        ks = np.array([lattice_momentum(grid, kk, a) for a, kk in enumerate(ks)])
    meshes = grid.meshes()
    phase = sum(kk * m for kk, m in zip(ks, meshes))
    psi = WaveFunction(grid=grid, amplitudes=np.exp(1j * phase)[np.newaxis],
                       t=t, mass=mass, hbar=hbar)
    return normalize(psi)


def ho_ground(grid: Grid, omega: float, center=0.0, hbar: float = 1.0,
              mass: float = 1.0, t: float = 0.0) -> WaveFunction:
    meshes = grid.meshes()
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if center.size == 1 and grid.dims == 2:
        center = np.repeat(center, 2)
    arg = np.zeros(grid.shape)
    for a in range(grid.dims):
        arg += -(mass * omega / (2 * hbar)) * (meshes[a] - center[a]) ** 2
    amp = (mass * omega / (np.pi * hbar)) ** (grid.dims / 4) * np.exp(arg)
    psi = WaveFunction(grid=grid, amplitudes=amp.astype(complex)[np.newaxis],
                       t=t, mass=mass, hbar=hbar)
    _check_tail(psi)
    return normalize(psi)


def gaussian_packet(grid: Grid, x0, sigma, k0, hbar: float = 1.0,
                    mass: float = 1.0, t: float = 0.0) -> WaveFunction:
    psi = WaveFunction(grid=grid, amplitudes=_gaussian_profile(grid, x0, sigma, k0)[np.newaxis],
                       t=t, mass=mass, hbar=hbar)
    psi = normalize(psi)
    _check_tail(psi)
    return psi


def evanescent_step(grid: Grid, kappa: float, x_step: float = 0.0, k_left: float | None = None,
                    hbar: float = 1.0, mass: float = 1.0, t: float = 0.0) -> WaveFunction:
    """Real piecewise state: oscillatory matching region, exp(-kappa x) decay.

    The left solution cos(k(x-x_step)) - (kappa/k) sin(k(x-x_step)) matches the
    decaying tail with continuous value and slope, so the profile is the
    stationary-scattering shape near a step. 1D only.
    """
    if grid.dims != 1:
        raise ConfigurationError("evanescent step states are 1D")
    x = grid.axis_coords(0)
    k = kappa if k_left is None else k_left
    left = np.cos(k * (x - x_step)) - (kappa / k) * np.sin(k * (x - x_step))
    right = np.exp(-kappa * (x - x_step))
    amp = np.where(x < x_step, left, right).astype(complex)
    psi = WaveFunction(grid=grid, amplitudes=amp[np.newaxis], t=t, mass=mass, hbar=hbar)
    return normalize(psi)


def two_branch(grid: Grid, branches: list[dict], weights, hbar: float = 1.0,
               mass: float = 1.0, t: float = 0.0) -> WaveFunction:
    """c1*phi1 + c2*phi2 with per-branch normalized packets and |c1|^2+|c2|^2 = 1.

    Branch dicts carry gaussian parameters (x0, sigma, k0). Raises unless the
    branch supports are disjoint (overlap < 1e-10).
    """
    weights = np.asarray(weights, dtype=float)
    if weights.size != len(branches) or abs(weights.sum() - 1.0) > 1e-12:
        raise ConfigurationError("branch weights must sum to one")
    parts = []
    for spec in branches:
        prof = _gaussian_profile(grid, spec["x0"], spec["sigma"], spec["k0"])
        prof = prof / np.sqrt(np.sum(np.abs(prof) ** 2) * grid.cell_volume)
        parts.append(prof)
    overlap = 0.0
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            overlap = max(overlap, float(np.sum(np.abs(parts[i]) * np.abs(parts[j])) * grid.cell_volume))
    if overlap > 1e-10:
        raise ConfigurationError(f"branches overlap ({overlap:.2e}); move them apart")
    amp = sum(np.sqrt(w) * p for w, p in zip(weights, parts))
    psi = WaveFunction(grid=grid, amplitudes=amp[np.newaxis], t=t, mass=mass, hbar=hbar)
    psi = normalize(psi)
    _check_tail(psi)
    return psi


def _parse_complex_pair(values) -> np.ndarray:
    """Accept [a, b] with entries that are numbers or [re, im] pairs."""
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            out.append(complex(v[0], v[1]))
        else:
            out.append(complex(v))
    return np.asarray(out, dtype=complex)


def spinor_separable(grid: Grid, spatial: WaveFunction, chi, hbar: float | None = None) -> WaveFunction:
    """phi(x) tensor chi for a normalized two-component spin part."""
    chi = _parse_complex_pair(chi)
    if chi.shape != (2,):
        raise ShapeMismatchError("chi must have two components")
    chi = chi / np.linalg.norm(chi)
    amp = np.stack([chi[0] * spatial.amplitudes[0], chi[1] * spatial.amplitudes[0]])
    return WaveFunction(grid=grid, amplitudes=amp, t=spatial.t,
                        mass=spatial.mass, hbar=hbar or spatial.hbar)


def spinor_two_packet(grid: Grid, up: dict, down: dict, weights=(0.5, 0.5),
                      relative_phase: float = 0.0, hbar: float = 1.0,
                      mass: float = 1.0, t: float = 0.0) -> WaveFunction:
    """Spin-up and spin-down amplitudes carried by two different packets."""
    w = np.asarray(weights, dtype=float)
    pu = _gaussian_profile(grid, up["x0"], up["sigma"], up["k0"])
    pd = _gaussian_profile(grid, down["x0"], down["sigma"], down["k0"])
    pu = pu / np.sqrt(np.sum(np.abs(pu) ** 2) * grid.cell_volume)
    pd = pd / np.sqrt(np.sum(np.abs(pd) ** 2) * grid.cell_volume)
    amp = np.stack([np.sqrt(w[0]) * pu, np.sqrt(w[1]) * np.exp(1j * relative_phase) * pd])
    psi = WaveFunction(grid=grid, amplitudes=amp, t=t, mass=mass, hbar=hbar)
    psi = normalize(psi)
    _check_tail(psi)
    return psi


_FAMILIES = {
    "plane_wave": lambda grid, p, **kw: plane_wave(grid, p["k"], **kw),
    "ho_ground": lambda grid, p, **kw: ho_ground(grid, p["omega"], p.get("center", 0.0), **kw),
    "gaussian": lambda grid, p, **kw: gaussian_packet(grid, p["x0"], p["sigma"], p["k0"], **kw),
    "evanescent_step": lambda grid, p, **kw: evanescent_step(
        grid, p["kappa"], p.get("x_step", 0.0), p.get("k_left"), **kw),
    "two_branch": lambda grid, p, **kw: two_branch(grid, p["branches"], p["weights"], **kw),
    "spinor_two_packet": lambda grid, p, **kw: spinor_two_packet(
        grid, p["up"], p["down"], p.get("weights", (0.5, 0.5)),
        p.get("relative_phase", 0.0), **kw),
}


def analytic_state(name: str, params: dict, grid: Grid, hbar: float = 1.0,
                   mass: float = 1.0, t: float = 0.0) -> WaveFunction:
    """Build a named reference state; see _FAMILIES for the catalog."""
    if name == "spinor_separable":
        spatial = analytic_state(
            params["spatial"]["family"], params["spatial"]["params"], grid,
            hbar=hbar, mass=mass, t=t)
        return spinor_separable(grid, spatial, params["chi"])
    if name not in _FAMILIES:
        raise ConfigurationError(f"unknown analytic state family {name!r}")
    return _FAMILIES[name](grid, params, hbar=hbar, mass=mass, t=t)


# ---------------------------------------------------------------------------
# Closed-form free Gaussian evolution, used as the oracle for dispersion,
# trajectories, and the per-term expectations of the evolution equation.


@dataclass(frozen=True)
class FreeGaussianOracle:
    """|psi(x,t)|, S(x,t) and derived fields for a free Gaussian packet.

    Width sigma_t = sigma0 sqrt(1 + tau^2) with tau = hbar t / (2 m sigma0^2);
    center x0 + hbar k0 t / m. Velocity v = hbar k0/m + (x-c) d(ln sigma_t)/dt.
    """

    x0: float
    sigma0: float
    k0: float
    hbar: float = 1.0
    mass: float = 1.0

    def tau(self, t):
        return self.hbar * t / (2 * self.mass * self.sigma0**2)

    def sigma(self, t):
        return self.sigma0 * np.sqrt(1 + self.tau(t) ** 2)

    def center(self, t):
        return self.x0 + self.hbar * self.k0 * t / self.mass

    def stretch_rate(self, t):
        """d(ln sigma_t)/dt, which also equals div v."""
        tau = self.tau(t)
        tau_dot = self.hbar / (2 * self.mass * self.sigma0**2)
        return tau * tau_dot / (1 + tau**2)

    def density(self, x, t):
        s = self.sigma(t)
        return np.exp(-((x - self.center(t)) ** 2) / (2 * s**2)) / np.sqrt(2 * np.pi * s**2)

    def velocity(self, x, t):
        return self.hbar * self.k0 / self.mass + (x - self.center(t)) * self.stretch_rate(t)

    def div_velocity(self, t):
        return self.stretch_rate(t)

    def dlog_density_dx(self, x, t):
        return -(x - self.center(t)) / self.sigma(t) ** 2

    def dlog_density_dt(self, x, t):
        xi = x - self.center(t)
        g = self.stretch_rate(t)
        v0 = self.hbar * self.k0 / self.mass
        s2 = self.sigma(t) ** 2
        return -g + xi * v0 / s2 + xi**2 * g / s2

    def trajectory(self, q0: float, t):
        """Pilot-wave path through q0 at t=0: self-similar stretch about the center."""
        return self.center(t) + (q0 - self.x0) * self.sigma(t) / self.sigma0

    def phase_gradient(self, x, t):
        return self.mass * self.velocity(x, t)

    def quantum_potential(self, x, t):
        s2 = self.sigma(t) ** 2
        xi2 = (x - self.center(t)) ** 2
        return -(self.hbar**2) / (2 * self.mass) * (xi2 / (4 * s2**2) - 1 / (2 * s2))

    def energy_weak_value(self, x, t):
        return self.phase_gradient(x, t) ** 2 / (2 * self.mass) + self.quantum_potential(x, t)

    def width_doubling_time(self):
        return np.sqrt(3.0) * 2 * self.mass * self.sigma0**2 / self.hbar


# ---------------------------------------------------------------------------
# Continuity residual d(rho)/dt + div J per interior snapshot.


@dataclass(frozen=True)
class ContinuityReport:
    times: np.ndarray
    max_norms: np.ndarray
    fields: tuple[np.ndarray, ...]


def probability_current(psi: WaveFunction, scheme: Scheme | None = None) -> list[np.ndarray]:
    """J_k = (hbar/m) Im(psi^dag d_k psi), one array per axis."""
    out = []
    for axis in range(psi.grid.dims):
        dpsi = gradient(psi.amplitudes, psi.grid, axis, scheme)
        out.append(psi.hbar / psi.mass * np.sum(np.imag(np.conj(psi.amplitudes) * dpsi), axis=0))
    return out


def continuity_residual(record: EvolutionRecord, scheme: Scheme | None = None) -> ContinuityReport:
    """Residual of d(rho)/dt + div J at the interior snapshots.

    The time derivative is a centered difference across neighboring
    snapshots; the divergence uses the given (or boundary-default) scheme.
    """
    snaps = record.snapshots
    if len(snaps) < 3:
        raise ConfigurationError("continuity residual needs at least 3 snapshots")
    grid = record.grid
    h = record.snapshot_spacing
    rhos = [density(s) for s in snaps]
    times, max_norms, fields = [], [], []
    for i in range(1, len(snaps) - 1):
        drho_dt = (rhos[i + 1] - rhos[i - 1]) / (2 * h)
        div_j = np.zeros(grid.shape)
        currents = probability_current(snaps[i], scheme)
        for axis, j in enumerate(currents):
            div_j += np.real(gradient(j, grid, axis, scheme))
        resid = drho_dt + div_j
        times.append(snaps[i].t)
        max_norms.append(float(np.max(np.abs(resid))))
        fields.append(resid)
    return ContinuityReport(
        times=np.array(times), max_norms=np.array(max_norms), fields=tuple(fields)
    )
