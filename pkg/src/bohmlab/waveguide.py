"""Evanescent states at a potential step and the decay-rate speed identity.

A coupled-waveguide measurement extracts a speed scale
v = sqrt(2 |Delta| / m) with Delta = E - V0 + hbar J0. For evanescent states
psi ~ exp(-kappa x) the same scale equals hbar kappa / m and |Im p_w| / m,
where p_w = grad S - i hbar (grad R / R) is the pointwise complex momentum
ratio; the guiding velocity grad S / m is zero there. This module reproduces
that chain of identities and sweeps it across the regime boundary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .derivatives import Scheme, gradient
from .errors import ConfigurationError, FitError, NodeError, RegimeError
from .grid import Grid, WaveFunction, to_polar
from .guidance import velocity_at


class Regime(str, Enum):
    ALLOWED = "allowed"
    FORBIDDEN = "forbidden"
    CRITICAL = "critical"


@dataclass(frozen=True)
class StepScenario:
    E: float
    V0: float
    J0: float
    mass: float = 1.0
    hbar: float = 1.0
    critical_rel_tol: float = 1e-9

    @property
    def delta(self) -> float:
        return self.E - self.V0 + self.hbar * self.J0

    @property
    def regime(self) -> Regime:
        if abs(self.delta) <= self.hbar * self.J0 * self.critical_rel_tol:
            return Regime.CRITICAL
        return Regime.ALLOWED if self.delta > 0 else Regime.FORBIDDEN


def kappa(s: StepScenario) -> float:
    """Amplitude decay rate sqrt(2 m |Delta|) / hbar of the forbidden-regime tail."""
    if s.regime is not Regime.FORBIDDEN:
        raise RegimeError("kappa is real only in the forbidden regime")
    return float(np.sqrt(2 * s.mass * abs(s.delta)) / s.hbar)


def v_scale(s: StepScenario) -> float:
    """Fitted speed scale sqrt(2 |Delta| / m) of the population-growth model."""
    return float(np.sqrt(2 * abs(s.delta) / s.mass))


def wavenumber(s: StepScenario) -> float:
    """Propagating wavenumber sqrt(2 m Delta) / hbar in the allowed regime."""
    if s.regime is not Regime.ALLOWED:
        raise RegimeError("the propagating wavenumber requires the allowed regime")
    return float(np.sqrt(2 * s.mass * s.delta) / s.hbar)


def momentum_weak_value_profile(psi: WaveFunction,
                                node_threshold: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Complex p_w per grid point: Re = grad S, Im = -hbar grad R / R.

    Returns (p_w, valid_mask); entries outside the mask are NaN. Polar-form
    derivatives use the non-wrapping 4th-order stencil since neither R nor S
    needs to be periodic. 1D only.
    """
    if psi.grid.dims != 1:
        raise ConfigurationError("momentum weak-value profiles are 1D")
    polar = to_polar(psi, node_threshold=node_threshold)
    grid = psi.grid
    dS = gradient(polar.S, grid, 0, Scheme.FD4, wrap=False)
    dR = gradient(polar.R, grid, 0, Scheme.FD4, wrap=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_w = dS - 1j * psi.hbar * (dR / polar.R)
    p_w = np.where(polar.valid, p_w, np.nan + 0j)
    return p_w, polar.valid


def bohmian_velocity_in_forbidden(psi: WaveFunction, Q) -> float:
    """Guiding velocity inside the decay region; zero for any real profile."""
    v = velocity_at(psi, Q)
    return float(v[0])


@dataclass(frozen=True)
class IdentityReport:
    v_scale: float
    v_kappa_fit: float
    v_im_pw: float
    kappa_fit: float
    window: tuple[int, int]
    rel_spread: float
    fit_tol: float
    passed: bool


def _fit_window(x: np.ndarray, R: np.ndarray, valid: np.ndarray, x_start: float,
                floor_ratio: float = 1e-4, min_points: int = 8) -> tuple[int, int]:
    i0 = int(np.searchsorted(x, x_start))
    if i0 >= x.size - min_points:
        raise FitError("decay window starts too close to the grid edge")
    r0 = R[i0]
    below = np.flatnonzero(R[i0:] < floor_ratio * r0)
    i1 = i0 + (int(below[0]) if below.size else R.size - i0)
    if i1 - i0 < min_points:
        raise FitError(f"decay window has {i1 - i0} points; need at least {min_points}")
    if not np.all(valid[i0:i1]):
        raise FitError("decay window contains a node")
    return i0, i1


def identity_check(s: StepScenario, psi: WaveFunction, step_position: float = 0.0,
                   fit_tol: float = 0.02) -> IdentityReport:
    """Compare the three speed determinations on an evanescent profile.

    v_scale comes from the scenario energies; hbar kappa_fit / m from a
    log-linear regression of R over the decay window; |Im p_w| / m from the
    averaged pointwise momentum ratio over the same window.
    """
    if s.regime is not Regime.FORBIDDEN:
        raise RegimeError("identity check applies to the forbidden regime")
    grid = psi.grid
    x = grid.axis_coords(0)
    dx = grid.spacing[0]
    polar = to_polar(psi)
    i0, i1 = _fit_window(x, polar.R, polar.valid, step_position + 2 * dx)

    slope = np.polyfit(x[i0:i1], np.log(polar.R[i0:i1]), 1)[0]
    kappa_fit = -float(slope)
    p_w, _ = momentum_weak_value_profile(psi)
    im_avg = float(np.mean(np.abs(p_w[i0:i1].imag)))

    v0 = v_scale(s)
    v1 = s.hbar * kappa_fit / s.mass
    v2 = im_avg / s.mass
    spread = max(abs(v1 - v0), abs(v2 - v0), abs(v2 - v1)) / v0
    return IdentityReport(
        v_scale=v0, v_kappa_fit=v1, v_im_pw=v2, kappa_fit=kappa_fit,
        window=(i0, i1), rel_spread=float(spread), fit_tol=fit_tol,
        passed=bool(spread <= fit_tol),
    )


@dataclass(frozen=True)
class SweepRow:
    delta: float
    regime: Regime
    v_scale: float
    v_kappa_fit: float | None
    v_im_pw: float
    v_re_pw: float
    v_measured: float


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]
    continuity_ok: bool
    max_jump_ratio: float
    chain_max_err: float  # |v_scale - hbar kappa / m| over forbidden rows

    def passed(self) -> bool:
        return self.continuity_ok


def _sweep_state(s: StepScenario, grid: Grid) -> WaveFunction:
    from .evolution import evanescent_step, plane_wave  # local to avoid cycle

    if s.regime is Regime.FORBIDDEN:
        return evanescent_step(grid, kappa(s), x_step=0.0, hbar=s.hbar, mass=s.mass)
    if s.regime is Regime.ALLOWED:
        x = grid.axis_coords(0)
        amp = np.exp(1j * wavenumber(s) * x).astype(complex)
        psi = WaveFunction(grid=grid, amplitudes=amp[np.newaxis], hbar=s.hbar, mass=s.mass)
        from .grid import normalize
        return normalize(psi)
    amp = np.ones(grid.shape, dtype=complex)
    from .grid import normalize
    return normalize(WaveFunction(grid=grid, amplitudes=amp[np.newaxis], hbar=s.hbar, mass=s.mass))


def delta_sweep(J0: float, delta_values, grid: Grid | None = None, mass: float = 1.0,
                hbar: float = 1.0, fit_tol: float = 0.02) -> SweepReport:
    """Sweep Delta through zero at fixed hbar J0 and track every speed column.

    The measured speed is |Im p_w|/m where evanescence dominates and
    |Re p_w|/m where propagation dominates; continuity across the regime
    change is checked through the ratio of successive jumps (< 3).
    """
    deltas = np.asarray(delta_values, dtype=float)
    if grid is None:
        grid = Grid(extents=((-12.0, 28.0),), points=(2048,), boundary="box")
    x = grid.axis_coords(0)
    dx = grid.spacing[0]
    rows = []
    chain_err = 0.0
    for d in deltas:
        E = d  # V0 = hbar*J0 makes Delta = E directly; only Delta matters here
        s = StepScenario(E=E, V0=hbar * J0, J0=J0, mass=mass, hbar=hbar)
        psi = _sweep_state(s, grid)
        window = (x >= 2 * dx) & (x <= x[-1] - 2 * dx)
        if s.regime is Regime.FORBIDDEN:
            # keep the window where the exponential tail is still resolved
            report = identity_check(s, psi, step_position=0.0, fit_tol=fit_tol)
            p_w, _ = momentum_weak_value_profile(psi)
            i0, i1 = report.window
            re_avg = float(np.nanmean(np.abs(p_w[i0:i1].real)))
            row = SweepRow(
                delta=float(d), regime=s.regime, v_scale=report.v_scale,
                v_kappa_fit=report.v_kappa_fit, v_im_pw=report.v_im_pw,
                v_re_pw=re_avg / mass, v_measured=report.v_im_pw,
            )
            chain_err = max(chain_err, abs(v_scale(s) - hbar * kappa(s) / mass))
        else:
            p_w, valid = momentum_weak_value_profile(psi)
            sel = window & valid
            re_avg = float(np.nanmean(np.abs(p_w[sel].real))) / mass
            im_avg = float(np.nanmean(np.abs(p_w[sel].imag))) / mass
            row = SweepRow(
                delta=float(d), regime=s.regime, v_scale=v_scale(s),
                v_kappa_fit=None, v_im_pw=im_avg, v_re_pw=re_avg,
                v_measured=re_avg if s.regime is Regime.ALLOWED else max(re_avg, im_avg),
            )
        rows.append(row)

    v = np.array([r.v_measured for r in rows])
    jumps = np.abs(np.diff(v))
    max_ratio = 0.0
    ok = True
    for i in range(len(jumps)):
        neighbors = [jumps[j] for j in (i - 1, i + 1) if 0 <= j < len(jumps)]
        ref = max(neighbors) if neighbors else jumps[i]
        if jumps[i] > 3.0 * ref + 1e-12:
            ok = False
        if ref > 0:
            max_ratio = max(max_ratio, jumps[i] / ref)
    return SweepReport(rows=tuple(rows), continuity_ok=bool(ok),
                       max_jump_ratio=float(max_ratio), chain_max_err=float(chain_err))


def write_sweep_csv(report: SweepReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "regime", "v_scale", "v_kappa_fit", "v_im_pw", "v_re_pw", "v_measured"])
        for r in report.rows:
            writer.writerow([
                repr(r.delta), r.regime.value, repr(r.v_scale),
                "" if r.v_kappa_fit is None else repr(r.v_kappa_fit),
                repr(r.v_im_pw), repr(r.v_re_pw), repr(r.v_measured),
            ])
