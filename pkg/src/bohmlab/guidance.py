"""Pilot-wave velocity field and trajectory integration.

The guiding velocity is v_k = (hbar/m) Im(psi^dag d_k psi / psi^dag psi).
Trajectories follow dQ/dt = v(Q, t) under classical RK4 with cubic spatial
interpolation and cubic Hermite interpolation in time between snapshots.
Nodes are handled by honest aborts: a trajectory whose density drops below
the threshold is flagged and truncated, never regularized.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .derivatives import Scheme, cubic_interp, gradient
from .errors import ConfigurationError, NodeError
from .evolution import EvolutionRecord
from .grid import Boundary, Grid, WaveFunction, density

TRAJECTORY_NODE_FLOOR = 1e-10  # relative to max rho over the record
_CHUNK = 2048  # fixed work unit so results cannot depend on the thread count


class TrajectoryStatus(int, Enum):
    COMPLETED = 0
    NODE_ABORTED = 1
    LEFT_DOMAIN = 2


def probability_current_fields(psi: WaveFunction, scheme: Scheme | None = None) -> np.ndarray:
    """J_k = (hbar/m) Im(psi^dag d_k psi) on the grid, shape (dims, *shape)."""
    grid = psi.grid
    out = np.empty((grid.dims, *grid.shape))
    for axis in range(grid.dims):
        dpsi = gradient(psi.amplitudes, grid, axis, scheme)
        out[axis] = psi.hbar / psi.mass * np.sum(np.imag(np.conj(psi.amplitudes) * dpsi), axis=0)
    return out


def velocity_at(psi: WaveFunction, Q, scheme: Scheme | None = None,
                rho_floor_rel: float = 1e-12) -> np.ndarray:
    """Guiding velocity v = J/rho at one point of a single snapshot.

    The current and density fields are phase-free, so interpolating them
    (rather than psi itself) keeps the velocity smooth and accurate between
    grid points.
    """
    pts = np.atleast_2d(np.asarray(Q, dtype=float))
    grid = psi.grid
    rho_v = cubic_interp(density(psi), grid, pts).real
    if rho_v[0] <= rho_floor_rel * float(density(psi).max()):
        raise NodeError("velocity requested at a node")
    j_v = cubic_interp(probability_current_fields(psi, scheme), grid, pts)
    return np.asarray(j_v[:, 0] / rho_v[0], dtype=float)


def velocity_field(psi: WaveFunction, rho_floor_rel: float = TRAJECTORY_NODE_FLOOR,
                   scheme: Scheme | None = None) -> np.ndarray:
    """Velocity sampled on the whole grid, zeroed where rho is below threshold.

    Returns shape (dims, *grid.shape). The zero fill only touches regions the
    trajectory machinery refuses to enter anyway.
    """
    grid = psi.grid
    rho = density(psi)
    floor = rho_floor_rel * float(rho.max())
    safe = np.where(rho > floor, rho, 1.0)
    out = np.empty((grid.dims, *grid.shape))
    for axis in range(grid.dims):
        dpsi = gradient(psi.amplitudes, grid, axis, scheme)
        num = np.sum(np.imag(np.conj(psi.amplitudes) * dpsi), axis=0)
        v = psi.hbar / psi.mass * num / safe
        out[axis] = np.where(rho > floor, v, 0.0)
    return out


def velocity_divergence(psi: WaveFunction, Q, rho_floor_rel: float = 1e-12) -> float:
    """div v at Q: differentiate the velocity field on the grid, then interpolate.

    The velocity field need not be periodic (it grows linearly for a
    spreading packet), so the derivative always uses the non-wrapping
    4th-order stencil.
    """
    pts = np.atleast_2d(np.asarray(Q, dtype=float))
    grid = psi.grid
    rho_v = np.sum(np.abs(cubic_interp(psi.amplitudes, grid, pts)) ** 2, axis=0)
    if rho_v[0] <= rho_floor_rel * float(density(psi).max()):
        raise NodeError("velocity divergence requested at a node")
    vf = velocity_field(psi)
    div = np.zeros(grid.shape)
    for axis in range(grid.dims):
        div += gradient(vf[axis], grid, axis, Scheme.FD4, wrap=False)
    return float(cubic_interp(div, grid, pts)[0])


class TimeInterpolator:
    """Cubic Hermite interpolation of a snapshot record in time.

    Snapshot time derivatives come from centered differences (one-sided at
    the record ends). The current J and density rho are precomputed per
    snapshot and blended directly; both are phase-free, which keeps the
    interpolated velocity J/rho smooth in space and time.
    """

    def __init__(self, record: EvolutionRecord, scheme: Scheme | None = None):
        self.record = record
        self.grid = record.grid
        snaps = record.snapshots
        self.t0 = snaps[0].t
        self.h = record.snapshot_spacing
        self.n = len(snaps)
        self._template = snaps[0]
        self.psi = np.stack([s.amplitudes for s in snaps])  # (S, C, *shape)
        self.dpsi = self._time_derivs(self.psi)
        self.rho = np.stack([density(s) for s in snaps])    # (S, *shape)
        self.drho = self._time_derivs(self.rho)
        self.current = np.stack([probability_current_fields(s, scheme) for s in snaps])
        self.dcurrent = self._time_derivs(self.current)     # (S, dims, *shape)
        self.max_rho = float(self.rho.max())

    def _time_derivs(self, stack: np.ndarray) -> np.ndarray:
        d = np.empty_like(stack)
        if self.n == 1:
            d[:] = 0
            return d
        d[1:-1] = (stack[2:] - stack[:-2]) / (2 * self.h)
        d[0] = (stack[1] - stack[0]) / self.h
        d[-1] = (stack[-1] - stack[-2]) / self.h
        return d

    @property
    def t_end(self) -> float:
        return self.t0 + (self.n - 1) * self.h

    def _blend_coeffs(self, t: float):
        s = (t - self.t0) / self.h
        i = int(np.floor(s))
        i = min(max(i, 0), self.n - 2)
        u = s - i
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        return i, h00, h10 * self.h, h01, h11 * self.h

    def _blend(self, stack: np.ndarray, dstack: np.ndarray, t: float) -> np.ndarray:
        i, c0, c1, c2, c3 = self._blend_coeffs(t)
        return c0 * stack[i] + c1 * dstack[i] + c2 * stack[i + 1] + c3 * dstack[i + 1]

    def wavefunction(self, t: float) -> WaveFunction:
        return self._template.with_amplitudes(self._blend(self.psi, self.dpsi, t), t=t)

    def velocity_rho(self, t: float, pts: np.ndarray):
        """Guiding velocity (m, dims) and density (m,) at points pts."""
        rho_t = self._blend(self.rho, self.drho, t)
        j_t = self._blend(self.current, self.dcurrent, t)
        rho_v = cubic_interp(rho_t, self.grid, pts).real
        j_v = cubic_interp(j_t, self.grid, pts)
        safe = np.where(rho_v > 0, rho_v, 1.0)
        v = (j_v / safe).T
        return np.ascontiguousarray(v), rho_v


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered samples of one pilot-wave path."""

    times: np.ndarray       # (n,)
    Q: np.ndarray           # (n, dims)
    v: np.ndarray           # (n, dims)
    rho: np.ndarray         # (n,)
    status: TrajectoryStatus
    abort_index: int        # first invalid sample when aborted, else n
    dt: float
    scheme: str = "rk4"

    @property
    def completed(self) -> bool:
        return self.status is TrajectoryStatus.COMPLETED

    @property
    def node_aborted(self) -> bool:
        return self.status is TrajectoryStatus.NODE_ABORTED

    @property
    def n_valid(self) -> int:
        return self.abort_index if not self.completed else len(self.times)


@dataclass(frozen=True)
class TrajectoryBundle:
    """Vectorized trajectories sharing one time base."""

    times: np.ndarray       # (n,)
    Q: np.ndarray           # (n, m, dims)
    v: np.ndarray           # (n, m, dims)
    rho: np.ndarray         # (n, m)
    status: np.ndarray      # (m,) int
    abort_index: np.ndarray  # (m,) int
    dt: float

    @property
    def n_trajectories(self) -> int:
        return self.Q.shape[1]

    @property
    def aborted_count(self) -> int:
        return int(np.sum(self.status != TrajectoryStatus.COMPLETED.value))

    def single(self, j: int) -> Trajectory:
        return Trajectory(
            times=self.times,
            Q=self.Q[:, j],
            v=self.v[:, j],
            rho=self.rho[:, j],
            status=TrajectoryStatus(int(self.status[j])),
            abort_index=int(self.abort_index[j]),
            dt=self.dt,
        )


def _resolve_dt(record: EvolutionRecord, dt_traj: float | None) -> tuple[float, int]:
    h = record.snapshot_spacing
    if dt_traj is None:
        return h / 8.0, 8
    ratio = h / dt_traj
    per = round(ratio)
    if per < 1 or abs(ratio - per) > 1e-9 * max(1.0, ratio):
        raise ConfigurationError("dt_traj must divide the snapshot spacing")
    return h / per, per


def _integrate_chunk(interp: TimeInterpolator, q0: np.ndarray, dt: float,
                     n_steps: int, floor: float) -> tuple[np.ndarray, ...]:
    grid = interp.grid
    m = q0.shape[0]
    dims = grid.dims
    periodic = grid.boundary is Boundary.PERIODIC

    times = interp.t0 + dt * np.arange(n_steps + 1)
    Q = np.full((n_steps + 1, m, dims), np.nan)
    V = np.full((n_steps + 1, m, dims), np.nan)
    R = np.full((n_steps + 1, m), np.nan)
    status = np.full(m, TrajectoryStatus.COMPLETED.value, dtype=np.int64)
    abort_index = np.full(m, n_steps + 1, dtype=np.int64)

    q = q0.copy()
    active = np.ones(m, dtype=bool)

    for step in range(n_steps + 1):
        t = times[step]
        v_now, rho_now = interp.velocity_rho(t, q) if np.any(active) else (np.zeros((m, dims)), np.zeros(m))
        # record current sample for active lanes
        newly_dead = active & (rho_now <= floor)
        if np.any(newly_dead):
            status[newly_dead] = TrajectoryStatus.NODE_ABORTED.value
            abort_index[newly_dead] = step
            active = active & ~newly_dead
        Q[step, active] = q[active]
        V[step, active] = v_now[active]
        R[step, active] = rho_now[active]
        if step == n_steps or not np.any(active):
            break
        # RK4 stage evaluations on active lanes
        qa = q[active]
        k1 = v_now[active]
        k2, _ = interp.velocity_rho(t + dt / 2, _wrap(grid, qa + dt / 2 * k1))
        k3, _ = interp.velocity_rho(t + dt / 2, _wrap(grid, qa + dt / 2 * k2))
        k4, _ = interp.velocity_rho(t + dt, _wrap(grid, qa + dt * k3))
        q_next = qa + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if periodic:
            q_next = grid.wrap(q_next)
            q[active] = q_next
        else:
            inside = grid.contains(q_next)
            if np.any(~inside):
                idx = np.flatnonzero(active)[~inside]
                status[idx] = TrajectoryStatus.LEFT_DOMAIN.value
                abort_index[idx] = step + 1
                sub = active.copy()
                sub[idx] = False
                q[np.flatnonzero(active)[inside]] = q_next[inside]
                active = sub
            else:
                q[active] = q_next
    return times, Q, V, R, status, abort_index


def _wrap(grid: Grid, pts: np.ndarray) -> np.ndarray:
    if grid.boundary is Boundary.PERIODIC:
        return grid.wrap(pts)
    # clamp stage points to the box so stage velocities stay defined; a lane
    # that truly exits is flagged when its full step lands outside
    out = pts.copy()
    for k, (a, b) in enumerate(grid.extents):
        out[:, k] = np.clip(out[:, k], a, b)
    return out


def integrate_many(record: EvolutionRecord, q0s: np.ndarray, dt_traj: float | None = None,
                   node_floor_rel: float = TRAJECTORY_NODE_FLOOR, threads: int = 1,
                   interp: TimeInterpolator | None = None) -> TrajectoryBundle:
    """Integrate a batch of trajectories over the whole record.

    Work is split into fixed-size chunks assembled in index order, so the
    result is bitwise independent of `threads`.
    """
    interp = interp or TimeInterpolator(record)
    q0s = np.atleast_2d(np.asarray(q0s, dtype=float))
    dt, per = _resolve_dt(record, dt_traj)
    n_steps = per * (interp.n - 1)
    floor = node_floor_rel * interp.max_rho

    chunks = [q0s[i:i + _CHUNK] for i in range(0, q0s.shape[0], _CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda c: _integrate_chunk(interp, c, dt, n_steps, floor), chunks))
    else:
        results = [_integrate_chunk(interp, c, dt, n_steps, floor) for c in chunks]

    times = results[0][0]
    Q = np.concatenate([r[1] for r in results], axis=1)
    V = np.concatenate([r[2] for r in results], axis=1)
    R = np.concatenate([r[3] for r in results], axis=1)
    status = np.concatenate([r[4] for r in results])
    abort_index = np.concatenate([r[5] for r in results])
    return TrajectoryBundle(times=times, Q=Q, v=V, rho=R, status=status,
                            abort_index=abort_index, dt=dt)


def integrate_trajectory(record: EvolutionRecord, q0, dt_traj: float | None = None,
                         node_floor_rel: float = TRAJECTORY_NODE_FLOOR,
                         interp: TimeInterpolator | None = None) -> Trajectory:
    q0 = np.atleast_2d(np.asarray(q0, dtype=float))
    rho0 = density(record.snapshots[0])
    start_rho = cubic_interp(rho0, record.grid, q0)[0]
    if start_rho <= node_floor_rel * float(rho0.max()):
        raise NodeError("trajectory started at a node")
    bundle = integrate_many(record, q0, dt_traj=dt_traj,
                            node_floor_rel=node_floor_rel, interp=interp)
    return bundle.single(0)


def equivariance_defect(traj: Trajectory, record: EvolutionRecord,
                        interp: TimeInterpolator | None = None) -> float:
    """Max relative drift of rho(Q(t), t) * exp(int div v dt) along the path.

    Along an exact trajectory d(rho)/dt = -rho div v, so the product is
    conserved; the drift measures the combined integration error.
    """
    interp = interp or TimeInterpolator(record)
    n = traj.n_valid
    divv = np.empty(n)
    for i in range(n):
        psi_t = interp.wavefunction(traj.times[i])
        divv[i] = velocity_divergence(psi_t, traj.Q[i])
    integral = np.concatenate([[0.0], np.cumsum((divv[1:] + divv[:-1]) / 2 * np.diff(traj.times[:n]))])
    product = traj.rho[:n] * np.exp(integral)
    return float(np.max(np.abs(product / product[0] - 1.0)))


def trajectory_to_csv(traj: Trajectory, path: str | Path,
                      aw_columns: dict[str, np.ndarray] | None = None) -> None:
    """Columns: t, Q per axis, v per axis, rho, then one a_w column per observable."""
    aw_columns = aw_columns or {}
    dims = traj.Q.shape[1]
    header = (["t"] + [f"q{k}" for k in range(dims)] + [f"v{k}" for k in range(dims)]
              + ["rho"] + [f"aw_{name}" for name in aw_columns])
    cols = list(aw_columns.values())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(traj.times)):
            row = [repr(float(traj.times[i]))]
            row += [repr(float(traj.Q[i, k])) for k in range(dims)]
            row += [repr(float(traj.v[i, k])) for k in range(dims)]
            row.append(repr(float(traj.rho[i])))
            row += [repr(float(c[i])) for c in cols]
            writer.writerow(row)
