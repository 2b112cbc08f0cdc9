"""Equilibrium sampling and ensemble statistics over pilot-wave trajectories.

Initial configurations are drawn i.i.d. from the grid density rho = |psi0|^2
by inverse-CDF sampling on the discrete cell measure with uniform jitter
inside each cell; every draw is a fixed function of (seed, sample index), so
reports are bitwise reproducible regardless of scheduling.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .evolution import EvolutionRecord, FreeGaussianOracle
from .grid import Boundary, Grid, WaveFunction, density
from .guidance import TimeInterpolator, TrajectoryStatus, integrate_many
from .operators import (
    MomentumAxis,
    Observable,
    apply,
    expectation,
    local_eigen_check_many,
    observable_id,
    weak_values_many,
)

KS_ONE_PERCENT = 1.6276  # sup-distance bound at the 1% level, D < c / sqrt(n)


def _cell_edges(grid: Grid, axis: int) -> np.ndarray:
    """Sampling cell boundaries along one axis.

    Periodic cells tile [x_min, x_max) from the left node; box cells are
    centered on the nodes and clipped at the walls.
    """
    x = grid.axis_coords(axis)
    dx = grid.spacing[axis]
    if grid.boundary is Boundary.PERIODIC:
        return np.concatenate([x, [x[-1] + dx]])
    edges = np.concatenate([[x[0]], (x[:-1] + x[1:]) / 2, [x[-1]]])
    return edges


def sample_equilibrium(psi: WaveFunction, n: int, seed: int) -> np.ndarray:
    """Draw n points from rho(q) dx^dims; deterministic under (seed, n)."""
    grid = psi.grid
    rho = density(psi)
    rng = np.random.default_rng(seed)
    uniforms = rng.random(n)
    jitters = rng.random((n, grid.dims))

    weights = rho.reshape(-1)
    cum = np.cumsum(weights)
    cum /= cum[-1]
    flat_idx = np.searchsorted(cum, uniforms, side="right")
    flat_idx = np.minimum(flat_idx, weights.size - 1)
    idx = np.unravel_index(flat_idx, grid.shape)

    pts = np.empty((n, grid.dims))
    for axis in range(grid.dims):
        edges = _cell_edges(grid, axis)
        lo = edges[:-1][idx[axis]]
        hi = edges[1:][idx[axis]]
        pts[:, axis] = lo + jitters[:, axis] * (hi - lo)
    return pts


@dataclass(frozen=True)
class PropertyOneEntry:
    """Ensemble average of one weak value versus the operator expectation."""

    observable: str
    n: int
    seed: int
    mc_mean: float
    std_error: float
    z_score: float
    expectation: float
    integral: float          # deterministic grid integral of Re[psi^dag A psi]
    integral_rel_err: float
    node_count: int
    statistical_warning: bool

    def passed(self, z_max: float = 4.0, integral_tol: float = 1e-8) -> bool:
        return self.integral_rel_err <= integral_tol and abs(self.z_score) <= z_max


def ensemble_average(psi: WaveFunction, A: Observable, n: int, seed: int,
                     rho_floor_rel: float = 1e-12) -> PropertyOneEntry:
    """Monte-Carlo mean of a_w over equilibrium samples, plus the exact
    quadrature identity: the grid integral of Re[psi^dag (A psi)] must equal
    <A> without any sampling noise."""
    pts = sample_equilibrium(psi, n, seed)
    apsi = apply(A, psi)
    a_w, _, _, node = weak_values_many(A, psi, pts, rho_floor_rel=rho_floor_rel, apsi=apsi)
    good = ~node
    node_count = int(np.sum(node))
    vals = a_w[good]
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    se = std / np.sqrt(vals.size)

    exp_val = expectation(A, psi)
    integrand = np.sum(np.real(np.conj(psi.amplitudes) * apsi), axis=0)
    integral = float(np.sum(integrand) * psi.grid.cell_volume)
    # relative to the integrand's L1 mass so symmetric states (<A> = 0) do
    # not divide a rounding-level discrepancy by zero
    scale = max(abs(exp_val), float(np.sum(np.abs(integrand)) * psi.grid.cell_volume), 1e-300)
    integral_rel_err = abs(integral - exp_val) / scale

    if se > 1e-14 * max(1.0, abs(mean)):
        z = (mean - exp_val) / se
    else:
        # constant weak-value field: fall back to direct comparison
        z = 0.0 if abs(mean - exp_val) <= 1e-10 * max(1.0, abs(exp_val)) else np.inf
    return PropertyOneEntry(
        observable=observable_id(A),
        n=n,
        seed=seed,
        mc_mean=mean,
        std_error=float(se),
        z_score=float(z),
        expectation=float(exp_val),
        integral=integral,
        integral_rel_err=float(integral_rel_err),
        node_count=node_count,
        statistical_warning=node_count > 0.01 * n,
    )


@dataclass(frozen=True)
class EquivarianceEntry:
    t_check: float
    n: int
    seed: int
    bins: int
    sup_distance: float
    ks_bound: float
    chi_square: float
    dof: int
    aborted_fraction: float
    inconclusive: bool
    passed: bool
    bin_edges: np.ndarray = field(repr=False)
    empirical: np.ndarray = field(repr=False)
    reference: np.ndarray = field(repr=False)


def equivariance_test(record: EvolutionRecord, n: int, seed: int,
                      t_check: float | None = None, bins: int = 64,
                      threads: int = 1) -> EquivarianceEntry:
    """Transport an equilibrium ensemble and compare the final histogram with
    |psi_t|^2 through the binned sup-distance of cumulative masses (1D)."""
    grid = record.grid
    if grid.dims != 1:
        raise ConfigurationError("the equivariance histogram test is 1D")
    times = record.times
    t_check = float(times[-1]) if t_check is None else float(t_check)
    snap_idx = int(np.argmin(np.abs(times - t_check)))
    if abs(times[snap_idx] - t_check) > 1e-9 * max(1.0, abs(t_check)):
        raise ConfigurationError("t_check must coincide with a snapshot time")

    psi0 = record.snapshots[0]
    pts = sample_equilibrium(psi0, n, seed)
    sub = EvolutionRecord(
        snapshots=record.snapshots[: snap_idx + 1], method=record.method,
        dt=record.dt, stride=record.stride, potential=record.potential,
    )
    bundle = integrate_many(sub, pts, threads=threads)
    completed = bundle.status == TrajectoryStatus.COMPLETED.value
    aborted_fraction = 1.0 - completed.mean()
    finals = bundle.Q[-1, completed, 0]

    a, b = grid.extents[0]
    edges = np.linspace(a, b, bins + 1)
    counts, _ = np.histogram(finals, bins=edges)
    emp = counts / max(1, finals.size)

    rho_t = density(record.snapshots[snap_idx])
    cell_edges = _cell_edges(grid, 0)
    cell_mass = rho_t * np.diff(cell_edges)
    centers = grid.axis_coords(0)
    which = np.clip(np.digitize(centers, edges) - 1, 0, bins - 1)
    ref = np.zeros(bins)
    np.add.at(ref, which, cell_mass)
    ref /= ref.sum()

    D = float(np.max(np.abs(np.cumsum(emp) - np.cumsum(ref))))
    ks_bound = KS_ONE_PERCENT / np.sqrt(max(1, finals.size))
    with np.errstate(divide="ignore", invalid="ignore"):
        contrib = (counts - finals.size * ref) ** 2 / (finals.size * ref)
    chi2 = float(np.sum(contrib[ref > 0]))
    inconclusive = aborted_fraction > 0.01
    return EquivarianceEntry(
        t_check=t_check, n=n, seed=seed, bins=bins,
        sup_distance=D, ks_bound=float(ks_bound), chi_square=chi2,
        dof=int(np.sum(ref > 0)) - 1,
        aborted_fraction=float(aborted_fraction),
        inconclusive=bool(inconclusive),
        passed=bool((D < ks_bound) and not inconclusive),
        bin_edges=edges, empirical=emp, reference=ref,
    )


@dataclass(frozen=True)
class BornRuleEntry:
    n: int
    seed: int
    weights: tuple[float, ...]
    frequencies: tuple[float, ...]
    z_scores: tuple[float, ...]
    ambiguous_count: int
    aborted_count: int
    verdict_ok_fraction: float
    lambda_targets: tuple[float, ...]
    passed: bool


def born_rule_test(record: EvolutionRecord, branches: list[dict], weights,
                   n: int, seed: int, A: Observable | None = None,
                   eigen_tol: float = 0.1, ambiguity_floor: float = 1e-8,
                   lambda_rtol: float = 0.05, verdict_fraction: float = 0.99,
                   threads: int = 1) -> BornRuleEntry:
    """Two-branch frequency test.

    Transport equilibrium samples to the end of the record, assign each final
    position to the branch whose freely dispersed packet dominates there, and
    check (i) branch frequencies against |c_i|^2 within 3 binomial standard
    errors and (ii) that the pointwise momentum check inside each branch holds
    with lambda within `lambda_rtol` of that branch's hbar k.
    """
    if record.grid.dims != 1:
        raise ConfigurationError("the branch test is 1D")
    A = A or MomentumAxis(0)
    psi0 = record.snapshots[0]
    weights = tuple(float(w) for w in weights)
    pts = sample_equilibrium(psi0, n, seed)
    bundle = integrate_many(record, pts, threads=threads)
    completed = bundle.status == TrajectoryStatus.COMPLETED.value
    aborted = int(np.sum(~completed))
    T = float(bundle.times[-1])
    finals = bundle.Q[-1, completed, 0]

    oracles = [
        FreeGaussianOracle(x0=b["x0"], sigma0=b["sigma"], k0=b["k0"],
                           hbar=psi0.hbar, mass=psi0.mass)
        for b in branches
    ]
    rel = np.stack([
        o.density(finals, T) / o.density(o.center(T), T) for o in oracles
    ])
    ambiguous = np.sum(rel > ambiguity_floor, axis=0) > 1
    assigned = np.argmax(rel, axis=0)
    usable = ~ambiguous

    psi_T = record.snapshots[-1]
    holds, lam, _, _, _, node = local_eigen_check_many(
        A, psi_T, finals.reshape(-1, 1), tol=eigen_tol)

    freqs, zs, lam_targets = [], [], []
    ok_total, count_total = 0, 0
    n_usable = int(np.sum(usable))
    for i, b in enumerate(branches):
        in_branch = usable & (assigned == i)
        count = int(np.sum(in_branch))
        freq = count / max(1, n_usable)
        se = np.sqrt(weights[i] * (1 - weights[i]) / max(1, n_usable))
        zs.append((freq - weights[i]) / se)
        freqs.append(freq)
        target = psi0.hbar * b["k0"]
        lam_targets.append(target)
        good = in_branch & holds & ~node
        lam_ok = good & (np.abs(lam - target) <= lambda_rtol * abs(target))
        ok_total += int(np.sum(lam_ok))
        count_total += count
    verdict_ok = ok_total / max(1, count_total)
    passed = all(abs(z) <= 3.0 for z in zs) and verdict_ok >= verdict_fraction
    return BornRuleEntry(
        n=n, seed=seed, weights=weights,
        frequencies=tuple(float(f) for f in freqs),
        z_scores=tuple(float(z) for z in zs),
        ambiguous_count=int(np.sum(ambiguous)),
        aborted_count=aborted,
        verdict_ok_fraction=float(verdict_ok),
        lambda_targets=tuple(float(x) for x in lam_targets),
        passed=bool(passed),
    )


# ---------------------------------------------------------------------------
# Aggregate report and writers.


@dataclass(frozen=True)
class EnsembleReport:
    n_samples: int
    seed: int
    aborted_count: int
    observables: tuple[PropertyOneEntry, ...] = ()
    equivariance: EquivarianceEntry | None = None
    born_rule: BornRuleEntry | None = None

    def to_dict(self) -> dict:
        out = {
            "n_samples": self.n_samples,
            "seed": self.seed,
            "aborted_count": self.aborted_count,
            "observables": [
                {
                    "observable": e.observable,
                    "mc_mean": e.mc_mean,
                    "std_error": e.std_error,
                    "z_score": e.z_score,
                    "expectation": e.expectation,
                    "integral": e.integral,
                    "integral_rel_err": e.integral_rel_err,
                    "node_count": e.node_count,
                    "statistical_warning": e.statistical_warning,
                }
                for e in self.observables
            ],
        }
        if self.equivariance is not None:
            e = self.equivariance
            out["equivariance"] = {
                "t_check": e.t_check, "n": e.n, "seed": e.seed, "bins": e.bins,
                "sup_distance": e.sup_distance, "ks_bound": e.ks_bound,
                "chi_square": e.chi_square, "dof": e.dof,
                "aborted_fraction": e.aborted_fraction,
                "inconclusive": e.inconclusive, "passed": e.passed,
            }
        if self.born_rule is not None:
            b = self.born_rule
            out["born_rule"] = {
                "n": b.n, "seed": b.seed,
                "weights": list(b.weights),
                "frequencies": list(b.frequencies),
                "z_scores": list(b.z_scores),
                "ambiguous_count": b.ambiguous_count,
                "aborted_count": b.aborted_count,
                "verdict_ok_fraction": b.verdict_ok_fraction,
                "lambda_targets": list(b.lambda_targets),
                "passed": b.passed,
            }
        return out


def write_histogram_csv(entry: EquivarianceEntry, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "empirical", "reference"])
        for i in range(entry.bins):
            writer.writerow([
                repr(float(entry.bin_edges[i])), repr(float(entry.bin_edges[i + 1])),
                repr(float(entry.empirical[i])), repr(float(entry.reference[i])),
            ])
