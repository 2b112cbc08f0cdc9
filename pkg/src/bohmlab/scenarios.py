"""Scenario configs: validation, construction, and pipeline execution.

A scenario is one JSON document describing a reproducible run. The five
pipelines are evolve, trajectories, ensemble, verify, and waveguide; each
declares named checks whose conjunction determines the process exit status.
Reports embed the hash of the effective config and never contain timestamps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import dynamics, ensemble, waveguide
from .derivatives import Scheme
from .errors import BohmlabError, ScenarioValidationError
from .evolution import (
    EvolutionRecord,
    Method,
    Propagator,
    analytic_state,
    continuity_residual,
    evolve,
)
from .grid import Grid, WaveFunction
from .guidance import (
    TimeInterpolator,
    equivariance_defect,
    integrate_many,
    trajectory_to_csv,
)
from .operators import (
    Hamiltonian,
    MomentumAxis,
    expectation,
    observable_from_config,
    observable_id,
    probe_extrapolate,
    robustness_probe,
)
from .reporting import config_hash, write_report, write_run_meta

PIPELINES = ("evolve", "trajectories", "ensemble", "verify", "waveguide")

_PIPELINE_BLOCKS = {
    "evolve": ("grid", "state", "propagator"),
    "trajectories": ("grid", "state", "propagator", "trajectories"),
    "ensemble": ("grid", "state", "ensemble"),
    "verify": ("verify",),
    "waveguide": ("waveguide",),
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ScenarioResult:
    name: str
    checks: tuple[CheckResult, ...]
    report: dict
    out_dir: Path

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _bundled_root():
    return resources.files("bohmlab") / "scenario_configs"


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in _bundled_root().iterdir() if p.name.endswith(".json"))


def load_bundled(name: str) -> dict:
    path = _bundled_root() / f"{name}.json"
    if not path.is_file():
        raise ScenarioValidationError("name", f"no bundled scenario named {name!r}")
    return json.loads(path.read_text())


def load_config(path_or_name: str) -> dict:
    p = Path(path_or_name)
    if p.exists():
        return json.loads(p.read_text())
    return load_bundled(path_or_name)


def validate(config: dict) -> None:
    if not isinstance(config, dict):
        raise ScenarioValidationError("<root>", "config must be a JSON object")
    for key in ("name", "pipeline"):
        if key not in config:
            raise ScenarioValidationError(key, "missing required key")
    if config["pipeline"] not in PIPELINES:
        raise ScenarioValidationError("pipeline", f"must be one of {PIPELINES}")
    for block in _PIPELINE_BLOCKS[config["pipeline"]]:
        if block not in config:
            raise ScenarioValidationError(block, f"required by the {config['pipeline']} pipeline")
    if "grid" in config:
        g = config["grid"]
        for key in ("extents", "points"):
            if key not in g:
                raise ScenarioValidationError(f"grid.{key}", "missing required key")
        try:
            build_grid(g)
        except BohmlabError as exc:
            raise ScenarioValidationError("grid", str(exc)) from exc
    if "state" in config and "family" not in config["state"]:
        raise ScenarioValidationError("state.family", "missing required key")
    if "observables" in config:
        grid_cfg = config.get("grid", {})
        boundary = grid_cfg.get("boundary", "periodic")
        spinor = config.get("state", {}).get("family", "").startswith("spinor")
        for i, cfg in enumerate(config["observables"]):
            if cfg.get("scheme") == "spectral" and boundary == "box":
                raise ScenarioValidationError(
                    f"observables[{i}].scheme", "spectral scheme on a box grid")
            if cfg.get("kind") == "spin" and not spinor:
                raise ScenarioValidationError(
                    f"observables[{i}]", "spin observable on a scalar state")
    if "propagator" in config:
        p = config["propagator"]
        for key in ("method", "dt", "steps"):
            if key not in p:
                raise ScenarioValidationError(f"propagator.{key}", "missing required key")
        boundary = config.get("grid", {}).get("boundary", "periodic")
        if p["method"] == "split_step" and boundary == "box":
            raise ScenarioValidationError("propagator.method", "split_step needs a periodic grid")
        if p["method"] == "crank_nicolson" and boundary != "box":
            raise ScenarioValidationError("propagator.method", "crank_nicolson needs a box grid")


def build_grid(cfg: dict) -> Grid:
    return Grid(
        extents=tuple(tuple(e) for e in cfg["extents"]),
        points=tuple(cfg["points"]),
        boundary=cfg.get("boundary", "periodic"),
    )


def build_potential(config: dict, grid: Grid) -> np.ndarray | None:
    cfg = config.get("potential")
    if cfg is None or cfg.get("kind", "free") == "free":
        return None
    kind = cfg["kind"]
    if kind == "harmonic":
        omega = float(cfg["omega"])
        center = float(cfg.get("center", 0.0))
        mass = float(config.get("units", {}).get("mass", 1.0))
        v = np.zeros(grid.shape)
        for axis in range(grid.dims):
            v = v + 0.5 * mass * omega**2 * (grid.coordinate_field(axis) - center) ** 2
        return v
    if kind == "step":
        height = float(cfg["height"])
        position = float(cfg.get("position", 0.0))
        return np.where(grid.coordinate_field(0) >= position, height, 0.0)
    raise ScenarioValidationError("potential.kind", f"unknown potential {kind!r}")


def build_state(config: dict, grid: Grid) -> WaveFunction:
    units = config.get("units", {})
    state = config["state"]
    return analytic_state(
        state["family"], state.get("params", {}), grid,
        hbar=float(units.get("hbar", 1.0)), mass=float(units.get("mass", 1.0)),
    )


def build_propagator(config: dict, potential: np.ndarray | None) -> tuple[Propagator, int]:
    p = config["propagator"]
    prop = Propagator(
        method=Method(p["method"]), dt=float(p["dt"]),
        potential=potential, stride=int(p.get("stride", 1)),
    )
    return prop, int(p["steps"])


def build_observables(config: dict, potential: np.ndarray | None) -> list:
    return [observable_from_config(cfg, potential) for cfg in config.get("observables", [])]


def _tol(config: dict, key: str, default: float) -> float:
    return float(config.get("tolerances", {}).get(key, default))


# ---------------------------------------------------------------------------
# Pipeline runners. Each returns (payload-dict, [CheckResult]) and may write
# extra artifacts into out_dir.


def _run_evolve(config, out_dir, threads, seed):
    grid = build_grid(config["grid"])
    potential = build_potential(config, grid)
    psi0 = build_state(config, grid)
    prop, steps = build_propagator(config, potential)
    record = evolve(psi0, prop, steps)
    record.save(out_dir / "record")

    h = _record_hamiltonian(record, psi0)
    e0 = expectation(h, record.snapshots[0])
    e1 = expectation(h, record.snapshots[-1])
    energy_drift = abs(e1 - e0) / max(abs(e0), 1e-300)
    energy_tol = _tol(config, "energy_rel", 1e-6)

    cont = continuity_residual(record) if len(record.snapshots) >= 3 else None
    payload = {
        "times": [s.t for s in record.snapshots],
        "energy_initial": e0,
        "energy_final": e1,
        "energy_drift": energy_drift,
        "continuity_max": None if cont is None else list(cont.max_norms),
    }
    checks = [CheckResult("energy_conservation", energy_drift <= energy_tol,
                          f"drift {energy_drift:.3e} <= {energy_tol:g}")]
    return payload, checks


def _record_hamiltonian(record: EvolutionRecord, psi: WaveFunction) -> Hamiltonian:
    scheme = None if psi.grid.boundary.value == "periodic" else Scheme.FD4
    return Hamiltonian(potential=record.potential, scheme=scheme)


def _run_trajectories(config, out_dir, threads, seed):
    grid = build_grid(config["grid"])
    potential = build_potential(config, grid)
    psi0 = build_state(config, grid)
    prop, steps = build_propagator(config, potential)
    record = evolve(psi0, prop, steps)
    observables = build_observables(config, potential)

    tcfg = config["trajectories"]
    if "q0" in tcfg:
        q0s = np.asarray(tcfg["q0"], dtype=float)
    else:
        n = int(tcfg["samples"])
        q0s = ensemble.sample_equilibrium(psi0, n, seed)
    dt_traj = tcfg.get("dt_traj")
    interp = TimeInterpolator(record)
    bundle = integrate_many(record, q0s, dt_traj=dt_traj, threads=threads, interp=interp)

    defect_tol = _tol(config, "equivariance_defect", 0.01)
    defects = []
    for j in range(bundle.n_trajectories):
        traj = bundle.single(j)
        aw_cols = {}
        for A in observables:
            series = dynamics.aw_along(traj, record, A, interp=interp)
            aw_cols[observable_id(A)] = series.a_w
        trajectory_to_csv(traj, out_dir / f"trajectory_{j:04d}.csv", aw_cols)
        if traj.completed:
            defects.append(equivariance_defect(traj, record, interp=interp))
    aborted = bundle.aborted_count
    payload = {
        "n_trajectories": bundle.n_trajectories,
        "aborted": aborted,
        "statuses": [int(s) for s in bundle.status],
        "equivariance_defects": defects,
    }
    checks = [
        CheckResult("all_completed", aborted == 0, f"{aborted} aborted"),
        CheckResult(
            "per_trajectory_equivariance",
            bool(defects) and max(defects) <= defect_tol,
            f"max defect {max(defects) if defects else float('nan'):.3e} <= {defect_tol:g}",
        ),
    ]
    return payload, checks


def _run_ensemble(config, out_dir, threads, seed):
    grid = build_grid(config["grid"])
    potential = build_potential(config, grid)
    psi0 = build_state(config, grid)
    ecfg = config["ensemble"]
    kind = ecfg.get("kind", "property1")
    n = int(ecfg["n"])
    checks: list[CheckResult] = []

    if kind == "property1":
        observables = build_observables(config, potential)
        entries = [ensemble.ensemble_average(psi0, A, n, seed) for A in observables]
        z_max = _tol(config, "z_max", 4.0)
        integral_tol = _tol(config, "integral_rel", 1e-8)
        report = ensemble.EnsembleReport(
            n_samples=n, seed=seed,
            aborted_count=sum(e.node_count for e in entries),
            observables=tuple(entries),
        )
        for e in entries:
            checks.append(CheckResult(
                f"property1[{e.observable}]",
                e.passed(z_max=z_max, integral_tol=integral_tol),
                f"z={e.z_score:.2f}, integral err {e.integral_rel_err:.2e}",
            ))
        return report.to_dict(), checks

    prop, steps = build_propagator(config, potential)
    record = evolve(psi0, prop, steps)

    if kind == "equivariance":
        entry = ensemble.equivariance_test(
            record, n, seed, bins=int(ecfg.get("bins", 64)), threads=threads)
        ensemble.write_histogram_csv(entry, out_dir / "histogram.csv")
        report = ensemble.EnsembleReport(
            n_samples=n, seed=seed,
            aborted_count=int(round(entry.aborted_fraction * n)),
            equivariance=entry,
        )
        checks.append(CheckResult(
            "equivariance_sup_distance", entry.passed,
            f"D={entry.sup_distance:.4f} < {entry.ks_bound:.4f}"))
        checks.append(CheckResult(
            "aborted_fraction", entry.aborted_fraction < 0.01,
            f"{entry.aborted_fraction:.3%}"))
        return report.to_dict(), checks

    if kind == "born_rule":
        state = config["state"]
        entry = ensemble.born_rule_test(
            record,
            branches=state["params"]["branches"],
            weights=state["params"]["weights"],
            n=n, seed=seed,
            eigen_tol=_tol(config, "eigen_tol", 0.1),
            lambda_rtol=_tol(config, "lambda_rtol", 0.05),
            threads=threads,
        )
        report = ensemble.EnsembleReport(
            n_samples=n, seed=seed, aborted_count=entry.aborted_count,
            born_rule=entry,
        )
        checks.append(CheckResult(
            "branch_frequencies", all(abs(z) <= 3 for z in entry.z_scores),
            "z=" + ",".join(f"{z:.2f}" for z in entry.z_scores)))
        checks.append(CheckResult(
            "verdict_quality", entry.verdict_ok_fraction >= 0.99,
            f"{entry.verdict_ok_fraction:.3%} verdicts in range"))
        return report.to_dict(), checks

    raise ScenarioValidationError("ensemble.kind", f"unknown ensemble kind {kind!r}")


def _run_probe_limits(params: dict) -> tuple[dict, bool]:
    grid = Grid(
        extents=((-30.0, 30.0),), points=(int(params.get("points", 4096)),))
    psi = analytic_state("gaussian", {
        "x0": 0.0, "sigma": params.get("sigma", 1.5), "k0": params.get("k0", 1.2)}, grid)
    x = grid.axis_coords(0)
    q_target = float(params.get("q", 1.0))
    Q = [float(x[np.argmin(np.abs(x - q_target))])]
    A = MomentumAxis(0)
    base = robustness_probe(A, psi, Q, gamma=0.0, n_max=2,
                            support_radius=params.get("support_radius", 2.5))
    beta = base.base_ratio.imag
    n_max = int(params.get("n_max", 1000))
    out = {"beta": beta, "q": Q[0]}
    ok = True
    tol = float(params.get("tol", 1e-6))
    for sign, label in ((1.0, "plus"), (-1.0, "minus")):
        probe = robustness_probe(A, psi, Q, gamma=sign * beta, n_max=n_max,
                                 support_radius=params.get("support_radius", 2.5))
        limit, carried = probe_extrapolate(probe.ratios)
        err = abs(carried.imag - sign * beta)
        out[label] = {
            "limit_re": limit.real, "limit_im": limit.imag,
            "carried_re": carried.real, "carried_im": carried.imag,
            "imag_error": err,
        }
        ok = ok and err <= tol
    out["imag_gap"] = out["plus"]["carried_im"] - out["minus"]["carried_im"]
    ok = ok and abs(out["imag_gap"] - 2 * beta) <= 2 * tol
    return out, ok


def _run_verify(config, out_dir, threads, seed):
    vcfg = config["verify"]
    points = int(vcfg.get("points", 1024))
    payload = {"cases": [], "checks": {}}
    checks: list[CheckResult] = []
    for case in vcfg.get("cases", []):
        report = dynamics.verify_case(case, points=points)
        payload["cases"].append(report.to_dict())
        checks.append(CheckResult(
            f"case[{case}]", report.passed,
            f"residual {report.residual:.2e} <= {report.tolerance:g}"))
    for name in vcfg.get("checks", []):
        if name == "anomalous_spin":
            rep = dynamics.anomalous_spin_report(points=points)
            ok = rep["exceeds_bound"] and rep["pointwise_within_bound"]
            payload["checks"][name] = rep
            checks.append(CheckResult(
                "anomalous_spin", ok,
                f"Re A_w = {rep['weak_value_re']:.3f} vs bound {rep['bound']:.3f}"))
        elif name == "probe_limits":
            rep, ok = _run_probe_limits(vcfg.get("probe", {}))
            payload["checks"][name] = rep
            checks.append(CheckResult(
                "probe_limits", ok,
                f"carried imag parts within {vcfg.get('probe', {}).get('tol', 1e-6):g}"))
        else:
            raise ScenarioValidationError("verify.checks", f"unknown check {name!r}")
    return payload, checks


def _run_waveguide(config, out_dir, threads, seed):
    wcfg = config["waveguide"]
    mode = wcfg.get("mode", "sweep")
    checks: list[CheckResult] = []
    if mode == "sweep":
        deltas = np.linspace(float(wcfg["delta_min"]), float(wcfg["delta_max"]),
                             int(wcfg.get("n_points", 41)))
        grid = build_grid(config["grid"]) if "grid" in config else None
        report = waveguide.delta_sweep(
            J0=float(wcfg["J0"]), delta_values=deltas, grid=grid,
            fit_tol=_tol(config, "fit_tol", 0.02))
        waveguide.write_sweep_csv(report, out_dir / "sweep.csv")
        forb = [r for r in report.rows if r.regime is waveguide.Regime.FORBIDDEN]
        spread = max(
            (max(abs(r.v_kappa_fit - r.v_scale), abs(r.v_im_pw - r.v_scale)) / r.v_scale
             for r in forb), default=0.0)
        payload = {
            "rows": [
                {
                    "delta": r.delta, "regime": r.regime.value, "v_scale": r.v_scale,
                    "v_kappa_fit": r.v_kappa_fit, "v_im_pw": r.v_im_pw,
                    "v_re_pw": r.v_re_pw, "v_measured": r.v_measured,
                }
                for r in report.rows
            ],
            "continuity_ok": report.continuity_ok,
            "max_jump_ratio": report.max_jump_ratio,
            "chain_max_err": report.chain_max_err,
            "max_fit_spread": spread,
        }
        checks.append(CheckResult(
            "chain_identity", report.chain_max_err <= 1e-10,
            f"max |v_scale - hbar kappa/m| = {report.chain_max_err:.2e}"))
        checks.append(CheckResult(
            "fit_agreement", spread <= _tol(config, "fit_tol", 0.02),
            f"max relative spread {spread:.3%}"))
        checks.append(CheckResult(
            "sweep_continuity", report.continuity_ok,
            f"max jump ratio {report.max_jump_ratio:.2f} < 3"))
        return payload, checks

    if mode == "step":
        grid = build_grid(config["grid"])
        potential = build_potential(config, grid)
        psi0 = build_state(config, grid)
        prop, steps = build_propagator(config, potential)
        record = evolve(psi0, prop, steps)
        psi_T = record.snapshots[-1]
        units = config.get("units", {})
        s = waveguide.StepScenario(
            E=float(wcfg["E"]), V0=float(wcfg["V0"]), J0=float(wcfg.get("J0", 0.0)),
            mass=float(units.get("mass", 1.0)), hbar=float(units.get("hbar", 1.0)))
        report = waveguide.identity_check(
            s, psi_T, step_position=float(config["potential"].get("position", 0.0)),
            fit_tol=_tol(config, "fit_tol", 0.02))
        payload = {
            "v_scale": report.v_scale, "v_kappa_fit": report.v_kappa_fit,
            "v_im_pw": report.v_im_pw, "kappa_fit": report.kappa_fit,
            "rel_spread": report.rel_spread, "window": list(report.window),
        }
        checks.append(CheckResult(
            "identity", report.passed,
            f"spread {report.rel_spread:.3%} <= {report.fit_tol:.0%}"))
        return payload, checks

    raise ScenarioValidationError("waveguide.mode", f"unknown mode {mode!r}")


_RUNNERS = {
    "evolve": _run_evolve,
    "trajectories": _run_trajectories,
    "ensemble": _run_ensemble,
    "verify": _run_verify,
    "waveguide": _run_waveguide,
}


def run_scenario(config: dict, out_root: str | Path, threads: int = 1,
                 seed_override: int | None = None) -> ScenarioResult:
    validate(config)
    config = dict(config)
    if seed_override is not None:
        config["seed"] = int(seed_override)
    seed = int(config.get("seed", 0))

    out_dir = Path(out_root) / config["name"]
    out_dir.mkdir(parents=True, exist_ok=True)

    payload, checks = _RUNNERS[config["pipeline"]](config, out_dir, threads, seed)
    report = {
        "scenario": config["name"],
        "pipeline": config["pipeline"],
        "config_hash": config_hash(config),
        "seed": seed,
        "checks": [
            {"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks
        ],
        "results": payload,
    }
    write_report(out_dir / "report.json", report)
    write_run_meta(out_dir / "run_meta.json", threads=threads,
                   out_dir=str(out_dir), scenario=config["name"])
    return ScenarioResult(
        name=config["name"], checks=tuple(checks), report=report, out_dir=out_dir)
