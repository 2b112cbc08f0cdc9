import numpy as np
import pytest

from bohmlab import (
    EvolutionRecord,
    FreeGaussianOracle,
    Grid,
    Hamiltonian,
    Propagator,
    WaveFunction,
    analytic_state,
    continuity_residual,
    density,
    evolve,
    expectation,
    norm,
)
from bohmlab.derivatives import Scheme
from bohmlab.errors import ConfigurationError, TruncationError, UnitarityError
from bohmlab.evolution import Method, lattice_momentum


def test_plane_wave_phase_advance():
    # free mode e^{ikx}: |psi| stays 1/sqrt(L), phase advances by omega t
    g = Grid(extents=((-8 * np.pi, 8 * np.pi),), points=(256,))
    k = 1.0
    psi0 = analytic_state("plane_wave", {"k": k}, g)
    rec = evolve(psi0, Propagator(method="split_step", dt=0.01, stride=20), steps=200)
    omega = k**2 / 2
    for snap in rec.snapshots:
        expected = psi0.amplitudes * np.exp(-1j * omega * snap.t)
        assert np.max(np.abs(snap.amplitudes - expected)) < 1e-12


def test_ho_ground_density_stationary():
    g = Grid(extents=((-10.0, 10.0),), points=(512,))
    V = 0.5 * g.coordinate_field(0) ** 2
    psi0 = analytic_state("ho_ground", {"omega": 1.0}, g)
    rec = evolve(psi0, Propagator(method="split_step", dt=2e-4, stride=100, potential=V), steps=1000)
    drift = max(np.max(np.abs(density(s) - density(psi0))) for s in rec.snapshots)
    assert drift < 1e-8


def test_free_gaussian_dispersion():
    g = Grid(extents=((-40.0, 40.0),), points=(1024,))
    sigma0 = 1.0
    psi0 = analytic_state("gaussian", {"x0": 0.0, "sigma": sigma0, "k0": 0.0}, g)
    oracle = FreeGaussianOracle(x0=0.0, sigma0=sigma0, k0=0.0)
    T = 2.0  # t = 2 m sigma0^2 / hbar
    rec = evolve(psi0, Propagator(method="split_step", dt=T / 512, stride=512), steps=512)
    x = g.coordinate_field(0)
    var = np.sum(density(rec.snapshots[-1]) * x**2) * g.cell_volume
    assert np.sqrt(var) == pytest.approx(oracle.sigma(T), rel=1e-4)


def test_unitarity_over_run():
    g = Grid(extents=((-20.0, 20.0),), points=(512,))
    V = 0.5 * g.coordinate_field(0) ** 2
    psi0 = analytic_state("gaussian", {"x0": 1.0, "sigma": 1.0, "k0": 0.5}, g)
    rec = evolve(psi0, Propagator(method="split_step", dt=1e-3, stride=250, potential=V), steps=1000)
    assert abs(norm(rec.snapshots[-1]) - norm(psi0)) < 1e-8


def test_crank_nicolson_energy_conservation():
    g = Grid(extents=((-10.0, 10.0),), points=(512,), boundary="box")
    V = 0.5 * g.coordinate_field(0) ** 2
    psi0 = analytic_state("ho_ground", {"omega": 1.0}, g)
    rec = evolve(psi0, Propagator(method="crank_nicolson", dt=1e-3, stride=1000, potential=V), steps=1000)
    H = Hamiltonian(potential=V, scheme=Scheme.FD4)
    e0 = expectation(H, rec.snapshots[0])
    e1 = expectation(H, rec.snapshots[-1])
    assert abs(e1 - e0) / abs(e0) < 1e-6
    assert abs(norm(rec.snapshots[-1]) - 1.0) < 1e-10


def test_split_step_energy_bounded_by_dt_squared():
    g = Grid(extents=((-12.0, 12.0),), points=(512,))
    V = 0.5 * g.coordinate_field(0) ** 2
    psi0 = analytic_state("gaussian", {"x0": 1.0, "sigma": 1.0, "k0": 0.0}, g)
    H = Hamiltonian(potential=V)
    drifts = []
    for dt in (2e-3, 1e-3):
        rec = evolve(psi0, Propagator(method="split_step", dt=dt, stride=int(0.5 / dt), potential=V),
                     steps=int(0.5 / dt))
        e0 = expectation(H, rec.snapshots[0])
        e1 = expectation(H, rec.snapshots[-1])
        drifts.append(abs(e1 - e0) / abs(e0))
    assert drifts[0] / max(drifts[1], 1e-16) > 3.0  # second order in dt


def test_method_grid_compatibility():
    gp = Grid(extents=((-10.0, 10.0),), points=(128,))
    gb = Grid(extents=((-10.0, 10.0),), points=(128,), boundary="box")
    psi_p = analytic_state("gaussian", {"x0": 0.0, "sigma": 1.0, "k0": 0.0}, gp)
    psi_b = analytic_state("gaussian", {"x0": 0.0, "sigma": 1.0, "k0": 0.0}, gb)
    with pytest.raises(ConfigurationError):
        evolve(psi_b, Propagator(method="split_step", dt=1e-3), steps=10)
    with pytest.raises(ConfigurationError):
        evolve(psi_p, Propagator(method="crank_nicolson", dt=1e-3), steps=10)


def test_cfl_warning():
    g = Grid(extents=((-10.0, 10.0),), points=(512,))
    psi0 = analytic_state("gaussian", {"x0": 0.0, "sigma": 1.0, "k0": 0.0}, g)
    with pytest.warns(RuntimeWarning):
        evolve(psi0, Propagator(method="split_step", dt=0.5, stride=1), steps=2)


def test_record_save_load_round_trip(tmp_path):
    g = Grid(extents=((-10.0, 10.0),), points=(64,))
    V = 0.1 * g.coordinate_field(0) ** 2
    psi0 = analytic_state("gaussian", {"x0": 0.0, "sigma": 1.2, "k0": 0.3}, g)
    rec = evolve(psi0, Propagator(method="split_step", dt=1e-3, stride=5, potential=V), steps=10)
    rec.save(tmp_path / "rec")
    back = EvolutionRecord.load(tmp_path / "rec")
    assert back.method is Method.SPLIT_STEP
    assert np.array_equal(back.times, rec.times)
    for a, b in zip(rec.snapshots, back.snapshots):
        assert np.array_equal(a.amplitudes, b.amplitudes)
    assert np.array_equal(back.potential, V)


# --- analytic states --------------------------------------------------------


def test_ho_ground_energy_value():
    g = Grid(extents=((-10.0, 10.0),), points=(512,))
    psi = analytic_state("ho_ground", {"omega": 1.0}, g)
    V = 0.5 * g.coordinate_field(0) ** 2
    assert expectation(Hamiltonian(potential=V), psi) == pytest.approx(0.5, abs=1e-6)


def test_plane_wave_uniform_density():
    g = Grid(extents=((0.0, 10.0),), points=(128,))
    psi = analytic_state("plane_wave", {"k": 2 * np.pi / 10 * 3}, g)
    assert np.allclose(density(psi), 0.1, rtol=1e-12)


def test_plane_wave_snaps_to_lattice():
    g = Grid(extents=((0.0, 10.0),), points=(128,))
    assert lattice_momentum(g, 1.9) == pytest.approx(2 * np.pi / 10 * 3)
    psi = analytic_state("plane_wave", {"k": 1.9}, g)
    # the snapped mode is exactly periodic: spectral derivative is one mode
    from bohmlab.operators import MomentumAxis, apply
    apsi = apply(MomentumAxis(0), psi)
    ratio = apsi[0, 5] / psi.amplitudes[0, 5]
    assert ratio.imag == pytest.approx(0.0, abs=1e-10)


def test_two_branch_masses_and_overlap():
    g = Grid(extents=((-64.0, 64.0),), points=(2048,))
    branches = [{"x0": -20.0, "sigma": 2.0, "k0": 1.0}, {"x0": 20.0, "sigma": 2.0, "k0": -1.0}]
    psi = analytic_state("two_branch", {"branches": branches, "weights": [0.3, 0.7]}, g)
    x = g.coordinate_field(0)
    left = float(np.sum(density(psi)[x < 0]) * g.cell_volume)
    assert left == pytest.approx(0.3, abs=1e-8)
    assert norm(psi) == pytest.approx(1.0, abs=1e-10)


def test_two_branch_rejects_overlap():
    g = Grid(extents=((-20.0, 20.0),), points=(256,))
    branches = [{"x0": -1.0, "sigma": 2.0, "k0": 0.0}, {"x0": 1.0, "sigma": 2.0, "k0": 0.0}]
    with pytest.raises(ConfigurationError):
        analytic_state("two_branch", {"branches": branches, "weights": [0.5, 0.5]}, g)


def test_truncation_error_for_wide_packet():
    g = Grid(extents=((-4.0, 4.0),), points=(64,))
    with pytest.raises(TruncationError):
        analytic_state("gaussian", {"x0": 0.0, "sigma": 2.0, "k0": 0.0}, g)


def test_spinor_families():
    g = Grid(extents=((-16.0, 16.0),), points=(256,))
    psi = analytic_state("spinor_separable", {
        "spatial": {"family": "gaussian", "params": {"x0": 0.0, "sigma": 1.0, "k0": 0.5}},
        "chi": [[0.6, 0.0], [0.0, 0.8]],
    }, g)
    assert psi.components == 2
    assert norm(psi) == pytest.approx(1.0, abs=1e-10)
    psi2 = analytic_state("spinor_two_packet", {
        "up": {"x0": -3.0, "sigma": 1.0, "k0": 0.0},
        "down": {"x0": 3.0, "sigma": 1.0, "k0": 0.0},
        "weights": [0.4, 0.6],
    }, g)
    assert norm(psi2) == pytest.approx(1.0, abs=1e-10)


# --- continuity -------------------------------------------------------------


def test_continuity_floor_on_stationary_state():
    g = Grid(extents=((-10.0, 10.0),), points=(512,))
    V = 0.5 * g.coordinate_field(0) ** 2
    psi0 = analytic_state("ho_ground", {"omega": 1.0}, g)
    rec = evolve(psi0, Propagator(method="split_step", dt=2e-4, stride=50, potential=V), steps=300)
    rep = continuity_residual(rec)
    assert np.max(rep.max_norms) < 1e-6


def test_continuity_floor_on_plane_wave():
    g = Grid(extents=((-8 * np.pi, 8 * np.pi),), points=(256,))
    psi0 = analytic_state("plane_wave", {"k": 1.0}, g)
    rec = evolve(psi0, Propagator(method="split_step", dt=1e-3, stride=100), steps=400)
    rep = continuity_residual(rec)
    assert np.max(rep.max_norms) < 1e-12


def test_continuity_second_order_convergence():
    def run(points, steps):
        g = Grid(extents=((-20.0, 20.0),), points=(points,))
        psi0 = analytic_state("gaussian", {"x0": 0.0, "sigma": 1.0, "k0": 0.6}, g)
        rec = evolve(psi0, Propagator(method="split_step", dt=1.0 / steps, stride=16), steps=steps)
        return float(np.max(continuity_residual(rec).max_norms))

    coarse = run(512, 256)
    fine = run(1024, 512)
    assert 3.2 < coarse / fine < 4.8


def test_continuity_needs_three_snapshots():
    g = Grid(extents=((-10.0, 10.0),), points=(128,))
    psi0 = analytic_state("gaussian", {"x0": 0.0, "sigma": 1.0, "k0": 0.0}, g)
    rec = evolve(psi0, Propagator(method="split_step", dt=1e-3, stride=10), steps=10)
    with pytest.raises(ConfigurationError):
        continuity_residual(rec)
