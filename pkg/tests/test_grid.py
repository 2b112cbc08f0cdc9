import numpy as np
import pytest

from bohmlab import (
    Boundary,
    Grid,
    WaveFunction,
    analytic_state,
    density,
    from_polar,
    inner_product,
    norm,
    normalize,
    to_polar,
)
from bohmlab.errors import (
    DegenerateStateError,
    ShapeMismatchError,
    UnsupportedOperationError,
)
from bohmlab.grid import (
    read_field_csv,
    read_grid_sidecar,
    write_field_csv,
    write_grid_sidecar,
)


def test_spacing_rules():
    gp = Grid(extents=((0.0, 1.0),), points=(10,), boundary="periodic")
    gb = Grid(extents=((0.0, 1.0),), points=(10,), boundary="box")
    assert gp.spacing[0] == pytest.approx(0.1)
    assert gb.spacing[0] == pytest.approx(1.0 / 9.0)
    assert gp.axis_coords(0)[-1] == pytest.approx(0.9)
    assert gb.axis_coords(0)[-1] == pytest.approx(1.0)


def test_grid_validation():
    with pytest.raises(ShapeMismatchError):
        Grid(extents=((0.0, 1.0),), points=(4,))
    with pytest.raises(ShapeMismatchError):
        Grid(extents=((1.0, 0.0),), points=(16,))
    with pytest.raises(ShapeMismatchError):
        Grid(extents=((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)), points=(8, 8, 8))


def test_normalized_state_has_unit_mass():
    g = Grid(extents=((-10.0, 10.0),), points=(256,))
    psi = analytic_state("gaussian", {"x0": 0.5, "sigma": 1.0, "k0": 2.0}, g)
    assert norm(psi) == pytest.approx(1.0, abs=1e-12)
    assert np.sum(density(psi)) * g.cell_volume == pytest.approx(1.0, abs=1e-10)
    assert np.all(density(psi) >= 0)


def test_inner_product_conjugate_symmetry():
    g = Grid(extents=((-10.0, 10.0),), points=(128,))
    rng = np.random.default_rng(0)
    a = WaveFunction(grid=g, amplitudes=rng.normal(size=(1, 128)) + 1j * rng.normal(size=(1, 128)))
    b = WaveFunction(grid=g, amplitudes=rng.normal(size=(1, 128)) + 1j * rng.normal(size=(1, 128)))
    assert inner_product(a, b) == pytest.approx(np.conj(inner_product(b, a)), abs=1e-14)
    assert inner_product(a, a) == pytest.approx(norm(a) ** 2, rel=1e-12)


def test_inner_product_orthogonal_oscillator_states():
    # first two oscillator eigenstates (natural units), quadrature oracle
    g = Grid(extents=((-12.0, 12.0),), points=(512,))
    x = g.axis_coords(0)
    psi0 = np.pi ** -0.25 * np.exp(-0.5 * x**2)
    psi1 = np.sqrt(2.0) * x * psi0
    overlap_oracle = np.trapezoid(psi0 * psi1, x)
    a = WaveFunction(grid=g, amplitudes=psi0[None].astype(complex))
    b = WaveFunction(grid=g, amplitudes=psi1[None].astype(complex))
    assert abs(overlap_oracle) < 1e-10
    assert abs(inner_product(a, b)) < 1e-8


def test_inner_product_grid_mismatch():
    a = WaveFunction(grid=Grid(extents=((0.0, 1.0),), points=(16,)), amplitudes=np.ones((1, 16)))
    b = WaveFunction(grid=Grid(extents=((0.0, 2.0),), points=(16,)), amplitudes=np.ones((1, 16)))
    with pytest.raises(ShapeMismatchError):
        inner_product(a, b)


def test_normalize_zero_state():
    g = Grid(extents=((0.0, 1.0),), points=(16,))
    psi = WaveFunction(grid=g, amplitudes=np.zeros((1, 16)))
    with pytest.raises(DegenerateStateError):
        normalize(psi)


def test_polar_plane_wave():
    g = Grid(extents=((-8 * np.pi, 8 * np.pi),), points=(512,))
    psi = analytic_state("plane_wave", {"k": 1.0}, g)
    p = to_polar(psi)
    assert np.allclose(p.R, p.R[0])
    # S = hbar k x up to a constant; check the increments
    dS = np.diff(p.S)
    assert np.allclose(dS, g.spacing[0], atol=1e-10)
    assert p.valid.all()


def test_polar_oscillator_ground_state():
    g = Grid(extents=((-10.0, 10.0),), points=(512,))
    psi = analytic_state("ho_ground", {"omega": 1.0}, g)
    p = to_polar(psi)
    x = g.axis_coords(0)
    expected_R = (1.0 / np.pi) ** 0.25 * np.exp(-0.5 * x**2)
    assert np.allclose(p.S[p.valid], 0.0, atol=1e-12)
    assert np.allclose(p.R, expected_R / norm(WaveFunction(grid=g, amplitudes=expected_R[None].astype(complex))), rtol=1e-10)


def test_polar_gaussian_phase_matches_pointwise_oracle():
    g = Grid(extents=((-16.0, 16.0),), points=(1024,))
    k0 = 2.3
    psi = analytic_state("gaussian", {"x0": 0.0, "sigma": 1.5, "k0": k0}, g)
    p = to_polar(psi)
    # oracle: raw atan2 per point, then numpy unwrap from the left edge
    raw = np.unwrap(np.angle(psi.amplitudes[0]))
    # both are defined up to a global 2*pi multiple; compare increments on valid points
    sel = p.valid
    assert np.allclose(np.diff(p.S[sel]), np.diff(raw[sel]), atol=1e-9)
    x = g.axis_coords(0)
    dS = np.gradient(p.S, x)
    assert np.allclose(dS[sel][10:-10], k0, atol=1e-6)


def test_polar_round_trip():
    g = Grid(extents=((-16.0, 16.0),), points=(512,))
    psi = analytic_state("gaussian", {"x0": -1.0, "sigma": 2.0, "k0": 1.7}, g)
    back = from_polar(to_polar(psi))
    sel = to_polar(psi).valid
    assert np.max(np.abs(back.amplitudes[0][sel] - psi.amplitudes[0][sel])) < 1e-12


def test_polar_rejects_spinor():
    g = Grid(extents=((-10.0, 10.0),), points=(64,))
    psi = WaveFunction(grid=g, amplitudes=np.ones((2, 64)))
    with pytest.raises(UnsupportedOperationError):
        to_polar(psi)


def test_polar_2d_unwrap():
    g = Grid(extents=((-8.0, 8.0), (-8.0, 8.0)), points=(64, 64))
    kx, ky = 2 * np.pi / 16 * 3, 2 * np.pi / 16 * 2
    X, Y = g.meshes()
    amp = np.exp(-(X**2 + Y**2) / 8) * np.exp(1j * (kx * X + ky * Y))
    psi = normalize(WaveFunction(grid=g, amplitudes=amp[None]))
    p = to_polar(psi)
    sel = p.valid
    gx = np.gradient(p.S, g.axis_coords(0), axis=0)
    gy = np.gradient(p.S, g.axis_coords(1), axis=1)
    assert np.median(np.abs(gx[sel] - kx)) < 1e-6
    assert np.median(np.abs(gy[sel] - ky)) < 1e-6


def test_field_csv_round_trip(tmp_path):
    g = Grid(extents=((-4.0, 4.0),), points=(32,))
    rng = np.random.default_rng(1)
    field = rng.normal(size=32) + 1j * rng.normal(size=32)
    write_field_csv(tmp_path / "f.csv", g, field)
    back = read_field_csv(tmp_path / "f.csv", g)
    assert np.array_equal(back, field)

    real_field = rng.normal(size=32)
    write_field_csv(tmp_path / "r.csv", g, real_field)
    back_r = read_field_csv(tmp_path / "r.csv", g)
    assert np.array_equal(back_r.real, real_field)


def test_grid_sidecar_round_trip(tmp_path):
    g = Grid(extents=((-4.0, 4.0), (0.0, 2.0)), points=(16, 8), boundary="box")
    write_grid_sidecar(tmp_path / "meta.json", g, time=1.5, hbar=1.0, mass=2.0)
    g2, meta = read_grid_sidecar(tmp_path / "meta.json")
    assert g2 == g
    assert meta["time"] == 1.5 and meta["mass"] == 2.0
