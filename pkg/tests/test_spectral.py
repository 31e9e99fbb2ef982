import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_fields
from rigidcharge.errors import ConfigError
from rigidcharge.initial_data import plane_wave
from rigidcharge.spectral import (
    FieldPair, Grid, band_limit, free_propagate, hermitian_defect, propagate_phase,
    read_snapshot, spectral_curl, spectral_divergence, spectral_gradient, spectral_laplacian,
    write_snapshot,
)
from rigidcharge.state import ParticleState, PhaseSpacePoint
from rigidcharge.weights import make_weight, phase_norm


def test_grid_rejects_bad_sizes():
    with pytest.raises(ConfigError):
        Grid(10.0, 12)
    with pytest.raises(ConfigError):
        Grid(-1.0, 16)
    with pytest.raises(ConfigError):
        Grid(10.0, 4)


def test_grid_points_and_spacing(small_grid):
    g = small_grid
    assert g.dx == pytest.approx(0.5)
    assert g.x1d[0] == pytest.approx(-4.0)
    assert g.x1d[g.n // 2] == 0.0
    assert g.spectral_shape == (16, 16, 9)


def test_fft_roundtrip(small_grid, rng):
    f = rng.normal(size=(3,) + small_grid.shape)
    np.testing.assert_allclose(small_grid.ifft(small_grid.fft(f)), f, atol=1e-13)


def test_curl_of_constant_is_zero(small_grid):
    F = np.ones((3,) + small_grid.shape) * np.array([1.0, -2.0, 0.5])[:, None, None, None]
    assert np.max(np.abs(spectral_curl(F, small_grid))) < 1e-13


def test_curl_of_shear_wave(small_grid):
    g = small_grid
    k = 2 * np.pi / g.L
    x1 = g.coords[0]
    F = np.zeros((3,) + g.shape)
    F[1] = np.sin(k * x1)
    curl = spectral_curl(F, g)
    np.testing.assert_allclose(curl[0], 0.0, atol=1e-13)
    np.testing.assert_allclose(curl[1], 0.0, atol=1e-13)
    np.testing.assert_allclose(curl[2], k * np.cos(k * x1), atol=1e-13)


def test_divergence_of_curl_vanishes(grid32, rng):
    F = band_limit(rng.normal(size=(3,) + grid32.shape), grid32)
    d = spectral_divergence(spectral_curl(F, grid32), grid32)
    assert np.max(np.abs(d)) < 1e-12 * np.max(np.abs(F))


def test_divergence_examples(small_grid):
    g = small_grid
    assert np.max(np.abs(spectral_divergence(np.ones((3,) + g.shape), g))) < 1e-13
    k = 2 * np.pi / g.L
    F = np.zeros((3,) + g.shape)
    F[0] = np.sin(k * g.coords[0])
    np.testing.assert_allclose(spectral_divergence(F, g), k * np.cos(k * g.coords[0]), atol=1e-13)


def test_divergence_of_gradient_is_laplacian(grid32, rng):
    g = band_limit(rng.normal(size=grid32.shape), grid32)
    lhs = spectral_divergence(spectral_gradient(g, grid32), grid32)
    rhs = spectral_laplacian(g, grid32)
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(rhs))


def test_spectra_stay_hermitian(small_grid, rng):
    f = rng.normal(size=(3,) + small_grid.shape)
    assert hermitian_defect(small_grid.fft(f), small_grid) < 1e-14


def test_field_pair_is_immutable(small_grid):
    fp = FieldPair.zeros(small_grid)
    with pytest.raises(ValueError):
        fp.E[0, 0, 0, 0] = 1.0


def test_field_pair_arithmetic(small_grid, rng):
    a = random_fields(small_grid, rng)
    b = random_fields(small_grid, rng)
    np.testing.assert_allclose((a + b).E, a.E + b.E, atol=1e-14)
    np.testing.assert_allclose((a - b).B_hat, a.B_hat - b.B_hat, atol=1e-12)
    np.testing.assert_allclose(a.scaled(2.0).stacked(), 2.0 * a.stacked(), atol=1e-14)


# ---------------------------------------------------------------------------
# free propagation


def test_propagate_zero_time_is_identity(small_grid, rng):
    fp = random_fields(small_grid, rng)
    out = free_propagate(fp, 0.0)
    np.testing.assert_array_equal(out.E_hat, fp.E_hat)
    np.testing.assert_array_equal(out.B_hat, fp.B_hat)


def test_longitudinal_field_is_static(small_grid, rng):
    g = small_grid
    phi = band_limit(rng.normal(size=g.shape), g)
    E = spectral_gradient(phi, g)
    fp = FieldPair(g, E, np.zeros_like(E))
    out = free_propagate(fp, 1.37)
    np.testing.assert_allclose(out.E, E, atol=1e-13)
    np.testing.assert_allclose(out.B, 0.0, atol=1e-13)


def test_plane_wave_full_period(grid32):
    fp = plane_wave(grid32, (1, 0, 0), (0, 1, 0), 1.0)
    out = free_propagate(fp, grid32.L)
    err = np.linalg.norm(out.stacked() - fp.stacked()) / np.linalg.norm(fp.stacked())
    assert err < 1e-11


def test_plane_wave_matches_traveling_wave(grid32):
    g = grid32
    m = np.array([1, 2, 0])
    pol = np.array([2.0, -1.0, 0.0]) / np.sqrt(5)
    k = 2 * np.pi / g.L * m
    kn = np.linalg.norm(k)
    t = g.L / 4
    out = free_propagate(plane_wave(g, m, pol, 0.7), t)
    phase = np.tensordot(k, g.coords, axes=1) - kn * t
    E = 0.7 * pol[:, None, None, None] * np.cos(phase)
    B = 0.7 * np.cross(k / kn, pol)[:, None, None, None] * np.cos(phase)
    np.testing.assert_allclose(out.E, E, atol=1e-12)
    np.testing.assert_allclose(out.B, B, atol=1e-12)


def test_particle_only_state_is_unchanged(small_grid):
    pt = ParticleState((0.5, 0.0, 0.0), (0.1, 0.0, 0.0))
    phi = PhaseSpacePoint([pt], [FieldPair.zeros(small_grid)], small_grid)
    out = propagate_phase(phi, 2.5)
    np.testing.assert_array_equal(out.particles[0].q, pt.q)
    np.testing.assert_array_equal(out.fields[0].E, 0.0)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_weighted_growth_bound_plane_wave(grid32, t):
    w = make_weight("inverse_quadratic", grid32)
    fp = plane_wave(grid32, (1, 1, 0), (0, 0, 1), 1.0)
    phi = PhaseSpacePoint([ParticleState((0, 0, 0), (0, 0, 0))], [fp], grid32)
    assert phase_norm(propagate_phase(phi, t), w) <= np.exp(w.gamma * t) * phase_norm(phi, w)


def test_constant_weight_norm_is_conserved(grid32, rng):
    w = make_weight("constant", grid32)
    fp = random_fields(grid32, rng)
    phi = PhaseSpacePoint([ParticleState((0, 0, 0), (0, 0, 0))], [fp], grid32)
    n0 = phase_norm(phi, w)
    assert abs(phase_norm(propagate_phase(phi, 3.3), w) - n0) < 1e-12 * n0


_prop_grid = Grid(6.0, 8)


@settings(max_examples=25, deadline=None)
@given(
    t1=st.floats(-5, 5, allow_nan=False),
    t2=st.floats(-5, 5, allow_nan=False),
    seed=st.integers(0, 2**32 - 1),
)
def test_group_law_and_reversibility(t1, t2, seed):
    fp = random_fields(_prop_grid, np.random.default_rng(seed))
    a = free_propagate(free_propagate(fp, t1), t2).stacked()
    b = free_propagate(fp, t1 + t2).stacked()
    scale = np.max(np.abs(fp.stacked()))
    assert np.max(np.abs(a - b)) < 1e-11 * scale
    back = free_propagate(free_propagate(fp, t1), -t1).stacked()
    assert np.max(np.abs(back - fp.stacked())) < 1e-11 * scale


@settings(max_examples=25, deadline=None)
@given(t=st.floats(-20, 20, allow_nan=False), seed=st.integers(0, 2**32 - 1))
def test_free_flow_conserves_field_energy(t, seed):
    fp = random_fields(_prop_grid, np.random.default_rng(seed))
    e0 = np.sum(fp.stacked() ** 2)
    e1 = np.sum(free_propagate(fp, t).stacked() ** 2)
    assert abs(e1 - e0) < 1e-12 * e0


def test_snapshot_roundtrip(tmp_path, small_grid, rng):
    fp = random_fields(small_grid, rng)
    path = write_snapshot(tmp_path / "snap.bin", fp, 1.25)
    back, t = read_snapshot(path)
    assert t == 1.25
    np.testing.assert_array_equal(back.stacked(), fp.stacked())
    header = (tmp_path / "snap.bin.hdr").read_text()
    assert "components = Ex,Ey,Ez,Bx,By,Bz" in header
    assert not list(tmp_path.glob("*.partial"))
    raw = np.fromfile(path, dtype="<f8")
    np.testing.assert_array_equal(raw[: small_grid.n**3], fp.E[0].ravel())
