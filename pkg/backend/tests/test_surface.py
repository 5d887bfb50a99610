"""Spectral geometry of the conformally flat torus."""
import numpy as np
import pytest

from apps.core.exceptions import GridMismatchError, InvalidFieldError, SolvabilityError
from apps.surface import services as geometry
from apps.surface.fieldio import read_field, write_field
from apps.surface.models import Grid, ScalarField

from .factories import TWO_PI, curved_surface, flat_surface, smooth_field


@pytest.mark.parametrize('n', [8, 48, 100])
def test_grid_rejects_sizes_that_are_not_powers_of_two(n):
    with pytest.raises(InvalidFieldError):
        Grid(n)


def test_scalar_field_rejects_nan_and_inf():
    grid = Grid(16)
    values = np.zeros(grid.shape)
    values[3, 4] = np.nan
    with pytest.raises(InvalidFieldError):
        ScalarField(grid, values)
    values[3, 4] = np.inf
    with pytest.raises(InvalidFieldError):
        ScalarField(grid, values)
    values[3, 4] = -np.inf
    assert ScalarField(grid, values, extended=True).values[3, 4] == -np.inf


def test_scalar_field_copies_and_freezes_values():
    grid = Grid(16)
    source = np.ones(grid.shape)
    field = ScalarField(grid, source)
    source[0, 0] = 5.0
    assert field.values[0, 0] == 1.0
    with pytest.raises(ValueError):
        field.values[0, 0] = 2.0


def test_scalar_field_rejects_wrong_shape():
    with pytest.raises(InvalidFieldError):
        ScalarField(Grid(16), np.zeros((16, 32)))


@pytest.mark.parametrize('seed', range(5))
def test_make_surface_normalizes_area(seed):
    surface = curved_surface(64, seed=seed, amplitude=2.0)
    assert surface.area == pytest.approx(1.0, abs=1e-13)
    assert geometry.integrate(surface, ScalarField.constant(surface.grid, 1.0)) == pytest.approx(1.0, abs=1e-13)


def test_make_surface_rejects_infinite_conformal_factor():
    grid = Grid(16)
    values = np.zeros(grid.shape)
    values[0, 0] = -np.inf
    with pytest.raises(InvalidFieldError):
        geometry.make_surface(grid, ScalarField(grid, values, extended=True))


def test_flat_laplacian_of_eigenfunctions():
    surface = flat_surface(32)
    x1, x2 = surface.grid.coordinates
    for k1, k2 in [(1, 0), (3, -2), (7, 5)]:
        f = np.cos(TWO_PI * (k1 * x1 + k2 * x2))
        expected = -(TWO_PI ** 2) * (k1 ** 2 + k2 ** 2) * f
        np.testing.assert_allclose(geometry.flat_laplacian(f), expected, atol=1e-9)


def test_odd_derivatives_drop_the_nyquist_mode():
    n = 16
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing='ij')
    checkerboard = (-1.0) ** (i + j)
    g1, g2 = geometry.flat_gradient(checkerboard)
    assert np.abs(g1).max() < 1e-12
    assert np.abs(g2).max() < 1e-12
    assert np.abs(geometry.flat_laplacian(checkerboard)).max() > 1.0


def test_poisson_solve_inverts_the_laplacian():
    surface = flat_surface(32)
    x1, x2 = surface.grid.coordinates
    f = np.sin(TWO_PI * x1) + np.cos(TWO_PI * (2 * x1 + 3 * x2))
    v = geometry.poisson_solve(surface, surface.make_field(f))
    expected = np.sin(TWO_PI * x1) / TWO_PI ** 2 + np.cos(TWO_PI * (2 * x1 + 3 * x2)) / (13 * TWO_PI ** 2)
    np.testing.assert_allclose(v.values, expected, atol=1e-13)
    assert abs(v.values.mean()) < 1e-15


def test_poisson_solve_of_zero_is_zero(flat32):
    v = geometry.poisson_solve(flat32, ScalarField.constant(flat32.grid, 0.0))
    assert np.all(v.values == 0.0)


def test_poisson_solve_rejects_nonzero_mean(flat32):
    with pytest.raises(SolvabilityError):
        geometry.poisson_solve(flat32, ScalarField.constant(flat32.grid, 1.0))


def test_shifted_inverse_solves_helmholtz():
    surface = flat_surface(32)
    f = smooth_field(surface, seed=4).values + 0.3
    v = geometry.shifted_inverse(f, 2.5)
    np.testing.assert_allclose(2.5 * v - geometry.flat_laplacian(v), f, atol=1e-12)


@pytest.mark.parametrize('seed', range(10))
def test_gauss_bonnet(seed):
    surface = curved_surface(64, seed=seed)
    assert abs(geometry.integrate(surface, geometry.gauss_curvature(surface))) < 1e-8


@pytest.mark.parametrize('seed', range(10))
def test_dirichlet_energy_is_conformally_invariant(seed):
    surface = curved_surface(64, seed=seed)
    u = smooth_field(surface, seed=50 + seed)
    curved = geometry.integrate(surface, geometry.grad_energy_density(surface, u))
    flat = geometry.flat_dirichlet_energy(u.values)
    assert curved == pytest.approx(flat, rel=1e-10)


def test_gauss_curvature_of_cosine_factor():
    grid = Grid(64)
    eps = 0.3
    surface = geometry.make_surface(grid, ScalarField.from_function(grid, lambda x1, x2: eps * np.cos(TWO_PI * x1)))
    x1, _ = grid.coordinates
    expected = 2.0 * np.pi ** 2 * eps * np.cos(TWO_PI * x1) * np.exp(-surface.phi.values)
    np.testing.assert_allclose(geometry.gauss_curvature(surface).values, expected, atol=1e-10)


def test_flat_curvature_is_zero(flat32):
    assert np.abs(geometry.gauss_curvature(flat32).values).max() < 1e-12


def test_laplace_beltrami_scales_by_conformal_factor(curved64):
    u = smooth_field(curved64, seed=9)
    expected = geometry.flat_laplacian(u.values) * np.exp(-curved64.phi.values)
    np.testing.assert_allclose(geometry.laplace_beltrami(curved64, u).values, expected)


def test_sobolev_norms_of_a_cosine(flat32):
    u = ScalarField.from_function(flat32.grid, lambda x1, x2: np.cos(TWO_PI * x1))
    l2, h1, h2 = geometry.sobolev_norms(flat32, u)
    assert l2 == pytest.approx(np.sqrt(0.5), rel=1e-12)
    assert h1 == pytest.approx(np.sqrt(0.5 + 0.5 * TWO_PI ** 2), rel=1e-12)
    assert h2 == pytest.approx(np.sqrt(0.5 + 0.5 * TWO_PI ** 2 + 0.5 * TWO_PI ** 4), rel=1e-12)


def test_fields_on_different_grids_are_rejected():
    small = flat_surface(16)
    with pytest.raises(GridMismatchError):
        geometry.integrate(small, ScalarField.constant(Grid(32), 1.0))


def test_minimal_image_offsets_wrap():
    grid = Grid(16)
    d1, d2 = grid.offsets((0.0, 0.0))
    assert d1.max() <= 0.5 and d1.min() >= -0.5
    assert d1[15, 0] == pytest.approx(-1.0 / 16)
    assert d2[0, 1] == pytest.approx(1.0 / 16)


class TestFieldFiles:
    def test_write_then_read_preserves_bits(self, tmp_path, curved64):
        field = curved64.phi
        path = write_field(tmp_path / 'phi.kwf', field)
        loaded = read_field(path)
        assert loaded.grid == field.grid
        assert np.array_equal(loaded.values, field.values)
        assert path.read_bytes().startswith(b'KWF1 64 64\n')

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / 'bad.kwf'
        path.write_bytes(b'KWF2 16 16\n' + bytes(16 * 16 * 8))
        with pytest.raises(InvalidFieldError):
            read_field(path)

    def test_rejects_truncated_payload(self, tmp_path):
        path = tmp_path / 'short.kwf'
        path.write_bytes(b'KWF1 16 16\n' + bytes(100))
        with pytest.raises(InvalidFieldError):
            read_field(path)

    def test_rejects_non_square(self, tmp_path):
        path = tmp_path / 'rect.kwf'
        path.write_bytes(b'KWF1 16 32\n' + bytes(16 * 32 * 8))
        with pytest.raises(InvalidFieldError):
            read_field(path)
