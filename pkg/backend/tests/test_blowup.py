"""Concentration analysis of flow states."""
import numpy as np
import pytest

from apps.blowup import services as blowup
from apps.core.exceptions import GeometryError
from apps.flow.models import FlowState
from apps.functionals import services as functionals
from apps.green import services as green
from apps.stationary import services as stationary
from apps.surface import services as geometry

from .factories import cosine_field, flat_surface, unit_weight

EIGHT_PI = 8.0 * np.pi
CENTER = (0.5, 0.5)


def _state(surface, u):
    return FlowState(u=u, t=0.0, step_index=0, mass0=functionals.mass(surface, u), dt=1e-3)


def _bubble_energy(R):
    return EIGHT_PI * (np.log1p(R * R) + 1.0 / (1.0 + R * R) - 1.0)


def test_local_mass_of_the_whole_torus_is_rho(curved64):
    weight = unit_weight(curved64)
    u = cosine_field(curved64, amplitude=2.0)
    assert blowup.local_mass(curved64, weight, u, CENTER) == pytest.approx(EIGHT_PI, rel=1e-13)
    assert blowup.local_mass(curved64, weight, u, CENTER, rho=4.0 * np.pi) == pytest.approx(4.0 * np.pi, rel=1e-13)


@pytest.mark.parametrize('r', [0.0, 0.5, -0.1])
def test_local_mass_rejects_bad_radii(flat32, r):
    with pytest.raises(GeometryError):
        blowup.local_mass(flat32, unit_weight(flat32), cosine_field(flat32), CENTER, r)


def test_synthetic_bubble_peaks_at_the_center(flat64):
    u = blowup.synthetic_bubble(flat64, CENTER, 1e-2)
    assert np.unravel_index(int(np.argmax(u.values)), u.values.shape) == (32, 32)
    assert u.at((32, 32)) == pytest.approx(-4.0 * np.log(1e-2))


@pytest.mark.parametrize('eps', [1e-2, 1e-3])
def test_a_single_bubble_carries_eight_pi(flat64, eps):
    u = blowup.synthetic_bubble(flat64, CENTER, eps)
    u = u.like(u.values + 10.0)
    state = _state(flat64, u)
    report = blowup.detect(flat64, unit_weight(flat64), state, state.mass0)
    assert report.suspected
    assert report.peak_count == 1
    assert report.quantization == pytest.approx(EIGHT_PI, rel=2e-2)
    assert report.fits[0].center == pytest.approx(CENTER, abs=1e-9)


@pytest.mark.parametrize('center', [(0.5078125, 0.5), (0.5078125, 0.5078125), (1.0 - 1.0 / 128, 0.25)])
def test_a_bubble_between_grid_nodes_is_one_peak(flat64, center):
    u = blowup.synthetic_bubble(flat64, center, 1e-2)
    u = u.like(u.values + 10.0)
    state = _state(flat64, u)
    report = blowup.detect(flat64, unit_weight(flat64), state, state.mass0)
    assert report.peak_count == 1
    assert len(report.fits) == 1
    assert report.suspected
    assert report.quantization == pytest.approx(EIGHT_PI, rel=2e-2)
    offset = np.subtract(report.fits[0].center, center)
    offset -= np.round(offset)
    assert np.abs(offset).max() <= flat64.dx


def test_two_bubbles_split_the_mass(flat64):
    first = blowup.synthetic_bubble(flat64, (0.25, 0.25), 1e-2).values
    second = blowup.synthetic_bubble(flat64, (0.75, 0.75), 1e-2).values
    u = flat64.make_field(np.logaddexp(first, second) + 10.0)
    state = _state(flat64, u)
    report = blowup.detect(flat64, unit_weight(flat64), state, state.mass0)
    assert report.peak_count == 2
    assert not report.suspected
    assert report.quantization == pytest.approx(4.0 * np.pi, rel=2e-2)


def test_smooth_state_is_not_suspected(flat64):
    state = _state(flat64, cosine_field(flat64))
    report = blowup.detect(flat64, unit_weight(flat64), state, state.mass0)
    assert not report.suspected
    assert report.peak_count == 0
    assert report.fits == []
    assert report.as_dict()['max_u'] == pytest.approx(0.5)


@pytest.mark.slow
@pytest.mark.parametrize('R', [2.0, 5.0, 10.0])
def test_bubble_energy_inside_the_rescaled_ball(R):
    surface = flat_surface(256)
    lam = 8.0
    u = blowup.exact_bubble(surface, CENTER, a=1.0, lam=lam)
    energy = blowup.neck_energy(surface, u, CENTER, 0.0, R * np.exp(-0.5 * lam))
    assert energy == pytest.approx(_bubble_energy(R), rel=1e-3)


@pytest.mark.slow
def test_green_energy_grows_like_minus_sixteen_pi_log():
    surface = flat_surface(256)
    G = green.green_function(surface, (128, 128))
    delta = 0.03
    ring = blowup.neck_energy(surface, G, CENTER, delta, 2.0 * delta)
    assert ring == pytest.approx(16.0 * np.pi * np.log(2.0), rel=5e-2)


def test_neck_energy_is_additive(flat64):
    u = blowup.exact_bubble(flat64, CENTER, a=1.0, lam=4.0)
    whole = blowup.neck_energy(flat64, u, CENTER, 0.0, 0.3)
    split = blowup.neck_energy(flat64, u, CENTER, 0.0, 0.1) + blowup.neck_energy(flat64, u, CENTER, 0.1, 0.3)
    assert split == pytest.approx(whole, rel=1e-6)


def test_outside_energy_complements_the_ball(flat64):
    u = blowup.exact_bubble(flat64, CENTER, a=1.0, lam=4.0)
    total = 0.5 * geometry.flat_dirichlet_energy(u.values)
    inside = blowup.neck_energy(flat64, u, CENTER, 0.0, 0.45)
    assert blowup.outside_energy(flat64, u, CENTER, 0.45) == pytest.approx(total - inside, abs=1e-12)
    # exact_bubble is constant beyond r = 0.4
    assert total == pytest.approx(inside, rel=1e-3)


@pytest.mark.parametrize('radii', [(0.2, 0.1), (0.0, 0.5), (-0.1, 0.2)])
def test_neck_energy_rejects_bad_annuli(flat32, radii):
    with pytest.raises(GeometryError):
        blowup.neck_energy(flat32, cosine_field(flat32), CENTER, *radii)


def test_rescaled_profile_must_stay_in_the_chart(flat32):
    with pytest.raises(GeometryError):
        blowup.rescaled_profile(flat32, cosine_field(flat32), CENTER, lam=0.0, radii=[0.0, 4.0, 8.0])


class TestBubbleFit:
    @pytest.fixture(scope='class')
    def profile(self):
        surface = flat_surface(256)
        lam = 8.0
        u = blowup.exact_bubble(surface, CENTER, a=1.0, lam=lam)
        return blowup.rescaled_profile(surface, u, CENTER, lam, np.linspace(0.0, 8.0, 33))

    def test_profile_starts_at_zero(self, profile):
        assert profile[0] == (0.0, 0.0)
        assert profile[-1][1] == pytest.approx(-2.0 * np.log1p(64.0), rel=1e-3)

    def test_recovers_the_bubble_scale(self, profile):
        fit = blowup.bubble_fit(profile, phi_at_center=0.0, mass0=np.pi)
        assert fit.success
        assert fit.a == pytest.approx(1.0, rel=1e-3)
        assert fit.a_theory == pytest.approx(1.0)
        assert fit.profile_residual < 1e-2

    @pytest.mark.slow
    def test_glued_bubble_matches_the_predicted_scale(self):
        surface = flat_surface(512)
        pole = (256, 256)
        data = green.compute_green_data(surface, pole)
        u = stationary.glued_bubble(surface, data, 0.008)
        lam = u.at(pole)
        profile = blowup.rescaled_profile(surface, u, CENTER, lam, np.linspace(0.0, 8.0, 33))
        fit = blowup.bubble_fit(profile, surface.phi.at(pole), functionals.mass(surface, u))
        assert fit.success
        assert fit.a_theory == pytest.approx(np.pi, rel=1e-9)
        assert abs(fit.a - fit.a_theory) / fit.a_theory <= 5e-2

    def test_flat_profile_is_not_a_bubble(self):
        profile = [(s, 0.0) for s in np.linspace(0.0, 8.0, 9)]
        fit = blowup.bubble_fit(profile, phi_at_center=0.0, mass0=1.0)
        assert not fit.success
        assert fit.as_dict()['success'] is False
