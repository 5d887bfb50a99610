"""factory-boy factories for surfaces, weights and fields used across the test-suite."""
import factory
import numpy as np

from apps.core.config import WEIGHT_BUILTINS, random_smooth
from apps.functionals.models import Weight
from apps.surface import services as geometry
from apps.surface.models import Grid, ScalarField, Surface

TWO_PI = 2.0 * np.pi


class GridFactory(factory.Factory):
    class Meta:
        model = Grid

    n = 32


class SurfaceFactory(factory.Factory):
    """Unit-area surface; phi is a random smooth polynomial when amplitude > 0, else flat."""

    class Meta:
        model = Surface

    class Params:
        n = 32
        amplitude = 0.0
        seed = 0

    grid = factory.LazyAttribute(lambda o: GridFactory(n=o.n))
    phi = factory.LazyAttribute(
        lambda o: random_smooth(o.grid, amplitude=o.amplitude, max_mode=3, seed=o.seed)
        if o.amplitude else ScalarField.constant(o.grid, 0.0)
    )

    @classmethod
    def _create(cls, model_class, grid, phi):
        return geometry.make_surface(grid, phi)


class WeightFactory(factory.Factory):
    class Meta:
        model = Weight

    class Params:
        grid = factory.LazyFunction(GridFactory)
        name = 'one_plus_half_cos'

    h = factory.LazyAttribute(lambda o: WEIGHT_BUILTINS[o.name](o.grid))

    @classmethod
    def _create(cls, model_class, h):
        return model_class.from_field(h)


class CosineFieldFactory(factory.Factory):
    """amplitude cos(2 pi x1) cos(2 pi x2)."""

    class Meta:
        model = ScalarField

    class Params:
        amplitude = 0.5

    grid = factory.SubFactory(GridFactory)
    values = factory.LazyAttribute(
        lambda o: o.amplitude * np.cos(TWO_PI * o.grid.coordinates[0]) * np.cos(TWO_PI * o.grid.coordinates[1])
    )


def flat_surface(n):
    return SurfaceFactory(n=n)


def curved_surface(n, seed=0, amplitude=0.5):
    return SurfaceFactory(n=n, seed=seed, amplitude=amplitude)


def builtin_weight(surface, name='one_plus_half_cos'):
    return WeightFactory(grid=surface.grid, name=name)


def unit_weight(surface):
    return builtin_weight(surface, 'const')


def cosine_field(surface, amplitude=0.5):
    return CosineFieldFactory(grid=surface.grid, amplitude=amplitude)


def smooth_field(surface, seed, amplitude=1.0, max_mode=3):
    return random_smooth(surface.grid, amplitude=amplitude, max_mode=max_mode, seed=seed)
