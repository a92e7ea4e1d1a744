import numpy as np
import pytest

from samg.backends import SyntheticBackend
from samg.backends.base import FeatureGrid


@pytest.fixture
def small_backend():
    """Synthetic backend with small dims: fast, same code paths."""
    return SyntheticBackend(seg_dim=8, ctx_dim=16, seed=0)


@pytest.fixture
def default_backend():
    return SyntheticBackend()


def random_grid(rng, dim=8, side_pixels=84):
    """A random FeatureGrid fixture (values have no color structure)."""
    values = rng.normal(size=(64, 64, dim))
    return FeatureGrid(values, (side_pixels, side_pixels))


def tiny_scene(color=(40, 40, 230), background=(120, 120, 110), size=84, radius=9,
               center=None):
    """One uniformly colored disk on a plain background, with its exact mask."""
    center = center or (size // 2, size // 2)
    img = np.zeros((size, size, 3), dtype=np.uint8)
    img[:] = background
    rr, cc = np.mgrid[0:size, 0:size]
    mask = (rr - center[0]) ** 2 + (cc - center[1]) ** 2 <= radius**2
    img[mask] = color
    return img, mask


def interior_points(mask, count=3):
    from scipy import ndimage

    eroded = ndimage.binary_erosion(mask, iterations=2)
    pool = eroded if eroded.sum() >= count else mask
    rows, cols = np.nonzero(pool)
    n = rows.size
    return [(int(rows[i]), int(cols[i])) for i in (n // 6, n // 2, 5 * n // 6)]
