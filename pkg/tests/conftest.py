"""Shared synthetic data builders for the test suite."""

import numpy as np
import pytest
from scipy import ndimage

from spectramls import ControlPointSet, RgbImage, SpectralCube


def blob_texture(seed: int, size: int = 96, smooth: float = 2.5) -> np.ndarray:
    """Smooth random field in [0, 1]; strong, stable extrema for the
    keypoint tests."""
    rng = np.random.default_rng(seed)
    tex = ndimage.gaussian_filter(rng.random((size, size)), smooth)
    lo, hi = tex.min(), tex.max()
    return (tex - lo) / (hi - lo)


def texture_rgb(seed: int, size: int = 96) -> RgbImage:
    """Colorful image from three independent blob fields."""
    channels = [blob_texture(seed + k, size) * 255.0 for k in range(3)]
    return RgbImage(np.clip(np.rint(np.stack(channels, axis=2)), 0, 255).astype(np.uint8))


def texture_cube(seed: int, size: int = 96, bands: int = 4) -> SpectralCube:
    """Cube whose bands are affine rescalings of one blob texture, so
    every band shares the spatial structure (keypoints land together)."""
    tex = blob_texture(seed, size)
    stack = np.stack([tex * (40.0 + 20.0 * b) + 5.0 for b in range(bands)], axis=2)
    return SpectralCube(values=stack)


def lift_rgb_to_cube(rgb: RgbImage) -> SpectralCube:
    """Fixed nonlinear spectral lift of an RGB image into 8 bands.

    Every band is a product of channel terms, so no band is an affine
    function of (r, g, b); signatures are never the zero vector because
    r and 1-r cannot vanish together.
    """
    x = rgb.as_float()
    r, g, b = x[:, :, 0], x[:, :, 1], x[:, :, 2]
    bands = np.stack(
        [
            r * r,
            g * g,
            b * b,
            r * g,
            g * b,
            r * b,
            (1.0 - r) * (1.0 - r),
            (1.0 - g) * (1.0 - g),
        ],
        axis=2,
    )
    return SpectralCube(values=bands * 100.0)


def sampled_pairs(cube: SpectralCube, rgb: RgbImage, fraction: float, seed: int) -> ControlPointSet:
    """Seeded distinct-pixel sample pairing cube signatures with the
    true colors at the same positions."""
    total = cube.width * cube.height
    count = int(np.ceil(fraction * total))
    rng = np.random.default_rng(seed)
    flat = np.sort(rng.choice(total, size=count, replace=False))
    ys, xs = np.divmod(flat, cube.width)
    u = cube.values[ys, xs]
    keep = (u != 0).any(axis=1)
    return ControlPointSet(
        u=u[keep],
        v=rgb.values[ys[keep], xs[keep]].astype(np.float64),
        hsi_pixels=tuple((int(x), int(y)) for x, y in zip(xs[keep], ys[keep])),
        rgb_pixels=tuple((int(x), int(y)) for x, y in zip(xs[keep], ys[keep])),
    )


def random_pointset(seed: int, n: int, p: int, sensor: str = "") -> ControlPointSet:
    """Well-spread random pairs with non-degenerate signatures."""
    rng = np.random.default_rng(seed)
    return ControlPointSet(
        u=rng.uniform(1.0, 100.0, (n, p)),
        v=rng.integers(0, 256, (n, 3)).astype(np.float64),
        sensor=sensor,
    )


@pytest.fixture
def small_cube() -> SpectralCube:
    rng = np.random.default_rng(11)
    return SpectralCube(values=rng.uniform(1.0, 90.0, (6, 7, 3)))
