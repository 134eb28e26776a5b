"""Visualization quality measures: luminance entropy and RMSE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SchemaError
from .homography import Homography
from .image import RgbImage, luminance


@dataclass(frozen=True)
class MetricReport:
    entropy_bits: float
    pixel_count: int
    rmse: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.entropy_bits <= 8.0):
            raise SchemaError(f"entropy out of range: {self.entropy_bits}")
        if self.rmse is not None and not (0.0 <= self.rmse <= 255.0):
            raise SchemaError(f"rmse out of range: {self.rmse}")

    def to_dict(self) -> dict:
        d = {"entropyBits": self.entropy_bits, "pixelCount": self.pixel_count}
        if self.rmse is not None:
            d["rmse"] = self.rmse
        return d


def entropy(image: RgbImage) -> float:
    """Shannon entropy (bits) of the 256-level luminance histogram.

    Position-blind by construction; 0 for a constant image, 8 when all
    256 levels are equally frequent.
    """
    levels = np.clip(np.rint(luminance(image)), 0, 255).astype(np.intp)
    counts = np.bincount(levels.reshape(-1), minlength=256)
    prob = counts[counts > 0] / levels.size
    return float(-(prob * np.log2(prob)).sum())


def rmse(a: RgbImage, b: RgbImage) -> float:
    """Root mean square channel difference in 8-bit levels."""
    if a.values.shape != b.values.shape:
        raise SchemaError(
            f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    diff = a.values.astype(np.float64) - b.values.astype(np.float64)
    return float(np.sqrt(np.mean(diff * diff)))


def evaluate(rendered: RgbImage, reference: RgbImage | None = None) -> MetricReport:
    """Bundle entropy (always) and RMSE (when a reference is given)."""
    return MetricReport(
        entropy_bits=entropy(rendered),
        pixel_count=rendered.width * rendered.height,
        rmse=None if reference is None else rmse(rendered, reference),
    )


def rmse_warped(rendered: RgbImage, reference: RgbImage, h: Homography) -> tuple[float, int]:
    """RMSE against a reference registered by h.

    h maps rendered-image pixel coordinates into the reference; the
    reference is sampled bilinearly at the projected positions. Pixels
    projecting outside the reference are excluded. Returns the RMSE and
    the number of pixels compared.
    """
    height, width = rendered.values.shape[:2]
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    projected = h.apply(np.column_stack([xs.reshape(-1), ys.reshape(-1)]))
    px = projected[:, 0]
    py = projected[:, 1]
    rh, rw = reference.values.shape[:2]
    valid = (px >= 0) & (px <= rw - 1) & (py >= 0) & (py <= rh - 1)
    if not valid.any():
        raise SchemaError("no rendered pixel projects inside the reference")
    px, py = px[valid], py[valid]
    x0 = np.clip(np.floor(px).astype(np.intp), 0, rw - 2) if rw > 1 else np.zeros(px.size, np.intp)
    y0 = np.clip(np.floor(py).astype(np.intp), 0, rh - 2) if rh > 1 else np.zeros(py.size, np.intp)
    fx = (px - x0)[:, None]
    fy = (py - y0)[:, None]
    ref = reference.values.astype(np.float64)
    sampled = (
        ref[y0, x0] * (1 - fx) * (1 - fy)
        + ref[y0, np.minimum(x0 + 1, rw - 1)] * fx * (1 - fy)
        + ref[np.minimum(y0 + 1, rh - 1), x0] * (1 - fx) * fy
        + ref[np.minimum(y0 + 1, rh - 1), np.minimum(x0 + 1, rw - 1)] * fx * fy
    )
    out = rendered.values.reshape(-1, 3).astype(np.float64)[valid]
    diff = out - sampled
    return float(np.sqrt(np.mean(diff * diff))), int(valid.sum())
