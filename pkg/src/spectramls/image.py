"""8-bit RGB raster type and lossless PNG persistence."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import InputIOError, SchemaError


@dataclass(frozen=True)
class RgbImage:
    """Immutable height x width x 3 uint8 raster.

    alpha_dropped is set when a 4-channel source lost its alpha channel
    on read, so callers can warn about it.
    """

    values: np.ndarray
    alpha_dropped: bool = field(default=False)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 3 or values.shape[2] != 3:
            raise SchemaError(f"rgb values must be (height, width, 3), got shape {values.shape}")
        if values.dtype != np.uint8:
            arr = np.asarray(values, dtype=np.float64)
            if not np.isfinite(arr).all() or (arr < 0).any() or (arr > 255).any():
                raise SchemaError("rgb values must lie in [0, 255]")
            if not np.equal(np.mod(arr, 1), 0).all():
                raise SchemaError("rgb values must be integers")
            values = arr.astype(np.uint8)
        values = np.ascontiguousarray(values)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def color_at(self, x: int, y: int) -> np.ndarray:
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise IndexError(f"pixel ({x}, {y}) outside {self.width}x{self.height} image")
        return self.values[y, x]

    def as_float(self) -> np.ndarray:
        """Values rescaled to [0, 1] float64."""
        return self.values.astype(np.float64) / 255.0


def luminance(image: RgbImage) -> np.ndarray:
    """Luma proxy in [0, 255] float64, shared by matching and metrics."""
    r, g, b = (image.values[:, :, c].astype(np.float64) for c in range(3))
    return 0.299 * r + 0.587 * g + 0.114 * b


def _decode(source, label: str) -> RgbImage:
    try:
        with Image.open(source) as im:
            im.load()
            if im.mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
            mode = im.mode
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise InputIOError(f"cannot decode image {label}: {exc}") from None
    if arr.dtype != np.uint8:
        raise InputIOError(f"unsupported bit depth in {label}: mode {mode}")
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
        return RgbImage(values=arr.astype(np.uint8))
    if arr.ndim == 3 and arr.shape[2] == 3:
        return RgbImage(values=arr.astype(np.uint8))
    if arr.ndim == 3 and arr.shape[2] == 4:
        return RgbImage(values=arr[:, :, :3].astype(np.uint8), alpha_dropped=True)
    raise InputIOError(f"unsupported channel layout in {label}: mode {mode}, shape {arr.shape}")


def read_rgb(path: str | os.PathLike) -> RgbImage:
    """Read an image file as RGB.

    Grayscale inputs are expanded to 3 equal channels; 4-channel inputs
    drop alpha and flag it.
    """
    path = Path(path)
    if not path.is_file():
        raise InputIOError(f"input not found: {path}")
    return _decode(path, str(path))


def decode_rgb(data: bytes) -> RgbImage:
    """Same decode rules as read_rgb, for in-memory payloads."""
    import io

    return _decode(io.BytesIO(data), "<uploaded image>")


def write_rgb(image: RgbImage, path: str | os.PathLike) -> None:
    """Write as PNG. Round trip through read_rgb is bit-exact."""
    Image.fromarray(image.values, mode="RGB").save(Path(path), format="PNG")


def encode_png(image: RgbImage) -> bytes:
    """PNG bytes without touching the filesystem (service payloads)."""
    import io

    buf = io.BytesIO()
    Image.fromarray(image.values, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
