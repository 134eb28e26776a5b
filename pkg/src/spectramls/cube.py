"""Spectral cube type and header/raw-file ingestion.

A cube is stored internally as a (height, width, bands) float64 array in
(x, y, band) addressing, regardless of the interleave the raw file used.
The header is a plain text file of ``key = value`` lines next to a raw
data file (same basename, optionally with a .img/.raw/.dat extension).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputIOError, SchemaError

INTERLEAVES = ("bsq", "bil", "bip")

# data type codes: 1 = unsigned 8-bit, 2 = unsigned 16-bit, 4 = 32-bit float
DTYPE_CODES = {1: "u1", 2: "u2", 4: "f4"}

DATA_EXTENSIONS = ("", ".img", ".raw", ".dat", ".bsq", ".bil", ".bip")


@dataclass(frozen=True)
class CubeHeader:
    samples: int
    lines: int
    bands: int
    interleave: str
    data_type: int
    byte_order: int
    wavelengths: tuple[float, ...] | None = None

    def __post_init__(self):
        for name in ("samples", "lines", "bands"):
            if getattr(self, name) <= 0:
                raise SchemaError(f"header {name} must be positive, got {getattr(self, name)}")
        if self.interleave not in INTERLEAVES:
            raise SchemaError(f"unknown interleave {self.interleave!r}, expected one of {INTERLEAVES}")
        if self.data_type not in DTYPE_CODES:
            raise SchemaError(f"unknown data type {self.data_type}, expected one of {sorted(DTYPE_CODES)}")
        if self.byte_order not in (0, 1):
            raise SchemaError(f"byte order must be 0 (little) or 1 (big), got {self.byte_order}")

    @property
    def dtype(self) -> np.dtype:
        prefix = "<" if self.byte_order == 0 else ">"
        return np.dtype(prefix + DTYPE_CODES[self.data_type])

    @property
    def data_size(self) -> int:
        return self.samples * self.lines * self.bands * self.dtype.itemsize


@dataclass(frozen=True)
class SpectralCube:
    """Non-negative spectral raster with per-pixel p-band signatures."""

    values: np.ndarray  # (height, width, bands) float64
    wavelengths: np.ndarray | None = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or values.shape[2] < 1:
            raise SchemaError(f"cube values must be (height, width, bands>=1), got shape {values.shape}")
        if not np.isfinite(values).all():
            raise SchemaError("cube values must all be finite")
        if (values < 0).any():
            raise SchemaError("cube values must all be non-negative")
        values = np.ascontiguousarray(values)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if self.wavelengths is not None:
            wl = np.asarray(self.wavelengths, dtype=np.float64)
            if wl.shape != (values.shape[2],):
                raise SchemaError(f"wavelength count {wl.shape} does not match band count {values.shape[2]}")
            if not (np.diff(wl) > 0).all():
                raise SchemaError("wavelengths must be strictly increasing")
            wl.flags.writeable = False
            object.__setattr__(self, "wavelengths", wl)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    def signature_at(self, x: int, y: int) -> np.ndarray:
        """Spectral signature (p-vector) of the pixel at column x, row y."""
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise IndexError(f"pixel ({x}, {y}) outside {self.width}x{self.height} cube")
        return self.values[y, x]

    def band(self, index: int) -> np.ndarray:
        """One band as a (height, width) image."""
        return self.values[:, :, index]


def parse_cube_header(path: str | os.PathLike) -> CubeHeader:
    path = Path(path)
    if not path.is_file():
        raise InputIOError(f"input not found: {path}")
    fields: dict[str, str] = {}
    for line in path.read_text().splitlines():
        if "=" not in line:
            continue
        key, _, value = line.partition("=")
        fields[key.strip().lower()] = value.strip()

    def require(key):
        if key not in fields:
            raise SchemaError(f"header missing required key {key!r}: {path}")
        return fields[key]

    def as_int(key, raw):
        try:
            return int(raw)
        except ValueError:
            raise SchemaError(f"header key {key!r} must be an integer, got {raw!r}") from None

    wavelengths = None
    if "wavelength" in fields:
        try:
            wavelengths = tuple(float(tok) for tok in fields["wavelength"].strip("{}").split(",") if tok.strip())
        except ValueError:
            raise SchemaError(f"malformed wavelength list in {path}") from None
    return CubeHeader(
        samples=as_int("samples", require("samples")),
        lines=as_int("lines", require("lines")),
        bands=as_int("bands", require("bands")),
        interleave=require("interleave").lower(),
        data_type=as_int("data type", require("data type")),
        byte_order=as_int("byte order", require("byte order")),
        wavelengths=wavelengths,
    )


def _resolve_data_file(header_path: Path) -> Path:
    base = header_path.with_suffix("")
    for ext in DATA_EXTENSIONS:
        candidate = base.with_name(base.name + ext) if ext else base
        if candidate.is_file() and candidate != header_path:
            return candidate
    raise InputIOError(f"no raw data file found next to header {header_path} (tried {', '.join(e or base.name for e in DATA_EXTENSIONS)})")


def read_cube(header_path: str | os.PathLike) -> SpectralCube:
    """Read a cube from its header file and sibling raw file.

    The raw layout (bsq, bil or bip) is normalized away: the result is
    identical whichever interleave the file used.
    """
    header_path = Path(header_path)
    header = parse_cube_header(header_path)
    data_path = _resolve_data_file(header_path)
    actual = data_path.stat().st_size
    if actual < header.data_size:
        raise InputIOError(
            f"short data file {data_path}: {actual} bytes, header declares {header.data_size}"
        )
    if actual > header.data_size:
        raise InputIOError(
            f"data file {data_path} has {actual} bytes, header declares {header.data_size}"
        )
    raw = np.fromfile(data_path, dtype=header.dtype)
    s, l, b = header.samples, header.lines, header.bands
    if header.interleave == "bsq":
        arr = raw.reshape(b, l, s).transpose(1, 2, 0)
    elif header.interleave == "bil":
        arr = raw.reshape(l, b, s).transpose(0, 2, 1)
    else:  # bip
        arr = raw.reshape(l, s, b)
    wavelengths = header.wavelengths if header.wavelengths is not None else None
    return SpectralCube(values=arr.astype(np.float64), wavelengths=wavelengths)


def write_cube(cube: SpectralCube, header_path: str | os.PathLike, *, data_type: int = 4) -> None:
    """Write a cube as a band-sequential raw file plus header.

    Only bsq output is supported; values are cast to the requested data
    type without scaling, so the caller must keep them representable.
    """
    if data_type not in DTYPE_CODES:
        raise SchemaError(f"unknown data type {data_type}")
    header_path = Path(header_path)
    dtype = np.dtype("<" + DTYPE_CODES[data_type])
    if data_type in (1, 2):
        info = np.iinfo(dtype)
        if (cube.values > info.max).any() or not np.equal(np.mod(cube.values, 1), 0).all():
            raise SchemaError(f"cube values not representable as data type {data_type}")
    lines = [
        f"samples = {cube.width}",
        f"lines = {cube.height}",
        f"bands = {cube.bands}",
        "interleave = bsq",
        f"data type = {data_type}",
        "byte order = 0",
    ]
    if cube.wavelengths is not None:
        lines.append("wavelength = " + ", ".join(repr(float(w)) for w in cube.wavelengths))
    header_path.write_text("\n".join(lines) + "\n")
    data_path = header_path.with_suffix("")
    cube.values.transpose(2, 0, 1).astype(dtype).tofile(data_path)
