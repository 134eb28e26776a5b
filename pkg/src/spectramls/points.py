"""Matched signature/color pairs and their on-disk format.

The file format is JSON with a fixed key order (version, bands, sensor,
pairs; each pair u, v, hsi?, rgb?) so that writing the same set twice
produces identical bytes. u components are reals and survive the round
trip exactly (shortest-repr float encoding); v components are stored as
integers.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputIOError, SchemaError, ZeroSignatureError

FORMAT_VERSION = 1

# (x, y) pixel provenance on each side, either side optional
PixelRef = tuple[int, int] | None


@dataclass(frozen=True)
class ControlPointSet:
    """n matched pairs (u: p-vector signature, v: 3-vector color)."""

    u: np.ndarray  # (n, p) float64
    v: np.ndarray  # (n, 3) float64, values in [0, 255]
    sensor: str = ""
    hsi_pixels: tuple[PixelRef, ...] | None = field(default=None)
    rgb_pixels: tuple[PixelRef, ...] | None = field(default=None)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape[0] < 1 or u.shape[1] < 1:
            raise SchemaError(f"u must be (n>=1, p>=1), got shape {u.shape}")
        if v.shape != (u.shape[0], 3):
            raise SchemaError(f"v must be ({u.shape[0]}, 3), got shape {v.shape}")
        if not np.isfinite(u).all():
            raise SchemaError("signatures must be finite")
        if not np.isfinite(v).all() or (v < 0).any() or (v > 255).any():
            raise SchemaError("colors must lie in [0, 255]")
        zero_rows = ~(u != 0).any(axis=1)
        if zero_rows.any():
            raise ZeroSignatureError(
                f"pair {int(np.argmax(zero_rows))} has an all-zero signature, "
                "which the angular distance cannot handle"
            )
        for name, arr in (("u", u), ("v", v)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        for name in ("hsi_pixels", "rgb_pixels"):
            refs = getattr(self, name)
            if refs is None:
                continue
            refs = tuple(None if r is None else (int(r[0]), int(r[1])) for r in refs)
            if len(refs) != u.shape[0]:
                raise SchemaError(f"{name} must have one entry per pair")
            object.__setattr__(self, name, refs)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def bands(self) -> int:
        return self.u.shape[1]

    def pair(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self.u[k], self.v[k]


def _pair_record(s: ControlPointSet, k: int) -> dict:
    u_row = [float(x) for x in s.u[k]]
    v_row = [int(x) for x in s.v[k]]
    record = {"u": u_row, "v": v_row}
    if s.hsi_pixels is not None and s.hsi_pixels[k] is not None:
        record["hsi"] = list(s.hsi_pixels[k])
    if s.rgb_pixels is not None and s.rgb_pixels[k] is not None:
        record["rgb"] = list(s.rgb_pixels[k])
    return record


def serialize_control_points(s: ControlPointSet) -> bytes:
    """The canonical file bytes for a set (shared with the HTTP export)."""
    if not np.equal(np.mod(s.v, 1), 0).all():
        raise SchemaError("colors must be integers to be written")
    doc = {
        "version": FORMAT_VERSION,
        "bands": s.bands,
        "sensor": s.sensor,
        "pairs": [_pair_record(s, k) for k in range(s.n)],
    }
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def write_control_points(s: ControlPointSet, path: str | os.PathLike) -> None:
    Path(path).write_bytes(serialize_control_points(s))


def _parse_xy(record: dict, key: str) -> PixelRef:
    if key not in record:
        return None
    xy = record[key]
    if not (isinstance(xy, list) and len(xy) == 2
            and all(isinstance(c, int) and not isinstance(c, bool) for c in xy)):
        raise SchemaError(f"pair {key!r} must be a 2-element integer list, got {xy!r}")
    return (xy[0], xy[1])


def parse_control_points(text: str | bytes) -> ControlPointSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"control-point file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("control-point file must be a JSON object")
    if doc.get("version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported control-point file version {doc.get('version')!r}")
    bands = doc.get("bands")
    if not isinstance(bands, int) or bands < 1:
        raise SchemaError(f"bands must be a positive integer, got {bands!r}")
    sensor = doc.get("sensor", "")
    if not isinstance(sensor, str):
        raise SchemaError("sensor must be a string")
    pairs = doc.get("pairs")
    if not isinstance(pairs, list) or not pairs:
        raise SchemaError("pairs must be a non-empty list")
    u_rows, v_rows, hsi_refs, rgb_refs = [], [], [], []
    for i, record in enumerate(pairs):
        if not isinstance(record, dict):
            raise SchemaError(f"pair {i} must be an object")
        def is_real(x):
            return isinstance(x, (int, float)) and not isinstance(x, bool)

        u_row = record.get("u")
        if not (isinstance(u_row, list) and all(is_real(x) for x in u_row)):
            raise SchemaError(f"pair {i} u must be a list of reals")
        if len(u_row) != bands:
            raise SchemaError(f"pair {i} u has length {len(u_row)}, declared bands is {bands}")
        v_row = record.get("v")
        if not (isinstance(v_row, list) and len(v_row) == 3
                and all(isinstance(x, int) and not isinstance(x, bool) for x in v_row)):
            raise SchemaError(f"pair {i} v must be a 3-element integer list")
        u_rows.append(u_row)
        v_rows.append(v_row)
        hsi_refs.append(_parse_xy(record, "hsi"))
        rgb_refs.append(_parse_xy(record, "rgb"))
    return ControlPointSet(
        u=np.array(u_rows, dtype=np.float64),
        v=np.array(v_rows, dtype=np.float64),
        sensor=sensor,
        hsi_pixels=tuple(hsi_refs) if any(r is not None for r in hsi_refs) else None,
        rgb_pixels=tuple(rgb_refs) if any(r is not None for r in rgb_refs) else None,
    )


def read_control_points(path: str | os.PathLike) -> ControlPointSet:
    path = Path(path)
    if not path.is_file():
        raise InputIOError(f"input not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputIOError(f"cannot read {path}: {exc}") from None
    return parse_control_points(text)
