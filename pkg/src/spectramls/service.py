"""Session-oriented HTTP service for interactive manual matching.

A session holds one cube and one reference image in memory, collects
clicked control-point pairs, and serves stride-downsampled previews.
Mutations bump a revision counter; preview responses always carry the
revision they were actually rendered from, so a client can tell fresh
from stale. Renders are single-flight per session with latest-wins
coalescing: whoever holds the render lock re-reads the newest point set
before solving.

Run with: uvicorn spectramls.service:app
"""

from __future__ import annotations

import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, UploadFile
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from .cube import SpectralCube, read_cube
from .errors import SpectraError
from .image import RgbImage, decode_rgb, encode_png
from .matching import cube_proxy
from .mls import MlsConfig, render
from .points import ControlPointSet, serialize_control_points

SESSION_TTL_SECONDS = 30 * 60
DEFAULT_PREVIEW_STRIDE = 4


class PairIn(BaseModel):
    hsi: tuple[int, int] = Field(description="cube pixel (x, y)")
    rgb: tuple[int, int] = Field(description="reference pixel (x, y)")


class PairOut(BaseModel):
    u: list[float]
    v: list[int]
    hsi: tuple[int, int]
    rgb: tuple[int, int]


class SessionCreated(BaseModel):
    sessionId: str
    revision: int
    cubeWidth: int
    cubeHeight: int
    cubeBands: int
    referenceWidth: int
    referenceHeight: int
    previewStride: int
    hsiProxyUrl: str
    referenceUrl: str


class RevisionOut(BaseModel):
    revision: int
    count: int


class PointsOut(BaseModel):
    revision: int
    count: int
    bands: int
    sensor: str
    pairs: list[PairOut]


@dataclass
class _Session:
    cube: SpectralCube
    reference: RgbImage
    sensor: str = ""
    preview_stride: int = DEFAULT_PREVIEW_STRIDE
    revision: int = 0
    pairs: list[tuple[np.ndarray, np.ndarray, tuple[int, int], tuple[int, int]]] = field(default_factory=list)
    last_access: float = field(default_factory=time.monotonic)
    state_lock: threading.Lock = field(default_factory=threading.Lock)
    render_lock: threading.Lock = field(default_factory=threading.Lock)
    # (revision, png bytes) of the newest completed preview
    cache: tuple[int, bytes] | None = None

    def snapshot_points(self) -> ControlPointSet | None:
        """Caller must hold state_lock. None while empty."""
        if not self.pairs:
            return None
        return ControlPointSet(
            u=np.stack([p[0] for p in self.pairs]),
            v=np.stack([p[1] for p in self.pairs]),
            sensor=self.sensor,
            hsi_pixels=tuple(p[2] for p in self.pairs),
            rgb_pixels=tuple(p[3] for p in self.pairs),
        )


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def _grayscale_png(values: np.ndarray, stride: int) -> bytes:
    arr = values[::stride, ::stride].astype(np.float64)
    lo, hi = arr.min(), arr.max()
    scaled = (arr - lo) / (hi - lo) * 255.0 if hi > lo else np.zeros_like(arr)
    gray = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    return encode_png(RgbImage(np.repeat(gray[:, :, None], 3, axis=2)))


def create_app() -> FastAPI:
    app = FastAPI(title="spectramls preview service")
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()

    def _purge_expired() -> None:
        deadline = time.monotonic() - SESSION_TTL_SECONDS
        with registry_lock:
            for sid in [sid for sid, s in sessions.items() if s.last_access < deadline]:
                del sessions[sid]

    def _get(session_id: str) -> _Session | None:
        _purge_expired()
        with registry_lock:
            session = sessions.get(session_id)
            if session is not None:
                session.last_access = time.monotonic()
            return session

    @app.post("/sessions", response_model=SessionCreated, status_code=201)
    def create_session(
        cube_header: UploadFile = File(...),
        cube_data: UploadFile = File(...),
        reference: UploadFile = File(...),
        preview_stride: int = Form(DEFAULT_PREVIEW_STRIDE),
        sensor: str = Form(""),
    ):
        if preview_stride < 1:
            return _error(400, "bad-stride", f"preview_stride must be >= 1, got {preview_stride}")
        try:
            with tempfile.TemporaryDirectory(prefix="spectramls-") as tmp:
                header_path = Path(tmp) / "upload.hdr"
                header_path.write_bytes(cube_header.file.read())
                (Path(tmp) / "upload").write_bytes(cube_data.file.read())
                cube = read_cube(header_path)
            ref = decode_rgb(reference.file.read())
        except SpectraError as exc:
            return _error(400, "bad-input", str(exc))
        session = _Session(cube=cube, reference=ref, sensor=sensor, preview_stride=preview_stride)
        session_id = uuid.uuid4().hex
        with registry_lock:
            sessions[session_id] = session
        return SessionCreated(
            sessionId=session_id,
            revision=0,
            cubeWidth=cube.width,
            cubeHeight=cube.height,
            cubeBands=cube.bands,
            referenceWidth=ref.width,
            referenceHeight=ref.height,
            previewStride=preview_stride,
            hsiProxyUrl=f"/sessions/{session_id}/hsi-proxy.png",
            referenceUrl=f"/sessions/{session_id}/reference.png",
        )

    @app.get("/sessions/{session_id}/hsi-proxy.png")
    def hsi_proxy(session_id: str, stride: int = 1):
        session = _get(session_id)
        if session is None:
            return _error(404, "no-such-session", f"unknown session {session_id}")
        if stride < 1:
            return _error(400, "bad-stride", f"stride must be >= 1, got {stride}")
        return Response(content=_grayscale_png(cube_proxy(session.cube), stride), media_type="image/png")

    @app.get("/sessions/{session_id}/reference.png")
    def reference_image(session_id: str, stride: int = 1):
        session = _get(session_id)
        if session is None:
            return _error(404, "no-such-session", f"unknown session {session_id}")
        if stride < 1:
            return _error(400, "bad-stride", f"stride must be >= 1, got {stride}")
        png = encode_png(RgbImage(session.reference.values[::stride, ::stride]))
        return Response(content=png, media_type="image/png")

    @app.post("/sessions/{session_id}/points", response_model=RevisionOut)
    def add_point(session_id: str, pair: PairIn):
        session = _get(session_id)
        if session is None:
            return _error(404, "no-such-session", f"unknown session {session_id}")
        hx, hy = pair.hsi
        rx, ry = pair.rgb
        cube, ref = session.cube, session.reference
        if not (0 <= hx < cube.width and 0 <= hy < cube.height):
            return _error(400, "out-of-bounds",
                          f"cube pixel ({hx}, {hy}) outside {cube.width}x{cube.height}")
        if not (0 <= rx < ref.width and 0 <= ry < ref.height):
            return _error(400, "out-of-bounds",
                          f"reference pixel ({rx}, {ry}) outside {ref.width}x{ref.height}")
        signature = cube.signature_at(hx, hy)
        if not (signature != 0).any():
            return _error(400, "zero-signature",
                          f"cube pixel ({hx}, {hy}) has an all-zero signature; the angular "
                          "distance cannot weight it, pick a different pixel")
        color = ref.color_at(rx, ry).astype(np.float64)
        with session.state_lock:
            session.pairs.append((signature.copy(), color, (hx, hy), (rx, ry)))
            session.revision += 1
            return RevisionOut(revision=session.revision, count=len(session.pairs))

    @app.delete("/sessions/{session_id}/points/{index}", response_model=RevisionOut)
    def remove_point(session_id: str, index: int):
        session = _get(session_id)
        if session is None:
            return _error(404, "no-such-session", f"unknown session {session_id}")
        with session.state_lock:
            if not (0 <= index < len(session.pairs)):
                return _error(400, "bad-index",
                              f"index {index} out of range for {len(session.pairs)} pairs")
            del session.pairs[index]
            session.revision += 1
            return RevisionOut(revision=session.revision, count=len(session.pairs))

    @app.get("/sessions/{session_id}/points", response_model=PointsOut)
    def list_points(session_id: str):
        session = _get(session_id)
        if session is None:
            return _error(404, "no-such-session", f"unknown session {session_id}")
        with session.state_lock:
            pairs = [
                PairOut(u=[float(x) for x in u], v=[int(x) for x in v], hsi=hsi, rgb=rgb)
                for u, v, hsi, rgb in session.pairs
            ]
            return PointsOut(
                revision=session.revision,
                count=len(pairs),
                bands=session.cube.bands,
                sensor=session.sensor,
                pairs=pairs,
            )

    @app.get("/sessions/{session_id}/preview.png")
    def preview(session_id: str, since: int | None = None):
        session = _get(session_id)
        if session is None:
            return _error(404, "no-such-session", f"unknown session {session_id}")
        with session.state_lock:
            revision = session.revision
            if since is not None and since == revision:
                return Response(status_code=304, headers={"X-Revision": str(revision)})
            if not session.pairs:
                return JSONResponse(
                    status_code=200,
                    content={"code": "no-points",
                             "message": "add at least one control point to render a preview",
                             "revision": revision},
                )
            if session.cache is not None and session.cache[0] == revision:
                return Response(content=session.cache[1], media_type="image/png",
                                headers={"X-Revision": str(revision)})
        with session.render_lock:
            # re-read the freshest state: edits made while waiting for the
            # lock are folded into this render instead of queueing another
            with session.state_lock:
                revision = session.revision
                if not session.pairs:
                    return JSONResponse(
                        status_code=200,
                        content={"code": "no-points",
                                 "message": "add at least one control point to render a preview",
                                 "revision": revision},
                    )
                if session.cache is not None and session.cache[0] == revision:
                    return Response(content=session.cache[1], media_type="image/png",
                                    headers={"X-Revision": str(revision)})
                cps = session.snapshot_points()
                stride = session.preview_stride
            try:
                image = render(session.cube, cps, MlsConfig(), stride=stride)
            except SpectraError as exc:
                return _error(500, "render-failed", str(exc))
            png = encode_png(image)
            with session.state_lock:
                if session.cache is None or session.cache[0] < revision:
                    session.cache = (revision, png)
            return Response(content=png, media_type="image/png",
                            headers={"X-Revision": str(revision)})

    @app.get("/sessions/{session_id}/export")
    def export_points(session_id: str):
        session = _get(session_id)
        if session is None:
            return _error(404, "no-such-session", f"unknown session {session_id}")
        with session.state_lock:
            cps = session.snapshot_points()
            revision = session.revision
        if cps is None:
            return _error(400, "no-points", "cannot export an empty control-point set")
        return Response(
            content=serialize_control_points(cps),
            media_type="application/json",
            headers={
                "X-Revision": str(revision),
                "Content-Disposition": "attachment; filename=control-points.json",
            },
        )

    return app


app = create_app()
