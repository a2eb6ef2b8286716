"""HTTP service for interactive click-to-refocus.

Scenes live in a read-mostly in-memory store backed by a directory of
``<scene_id>/image.png`` (+ optional ``depth.png``). Uploads append new
scenes; renders, depth visualizations, and focus-set masks are computed on
demand from the stored data, so identical requests return identical bytes.
"""

from __future__ import annotations

import io
import json
import logging
import os
import threading
import time
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field

from .raster import DecodeError, DepthMap, RasterImage
from .render import refocus_classical
from .simulate import DEFAULT_FOCUS_EPS, focus_set

log = logging.getLogger("refocus.service")

META_FILE = "meta.json"


class RenderRequest(BaseModel):
    scene_id: str
    f_x: float = Field(ge=0.0, le=1.0)
    f_y: float = Field(ge=0.0, le=1.0)
    bokeh: float = Field(ge=0.0, le=30.0)
    overlay_focus_set: bool = False
    eps: float = Field(default=DEFAULT_FOCUS_EPS, gt=0.0)


class SceneRecord(BaseModel):
    scene_id: str
    width: int
    height: int
    has_depth: bool
    source: str  # uploaded | procedural


class _Scene:
    def __init__(self, record: SceneRecord, image: RasterImage, depth: DepthMap):
        self.record = record
        self.image = image
        self.depth = depth


class SceneStore:
    """Directory-backed scene map; uploads are the only mutation."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._scenes: dict[str, _Scene] = {}
        self._lock = threading.Lock()
        self._load_existing()

    def _load_existing(self) -> None:
        from .raster import read_depth, read_image

        for entry in sorted(self.root.iterdir()):
            image_path = entry / "image.png"
            if not entry.is_dir() or not image_path.exists():
                continue
            meta = {}
            meta_path = entry / META_FILE
            if meta_path.exists():
                meta = json.loads(meta_path.read_text())
            image = read_image(image_path)
            depth_path = entry / "depth.png"
            if depth_path.exists():
                depth = read_depth(depth_path)
                has_depth = True
            else:
                depth = DepthMap(np.full((image.height, image.width), 0.5))
                has_depth = False
            record = SceneRecord(
                scene_id=entry.name,
                width=image.width,
                height=image.height,
                has_depth=has_depth,
                source=meta.get("source", "procedural"),
            )
            self._scenes[entry.name] = _Scene(record, image, depth)

    def list(self) -> list[SceneRecord]:
        return [s.record for s in self._scenes.values()]

    def get(self, scene_id: str) -> _Scene | None:
        return self._scenes.get(scene_id)

    def add(self, image: RasterImage, depth: DepthMap | None, source: str) -> SceneRecord:
        from .raster import write_depth, write_image

        with self._lock:
            scene_id = f"upload_{uuid.uuid4().hex[:8]}"
            scene_dir = self.root / scene_id
            scene_dir.mkdir(parents=True)
            write_image(image, scene_dir / "image.png")
            has_depth = depth is not None
            if depth is None:
                depth = DepthMap(np.full((image.height, image.width), 0.5))
            else:
                write_depth(depth, scene_dir / "depth.png")
            (scene_dir / META_FILE).write_text(json.dumps({"source": source}))
            record = SceneRecord(
                scene_id=scene_id,
                width=image.width,
                height=image.height,
                has_depth=has_depth,
                source=source,
            )
            self._scenes[scene_id] = _Scene(record, image, depth)
            return record


def _png_bytes(array_u8: np.ndarray, mode: str) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array_u8, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def _image_png(img: RasterImage) -> bytes:
    quantized = np.round(img.data * 255.0).astype(np.uint8)
    if img.channels == 1:
        return _png_bytes(quantized[:, :, 0], "L")
    return _png_bytes(quantized, "RGB")


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(scene_dir, static_dir=None) -> FastAPI:
    app = FastAPI(title="refocus service")
    store = SceneStore(scene_dir)
    app.state.store = store

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request, exc):
        return _error(400, str(exc))

    @app.get("/api/scenes")
    def list_scenes() -> list[SceneRecord]:
        return store.list()

    @app.post("/api/scenes")
    def upload_scene(image: UploadFile = File(...), depth: UploadFile | None = File(None)):
        from .raster import read_depth, read_image

        try:
            raster = _read_upload(image, read_image)
        except DecodeError as exc:
            return _error(400, f"image: {exc}")
        depth_map = None
        if depth is not None:
            try:
                depth_map = _read_upload(depth, read_depth)
            except DecodeError as exc:
                return _error(400, f"depth: {exc}")
            if (depth_map.height, depth_map.width) != (raster.height, raster.width):
                return _error(400, "depth dimensions do not match the image")
        record = store.add(raster, depth_map, source="uploaded")
        if not record.has_depth:
            log.warning("scene %s uploaded without depth; using low-confidence flat 0.5 map",
                        record.scene_id)
        return record

    @app.post("/api/render")
    def render(req: RenderRequest):
        scene = store.get(req.scene_id)
        if scene is None:
            return _error(404, f"unknown scene {req.scene_id!r}")
        try:
            start = time.perf_counter()
            out = refocus_classical(scene.image, scene.depth, req.f_x, req.f_y, req.bokeh)
            if req.overlay_focus_set:
                out = _apply_focus_overlay(out, scene.depth, req.f_x, req.f_y, req.eps)
            millis = (time.perf_counter() - start) * 1000.0
            return Response(
                content=_image_png(out),
                media_type="image/png",
                headers={"X-Render-Millis": f"{millis:.2f}"},
            )
        except Exception as exc:  # pragma: no cover - defensive path
            log.exception("render failed for scene %s", req.scene_id)
            return _error(500, f"render failed: {exc}")

    @app.get("/api/depth/{scene_id}")
    def depth_visualization(scene_id: str):
        scene = store.get(scene_id)
        if scene is None:
            return _error(404, f"unknown scene {scene_id!r}")
        gray = np.round(scene.depth.data * 255.0).astype(np.uint8)
        return Response(content=_png_bytes(gray, "L"), media_type="image/png")

    @app.get("/api/focus_set")
    def focus_set_mask(scene_id: str, fx: float, fy: float, eps: float = DEFAULT_FOCUS_EPS):
        scene = store.get(scene_id)
        if scene is None:
            return _error(404, f"unknown scene {scene_id!r}")
        if not (0.0 <= fx <= 1.0 and 0.0 <= fy <= 1.0) or eps <= 0.0:
            return _error(400, "fx/fy must lie in [0, 1] and eps must be > 0")
        depth = scene.depth
        x = int(round(fx * (depth.width - 1)))
        y = int(round(fy * (depth.height - 1)))
        mask = focus_set(depth, float(depth.data[y, x]), eps)
        return Response(
            content=_png_bytes((mask.data * 255).astype(np.uint8), "L"),
            media_type="image/png",
        )

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="client")

    return app


def _read_upload(upload: UploadFile, reader):
    data = upload.file.read()
    try:
        return reader(io.BytesIO(data))
    except DecodeError:
        raise
    except Exception as exc:
        raise DecodeError(f"cannot decode upload {upload.filename}: {exc}") from exc


def _apply_focus_overlay(img: RasterImage, depth: DepthMap, fx: float, fy: float,
                         eps: float) -> RasterImage:
    x = int(round(fx * (depth.width - 1)))
    y = int(round(fy * (depth.height - 1)))
    mask = focus_set(depth, float(depth.data[y, x]), eps).data[:, :, None]
    tint = np.array([0.2, 0.9, 0.4])[None, None, :]
    data = img.data if img.channels == 3 else np.repeat(img.data, 3, axis=2)
    return RasterImage(np.clip(data * (1.0 - 0.35 * mask) + 0.35 * mask * tint, 0.0, 1.0))


def run_server(scene_dir, port: int = 8000, host: str = "127.0.0.1", static_dir=None) -> None:
    import uvicorn

    level = os.environ.get("REFOCUS_LOG_LEVEL", "info").lower()
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO))
    uvicorn.run(create_app(scene_dir, static_dir), host=host, port=port, log_level=level)
