"""HTTP facade for the interactive tuner UI and remote classification.

POST /tune renders every channel plane and its LBP code map (codes mapped to
gray levels) and returns the exact histograms the feature extractor would
produce for the same parameters. The JSON body is a pure function of the
image bytes and parameters; per-request compute time travels in the
``X-Tune-Ms`` response header so identical requests stay byte-identical.

POST /classify accepts one sample in the CTL1 wire format and returns the
decision and bonafide probability. GET /health reports service state.
"""

from __future__ import annotations

import base64
import binascii
import io
import logging
import time

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError

from . import __version__, features, pixel
from .dataset import BONAFIDE
from .evalharness import classify_sample
from .lbp import LbpParams, apply_riu2
from .nn import load_checkpoint

logger = logging.getLogger("livetex.service")

MAX_SIDE = 4096
MAX_BODY_BYTES = 64 * 1024 * 1024


class ModelHolder:
    """Atomic slot for the loaded checkpoint; swap by replacing the tuple."""

    def __init__(self, checkpoint=None):
        self._loaded = None
        if checkpoint:
            self.load(checkpoint)

    def load(self, path):
        model, norm, spec, frames_per_sample, _ = load_checkpoint(path)
        self._loaded = (model, norm, spec, frames_per_sample)
        logger.info("loaded checkpoint %s", path)

    @property
    def loaded(self):
        return self._loaded


def _round9(value: float) -> float:
    # decimal with 9 significant digits; keeps responses compact and stable
    return float(format(value, ".9g"))


def _png_b64(plane: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(plane, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _decode_image(image_b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(image_b64, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(status_code=400, detail="image_b64 is not valid base64")
    if len(raw) > MAX_BODY_BYTES:
        raise HTTPException(status_code=413, detail="image payload too large")
    try:
        with Image.open(io.BytesIO(raw)) as img:
            if img.width > MAX_SIDE or img.height > MAX_SIDE:
                raise HTTPException(
                    status_code=413,
                    detail=f"image {img.width}x{img.height} exceeds {MAX_SIDE} per side",
                )
            frame = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except HTTPException:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError):
        raise HTTPException(status_code=422, detail="cannot decode image")
    if frame.ndim != 3 or frame.shape[0] < 1 or frame.shape[1] < 1:
        raise HTTPException(status_code=422, detail="cannot decode image")
    return frame


def _tune_params(payload: dict):
    def field(name, default, kind):
        value = payload.get(name, default)
        try:
            return kind(value)
        except (TypeError, ValueError):
            raise HTTPException(status_code=400, detail=f"bad parameter {name}={value!r}")

    points = field("points", 32, int)
    radius = field("radius", 8.0, float)
    color_buckets = field("color_buckets", 50, int)
    lbp_buckets = field("lbp_buckets", 34, int)
    spaces = payload.get("spaces", ["hsv", "ycbcr"])
    if not isinstance(spaces, (list, tuple)) or not spaces:
        raise HTTPException(status_code=400, detail="spaces must be a non-empty list")
    try:
        spec = features.HistogramSpec(
            color_buckets=color_buckets,
            lbp_buckets=lbp_buckets,
            lbp=LbpParams(points=points, radius=radius),
            spaces=tuple(spaces),
        )
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return spec


def create_app(checkpoint=None, static_dir=None) -> FastAPI:
    app = FastAPI(title="livetex", version=__version__)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["X-Tune-Ms"],
    )
    holder = ModelHolder(checkpoint)
    app.state.holder = holder

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "model_loaded": holder.loaded is not None,
            "version": __version__,
        }

    @app.post("/tune")
    async def tune(request: Request):
        started = time.perf_counter()
        try:
            payload = await request.json()
        except Exception:
            raise HTTPException(status_code=400, detail="body must be JSON")
        if not isinstance(payload, dict) or "image_b64" not in payload:
            raise HTTPException(status_code=400, detail="missing image_b64")
        spec = _tune_params(payload)
        frame = _decode_image(payload["image_b64"])

        margin = spec.lbp.margin
        if frame.shape[0] <= 2 * margin or frame.shape[1] <= 2 * margin:
            raise HTTPException(
                status_code=400,
                detail=f"image {frame.shape[1]}x{frame.shape[0]} too small for radius "
                f"{spec.lbp.radius}",
            )

        stack = pixel.build_color_stack(frame, spec.spaces)
        channels = []
        for label, plane in zip(stack.labels, stack.planes):
            code_map = apply_riu2(plane, spec.lbp)
            gray = (255 * code_map.codes.astype(np.int64)) // (spec.lbp.points + 1)
            channels.append(
                {
                    "label": label,
                    "image_b64": _png_b64(plane),
                    "lbp_image_b64": _png_b64(gray.astype(np.uint8)),
                    "color_histogram": [
                        _round9(v) for v in features.color_histogram(plane, spec.color_buckets)
                    ],
                    "lbp_histogram": [
                        _round9(v) for v in features.lbp_histogram(code_map, spec.lbp_buckets)
                    ],
                }
            )
        body = {
            "channels": channels,
            "feature_dim": spec.feature_dim,
            "width": int(frame.shape[1]),
            "height": int(frame.shape[0]),
        }
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        return JSONResponse(body, headers={"X-Tune-Ms": f"{elapsed_ms:.2f}"})

    @app.post("/classify")
    async def classify(request: Request):
        loaded = holder.loaded
        if loaded is None:
            raise HTTPException(status_code=409, detail="no checkpoint loaded")
        model, norm, _, _ = loaded
        data = await request.body()
        try:
            sample, _ = features.deserialize_sample(data)
        except features.WireFormatError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        try:
            decision, score = classify_sample(model, norm, sample)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"decision": decision, "score": score, "bonafide": decision == BONAFIDE}

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
