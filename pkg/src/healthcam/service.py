"""HTTP inference service: upload an image, get pollutant predictions,
the AQI class, and (optionally) a symptom-aware suitability verdict.

The loaded checkpoint lives in an immutable snapshot shared read-only by
concurrent requests; a hot reload swaps the whole snapshot atomically so
no request ever observes a half-loaded model.
"""

from __future__ import annotations

import io
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError

from .dataset import (
    POLLUTANT_NAMES,
    POLLUTANT_UNITS,
    PollutantVector,
    classify_aqi,
    resize_nearest,
)
from .model import ModelGraph, checkpoint_hash, load_checkpoint
from .recommendation import (
    RecommendationError,
    RuleTable,
    SymptomProfile,
    SYMPTOM_VOCABULARY,
    load_rules,
    recommend,
)

log = logging.getLogger("healthcam.service")

MIN_IMAGE_SIDE = 32
MAX_UPLOAD_BYTES = 10 * 1024 * 1024


class ServiceError(Exception):
    """Carries a machine-readable code plus HTTP status for every 4xx/5xx."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message

    def payload(self) -> dict:
        return {"error": {"code": self.code, "message": self.message}}


@dataclass(frozen=True)
class ModelSnapshot:
    """Immutable bundle served to requests: model, scaler, rules, identity."""

    model: ModelGraph
    scaler: object
    rules: RuleTable
    checkpoint_sha256: str
    checkpoint_path: str


def build_snapshot(checkpoint_path, rules_path=None) -> ModelSnapshot:
    model, scaler = load_checkpoint(checkpoint_path)
    if scaler is None:
        raise ServiceError(500, "checkpoint_without_scaler",
                           f"checkpoint {checkpoint_path} embeds no label scaler")
    return ModelSnapshot(
        model=model,
        scaler=scaler,
        rules=load_rules(rules_path),
        checkpoint_sha256=checkpoint_hash(checkpoint_path),
        checkpoint_path=str(checkpoint_path),
    )


def decode_upload(data: bytes) -> np.ndarray:
    """Bytes -> (H, W, 3) uint8; enforces size ceiling and 32x32 floor."""
    if len(data) > MAX_UPLOAD_BYTES:
        raise ServiceError(
            413, "image_too_large",
            f"upload is {len(data)} bytes; limit is {MAX_UPLOAD_BYTES}",
        )
    try:
        with Image.open(io.BytesIO(data)) as img:
            if img.mode != "RGB":
                img = img.convert("RGB")
            pixels = np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ServiceError(400, "undecodable_image", f"cannot decode image: {exc}") from exc
    h, w = pixels.shape[:2]
    if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
        raise ServiceError(
            400, "image_too_small",
            f"image too small ({w}x{h}); minimum is {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}",
        )
    return pixels


def model_metadata(snapshot: ModelSnapshot) -> dict:
    cfg = snapshot.model.config
    return {
        "architecture": cfg.architecture,
        "checkpoint_sha256": snapshot.checkpoint_sha256,
        "input_size": [cfg.input_size, cfg.input_size, cfg.in_channels],
        "parameter_count": snapshot.model.parameter_count(),
        "config": cfg.to_dict(),
        "scaler": snapshot.scaler.to_json(),
        "symptom_vocabulary": list(SYMPTOM_VOCABULARY),
    }


def run_prediction(snapshot: ModelSnapshot, image_bytes: bytes) -> dict:
    """Decode, resize, scale by 1/255, one forward pass, exact unscale.

    Pollutant values are the exact inverse transform of the head outputs
    (no clamping), so a clear image may legitimately report values a hair
    below zero; the AQI class and recommendations use a zero floor.
    """
    pixels = decode_upload(image_bytes)
    size = snapshot.model.config.input_size
    if pixels.shape[:2] != (size, size):
        pixels = resize_nearest(pixels, size, size)
    x = pixels.astype(np.float32) / 255.0

    started = time.perf_counter()
    y1, y2, _ = snapshot.model.forward(x)
    latency_ms = (time.perf_counter() - started) * 1000.0

    raw = np.concatenate([y1[0], y2[0]])
    values = snapshot.scaler.unscale(raw)
    return {
        "pollutants": {name: float(v) for name, v in zip(POLLUTANT_NAMES, values)},
        "units": dict(POLLUTANT_UNITS),
        "aqi_class": classify_aqi(max(0.0, float(values[0]))).token,
        "model": {
            "architecture": snapshot.model.config.architecture,
            "checkpoint_sha256": snapshot.checkpoint_sha256,
            "input_size": [size, size, snapshot.model.config.in_channels],
        },
        "latency_ms": latency_ms,
    }


def run_recommendation(snapshot: ModelSnapshot, image_bytes: bytes, symptoms_text: str) -> dict:
    try:
        profile = SymptomProfile.parse(symptoms_text)
    except RecommendationError as exc:
        raise ServiceError(422, "unknown_symptom", str(exc)) from exc
    response = run_prediction(snapshot, image_bytes)
    floored = {
        name: max(0.0, value) for name, value in response["pollutants"].items()
    }
    rec = recommend(PollutantVector(**floored), profile, snapshot.rules)
    response["recommendation"] = rec.to_json()
    response["symptoms"] = sorted(profile.symptoms)
    return response


# ---------------------------------------------------------------------------
# FastAPI wiring


def create_app(checkpoint_path=None, rules_path=None, cors_origins=("*",)):
    app = FastAPI(title="healthcam", docs_url=None, redoc_url=None)
    app.state.snapshot = None
    if checkpoint_path is not None:
        app.state.snapshot = build_snapshot(checkpoint_path, rules_path)
    app.state.rules_path = rules_path

    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content=exc.payload())

    @app.exception_handler(RequestValidationError)
    async def validation_error_handler(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(p) for p in first.get("loc", ()))
        message = f"invalid request: {first.get('msg', 'validation failed')} ({where})"
        return JSONResponse(
            status_code=422,
            content={"error": {"code": "invalid_request", "message": message}},
        )

    @app.middleware("http")
    async def request_log(request: Request, call_next):
        started = time.perf_counter()
        response = await call_next(request)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        log.info("%s %s %d %.1fms", request.method, request.url.path,
                 response.status_code, elapsed_ms)
        return response

    def require_snapshot() -> ModelSnapshot:
        snapshot = app.state.snapshot
        if snapshot is None:
            raise ServiceError(503, "no_checkpoint", "no model checkpoint is loaded")
        return snapshot

    @app.get("/api/health")
    async def health():
        snapshot = app.state.snapshot
        if snapshot is None:
            return {"status": "degraded", "checkpoint": {"loaded": False}}
        return {
            "status": "ok",
            "checkpoint": {"loaded": True, "sha256": snapshot.checkpoint_sha256},
        }

    @app.get("/api/model")
    async def model_info():
        return model_metadata(require_snapshot())

    @app.post("/api/predict")
    async def predict(image: UploadFile = File(...)):
        snapshot = require_snapshot()
        data = await image.read()
        return run_prediction(snapshot, data)

    @app.post("/api/recommend")
    async def recommend_endpoint(
        image: UploadFile = File(...), symptoms: str = Form("none")
    ):
        snapshot = require_snapshot()
        data = await image.read()
        return run_recommendation(snapshot, data, symptoms)

    def reload_checkpoint(path) -> None:
        """Atomic snapshot swap; in-flight requests keep the old snapshot."""
        app.state.snapshot = build_snapshot(path, app.state.rules_path)

    app.state.reload_checkpoint = reload_checkpoint
    return app
