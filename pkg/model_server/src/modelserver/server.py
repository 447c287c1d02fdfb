"""FastAPI app implementing the oracle wire protocol around a model.

GET  /v1/info       -> {input_dims, output_dims, value_range, name}
POST /v1/translate  -> BTF1 in, BTF1 out; 400 malformed frame, 422 dims
                       mismatch, 500 inference failure (JSON error body).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import btf
from .models import EchoModel, ModelError, TorchScriptModel, TranslationModel

OCTET_STREAM = "application/octet-stream"


@dataclass
class ServerConfig:
    checkpoint: Optional[str] = None  # None serves the echo model
    conditioning: Optional[Sequence[float]] = None
    dims: tuple[int, int, int] = (3, 32, 32)
    value_range: tuple[float, float] = (-1.0, 1.0)
    host: str = "127.0.0.1"
    port: int = 8900
    name: str = field(default="")

    def __post_init__(self):
        lo, hi = self.value_range
        if not lo < hi:
            raise ValueError(f"invalid value_range ({lo}, {hi})")
        if any(d < 1 for d in self.dims) or len(self.dims) != 3:
            raise ValueError(f"invalid dims {self.dims}")
        if not self.name:
            self.name = "echo" if self.checkpoint is None else "torchscript"


def build_model(cfg: ServerConfig) -> TranslationModel:
    if cfg.checkpoint is None:
        return EchoModel(cfg.dims)
    return TorchScriptModel(cfg.checkpoint, cfg.dims, cfg.conditioning)


def create_app(cfg: ServerConfig, model: Optional[TranslationModel] = None) -> FastAPI:
    model = model or build_model(cfg)
    app = FastAPI(title=f"model-server:{cfg.name}")
    lo, hi = cfg.value_range
    # inference is serialized; the contract is determinism, not throughput
    lock = threading.Lock()
    info = {
        "input_dims": list(model.input_dims),
        "output_dims": list(model.output_dims),
        "value_range": [lo, hi],
        "name": cfg.name,
    }

    @app.get("/v1/info")
    def get_info():
        return info

    @app.post("/v1/translate")
    async def translate(request: Request):
        body = await request.body()
        try:
            image = btf.decode(body)
        except btf.FrameError as exc:
            return Response(content=str(exc), status_code=400)
        if image.ndim != 3 or tuple(image.shape) != model.input_dims:
            return Response(
                content=f"dims {tuple(image.shape)} != expected {model.input_dims}",
                status_code=422,
            )
        clipped = np.clip(image, lo, hi)
        try:
            with lock:
                out = model.translate(clipped)
        except ModelError as exc:
            return JSONResponse({"error": str(exc)}, status_code=500)
        return Response(content=btf.encode(out), media_type=OCTET_STREAM)

    return app


def serve(cfg: ServerConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port)
