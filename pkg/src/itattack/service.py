"""FastAPI app exposing any oracle over the BTF1 wire protocol.

GET  /v1/info       -> JSON {input_dims, output_dims, value_range, name}
POST /v1/translate  -> BTF1 frame in, BTF1 frame out (application/octet-stream)
"""

from __future__ import annotations

from fastapi import FastAPI, Request, Response
from pydantic import BaseModel

from . import btf
from .oracle import OracleHandle

OCTET_STREAM = "application/octet-stream"


class OracleInfo(BaseModel):
    input_dims: list[int]
    output_dims: list[int]
    value_range: list[float]
    name: str


def create_oracle_app(oracle: OracleHandle, name: str = "synthetic") -> FastAPI:
    app = FastAPI(title=f"oracle:{name}")
    info = OracleInfo(
        input_dims=list(oracle.input_dims),
        output_dims=list(oracle.output_dims),
        value_range=list(oracle.value_range),
        name=name,
    )

    @app.get("/v1/info", response_model=OracleInfo)
    def get_info():
        return info

    @app.post("/v1/translate")
    async def translate(request: Request):
        body = await request.body()
        try:
            x = btf.decode(body, oracle.value_range)
        except btf.MalformedFrame as exc:
            return Response(content=str(exc), status_code=400)
        if x.dims != oracle.input_dims:
            return Response(
                content=f"dims {x.dims} != expected {oracle.input_dims}",
                status_code=422,
            )
        y = oracle.query(x)
        return Response(content=btf.encode(y), media_type=OCTET_STREAM)

    return app
