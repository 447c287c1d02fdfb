"""Command-line entry point for the model server."""

from __future__ import annotations

import sys

import click

from .models import ModelError
from .server import ServerConfig, serve


@click.command(name="model-server")
@click.option("--checkpoint", default=None, type=click.Path(exists=True),
              help="TorchScript checkpoint; omit to serve the echo model")
@click.option("--conditioning", default=None,
              help="comma-separated conditioning vector, fixed for this instance")
@click.option("--dims", default="3,32,32", help="input dims as C,H,W")
@click.option("--range", "vrange", default="-1,1", help="pixel range as lo,hi")
@click.option("--port", default=8900, type=int)
@click.option("--host", default="127.0.0.1")
def main(checkpoint, conditioning, dims, vrange, port, host):
    """Serve a translation model behind the BTF1 oracle wire protocol."""
    try:
        dims_t = tuple(int(v) for v in dims.split(","))
        lo, hi = (float(v) for v in vrange.split(","))
        cond = None
        if conditioning is not None:
            cond = [float(v) for v in conditioning.split(",")]
        cfg = ServerConfig(
            checkpoint=checkpoint, conditioning=cond, dims=dims_t,
            value_range=(lo, hi), host=host, port=port,
        )
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    try:
        serve(cfg)
    except ModelError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
