"""Command-line front end.

Exit codes: 0 on completion, 2 on config errors, 3 when a remote oracle's
info endpoint cannot be reached.
"""

from __future__ import annotations

import logging
import os
import sys

import click

from .campaign import load_config, recompute_report, run_campaign, run_leak_campaign
from .errors import ConfigError, TransportError
from .lup import project_total_queries
from .oracle import SyntheticOracleSpec, make_synthetic_oracle


def _setup_logging():
    level = os.environ.get("ATTACK_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


@click.group(name="attack")
def main():
    """Query-budgeted black-box attacks on image-translation oracles."""
    _setup_logging()


def _fail(exc: Exception, code: int):
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def run_cmd(config_path):
    """Run a per-image attack campaign from a TOML/JSON config."""
    try:
        cfg = load_config(config_path)
        report = run_campaign(cfg)
    except ConfigError as exc:
        _fail(exc, 2)
    except TransportError as exc:
        _fail(exc, 3)
    click.echo(
        f"campaign done: {len(report.per_image)} attacks, "
        f"mean queries {report.mean_queries:.1f}, "
        f"success rate {report.success_rate:.1f}%"
    )


@main.command("leak")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "bundle_dir", required=True, type=click.Path())
def leak_cmd(config_path, bundle_dir):
    """Run the leaking phase and write a component bundle."""
    try:
        cfg = load_config(config_path)
        info = run_leak_campaign(cfg, bundle_dir)
    except ConfigError as exc:
        _fail(exc, 2)
    except TransportError as exc:
        _fail(exc, 3)
    click.echo(
        f"leaked {info['components']} components from {info['images']} images "
        f"({info['successes']} successful) in {info['total_leak_queries']} queries"
    )


@main.command("exploit")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--components", "components_dir", required=True, type=click.Path(exists=True))
def exploit_cmd(config_path, components_dir):
    """Run the exploitation phase against a saved component bundle."""
    try:
        cfg = load_config(config_path)
        cfg.components_dir = components_dir
        cfg.attack = "lup-exploit"
        report = run_campaign(cfg)
    except ConfigError as exc:
        _fail(exc, 2)
    except TransportError as exc:
        _fail(exc, 3)
    click.echo(
        f"exploit done: mean queries {report.mean_queries:.1f}, "
        f"success rate {report.success_rate:.1f}%"
    )


@main.command("report")
@click.option("--in", "output_dir", required=True, type=click.Path(exists=True))
def report_cmd(output_dir):
    """Recompute summary artifacts from per-image records."""
    try:
        report = recompute_report(output_dir)
    except ConfigError as exc:
        _fail(exc, 2)
    click.echo(
        f"recomputed report: {len(report.per_image)} records, "
        f"success rate {report.success_rate:.1f}%"
    )


@main.command("project-queries")
@click.option("--leak", type=int, required=True, help="total leaking-phase queries")
@click.option("--mean", type=float, required=True, help="mean exploit queries per image")
@click.option("--count", type=int, required=True, help="dataset size")
def project_cmd(leak, mean, count):
    """Extrapolate the total query cost of a full campaign."""
    total = project_total_queries(leak, mean, count)
    click.echo(f"{total:.0f}" if total == int(total) else f"{total}")


@main.command("serve-oracle")
@click.option("--kind", default="subspace_sensitive",
              type=click.Choice(["affine", "blur_shift", "subspace_sensitive"]))
@click.option("--dims", default="3,32,32", help="C,H,W")
@click.option("--seed", default=0, type=int)
@click.option("--range", "vrange", default="-1,1", help="lo,hi pixel range")
@click.option("--port", default=8800, type=int)
@click.option("--host", default="127.0.0.1")
def serve_cmd(kind, dims, seed, vrange, port, host):
    """Host a synthetic oracle behind the wire protocol (for remote testing)."""
    import uvicorn

    from .service import create_oracle_app

    try:
        dims_t = tuple(int(v) for v in dims.split(","))
        lo, hi = (float(v) for v in vrange.split(","))
        spec = SyntheticOracleSpec(kind=kind, dims=dims_t, seed=seed, value_range=(lo, hi))
        oracle = make_synthetic_oracle(spec)
    except (ConfigError, ValueError) as exc:
        _fail(exc, 2)
    uvicorn.run(create_oracle_app(oracle, name=kind), host=host, port=port)


if __name__ == "__main__":
    main()
