"""Campaign orchestration: datasets, objectives, per-image attacks, reports.

A campaign attacks every image with a fresh ledger, aggregates summary
metrics (mean queries, mean perturbation norm, success rate, histogram and
cumulative-success curve) and persists everything as JSON/CSV so plots can be
made with any external tool.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import btf
from .attacks import (
    AttackOutcome,
    BanditsConfig,
    NesConfig,
    SimbaConfig,
    it_bandits_attack,
    it_nes_attack,
    it_simba_attack,
)
from .candidates import PixelBasis
from .errors import ConfigError
from .lup import ExploitConfig, exploit_phase, leak_phase, load_bundle, save_bundle
from .oracle import (
    OracleHandle,
    QueryLedger,
    SyntheticOracleSpec,
    budgeted_query,
    make_synthetic_oracle,
    remote_oracle,
)
from .oracle import _smooth_field
from .tensor import AttackObjective, Dims, ImageTensor, RngStream

ATTACK_NAMES = ("it-nes", "it-bandits", "it-simba", "lup-exploit")
HISTOGRAM_BIN_WIDTH = 25


@dataclass
class CampaignConfig:
    oracle_kind: str  # "synthetic" | "remote"
    attack: str
    objective: str  # "identity" | "max_distortion" | "explicit_target"
    tau: float
    budget: int
    seed: int
    output_dir: str
    synthetic_spec: Optional[SyntheticOracleSpec] = None
    endpoint: Optional[str] = None
    dataset_dir: Optional[str] = None
    dataset_count: int = 0
    dataset_dims: Dims = (3, 32, 32)
    dataset_amplitude: float = 0.6
    loss_kind: str = "mse"
    report_norm: str = "l2"
    target_file: Optional[str] = None
    attack_params: dict = field(default_factory=dict)
    components_dir: Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if self.oracle_kind not in ("synthetic", "remote"):
            raise ConfigError(f"unknown oracle kind {self.oracle_kind!r}")
        if self.oracle_kind == "synthetic" and self.synthetic_spec is None:
            raise ConfigError("synthetic oracle requires a spec")
        if self.oracle_kind == "remote" and not self.endpoint:
            raise ConfigError("remote oracle requires an endpoint")
        if self.attack not in ATTACK_NAMES and self.attack != "lup-leak":
            raise ConfigError(f"unknown attack {self.attack!r}")
        if self.dataset_dir is None and self.dataset_count < 1:
            raise ConfigError("dataset count must be >= 1")
        if self.objective not in ("identity", "max_distortion", "explicit_target"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.objective == "explicit_target" and not self.target_file:
            raise ConfigError("explicit_target objective requires target_file")


def load_config(path: str) -> CampaignConfig:
    """Parse a TOML or JSON campaign config file."""
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib

        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    else:
        with open(path) as fh:
            raw = json.load(fh)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> CampaignConfig:
    try:
        oracle = raw["oracle"]
        spec = None
        endpoint = None
        if oracle["kind"] == "synthetic":
            spec = SyntheticOracleSpec(
                kind=oracle["synthetic_kind"],
                dims=tuple(oracle.get("dims", [3, 32, 32])),
                seed=int(oracle.get("seed", 0)),
                params=dict(oracle.get("params", {})),
                value_range=tuple(oracle.get("value_range", [-1.0, 1.0])),
            )
        else:
            endpoint = oracle.get("endpoint")
        dataset = raw.get("dataset", {})
        objective = raw.get("objective", {})
        return CampaignConfig(
            oracle_kind=oracle["kind"],
            attack=raw["attack"],
            objective=objective.get("kind", "identity"),
            tau=float(objective["tau"]),
            budget=int(raw["budget"]),
            seed=int(raw.get("seed", 0)),
            output_dir=raw.get("output_dir", "campaign-out"),
            synthetic_spec=spec,
            endpoint=endpoint,
            dataset_dir=dataset.get("dir"),
            dataset_count=int(dataset.get("count", 0)),
            dataset_dims=tuple(dataset.get("dims", [3, 32, 32])),
            dataset_amplitude=float(dataset.get("amplitude", 0.6)),
            loss_kind=objective.get("loss", "mse"),
            report_norm=objective.get("report_norm", "l2"),
            target_file=objective.get("target_file"),
            attack_params=dict(raw.get("attack_params", {})),
            components_dir=raw.get("components_dir"),
            workers=int(raw.get("workers", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad campaign config: {exc}") from exc


def make_synthetic_dataset(
    dims: Dims,
    count: int,
    seed: int,
    amplitude: float = 0.6,
    value_range: tuple[float, float] = (-1.0, 1.0),
) -> list[ImageTensor]:
    """Deterministic smooth random images (low-frequency cosine mixtures)."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    base = RngStream(seed)
    images = []
    for i in range(count):
        field_ = _smooth_field(dims, base.child(i).generator())
        images.append(ImageTensor(amplitude * field_, value_range))
    return images


def build_objective(
    kind: str,
    x: ImageTensor,
    oracle: OracleHandle,
    ledger: QueryLedger,
    tau: float,
    loss_kind: str = "mse",
    report_norm: str = "l2",
    target_file: Optional[str] = None,
) -> AttackObjective:
    """Objective for one image: identity, max_distortion, or explicit target.

    max_distortion spends exactly one budgeted query to obtain G(x).
    """
    if kind == "identity":
        return AttackObjective(
            target=x, loss_kind=loss_kind, direction="minimize",
            threshold=tau, report_norm=report_norm,
        )
    if kind == "max_distortion":
        baseline = budgeted_query(ledger, oracle, x)
        if baseline is None:
            raise ConfigError("budget exhausted while building max_distortion target")
        return AttackObjective(
            target=baseline, loss_kind=loss_kind, direction="maximize",
            threshold=tau, report_norm=report_norm,
        )
    if kind == "explicit_target":
        if not target_file or not os.path.exists(target_file):
            raise ConfigError(f"missing target file {target_file!r}")
        target = btf.read_file(target_file, x.value_range)
        return AttackObjective(
            target=target, loss_kind=loss_kind, direction="minimize",
            threshold=tau, report_norm=report_norm,
        )
    raise ConfigError(f"unknown objective kind {kind!r}")


@dataclass
class CampaignReport:
    per_image: list[dict]
    mean_queries: float
    mean_queries_successful: Optional[float]
    mean_norm: Optional[float]
    success_rate: float
    histogram: list[dict]
    cumulative_success: list[dict]
    total_queries: int

    def to_dict(self) -> dict:
        return {
            "per_image": self.per_image,
            "mean_queries": self.mean_queries,
            "mean_queries_successful": self.mean_queries_successful,
            "mean_norm": self.mean_norm,
            "success_rate": self.success_rate,
            "histogram": self.histogram,
            "cumulative_success": self.cumulative_success,
            "total_queries": self.total_queries,
        }


def outcome_record(index: int, outcome: AttackOutcome, report_norm: str) -> dict:
    from .tensor import perturbation_norm

    return {
        "index": index,
        "queries_used": outcome.queries_used,
        "success": outcome.success,
        "final_loss": outcome.final_loss,
        "norm": perturbation_norm(outcome.eta, report_norm),
        "fallback_engaged": outcome.fallback_engaged,
        "loss_trace": [[int(q), float(l)] for q, l in outcome.loss_trace],
    }


def summarize(records: Sequence[dict], bin_width: int = HISTOGRAM_BIN_WIDTH) -> CampaignReport:
    """Aggregate per-image records into the campaign summary report.

    Failed attacks contribute their full ledger count to mean_queries; the
    successful-only mean is reported separately. Histogram and cumulative
    curve cover successful attacks only.
    """
    if not records:
        raise ConfigError("no outcomes to summarize")
    queries = [r["queries_used"] for r in records]
    successes = [r for r in records if r["success"]]
    mean_queries = float(np.mean(queries))
    success_rate = 100.0 * len(successes) / len(records)
    mean_success = float(np.mean([r["queries_used"] for r in successes])) if successes else None
    mean_norm = float(np.mean([r["norm"] for r in successes])) if successes else None
    histogram = []
    if successes:
        qs = sorted(r["queries_used"] for r in successes)
        top_bin = qs[-1] // bin_width
        counts = {}
        for q in qs:
            counts[q // bin_width] = counts.get(q // bin_width, 0) + 1
        histogram = [
            {"lo": b * bin_width, "hi": (b + 1) * bin_width, "count": counts.get(b, 0)}
            for b in range(top_bin + 1)
        ]
    cumulative = []
    if successes:
        qs = sorted(r["queries_used"] for r in successes)
        n = len(records)
        seen = 0
        for q in sorted(set(qs)):
            seen += qs.count(q)
            cumulative.append({"queries": q, "fraction": seen / n})
    return CampaignReport(
        per_image=list(records),
        mean_queries=mean_queries,
        mean_queries_successful=mean_success,
        mean_norm=mean_norm,
        success_rate=success_rate,
        histogram=histogram,
        cumulative_success=cumulative,
        total_queries=int(np.sum(queries)),
    )


def _resolve_oracle(cfg: CampaignConfig) -> OracleHandle:
    if cfg.oracle_kind == "synthetic":
        return make_synthetic_oracle(cfg.synthetic_spec)
    return remote_oracle(cfg.endpoint)


def _resolve_dataset(cfg: CampaignConfig, oracle: OracleHandle) -> list[ImageTensor]:
    if cfg.dataset_dir:
        files = sorted(
            f for f in os.listdir(cfg.dataset_dir) if f.endswith(".btf")
        )
        if not files:
            raise ConfigError(f"no .btf tensors in {cfg.dataset_dir}")
        return [
            btf.read_file(os.path.join(cfg.dataset_dir, f), oracle.value_range)
            for f in files
        ]
    return make_synthetic_dataset(
        oracle.input_dims if cfg.oracle_kind == "synthetic" else tuple(cfg.dataset_dims),
        cfg.dataset_count,
        cfg.seed,
        cfg.dataset_amplitude,
        oracle.value_range,
    )


def _attack_one(
    cfg: CampaignConfig,
    oracle: OracleHandle,
    x: ImageTensor,
    index: int,
    components: Optional[list[ImageTensor]],
) -> tuple[AttackOutcome, int]:
    base = RngStream(cfg.seed)
    ledger = QueryLedger(budget=cfg.budget)
    objective = build_objective(
        cfg.objective, x, oracle, ledger, cfg.tau, cfg.loss_kind,
        cfg.report_norm, cfg.target_file,
    )
    params = cfg.attack_params
    if cfg.attack == "it-nes":
        nes_cfg = NesConfig(
            n=int(params.get("n", 50)),
            sigma=float(params.get("sigma", 0.01)),
            step=float(params.get("step", 0.01)),
            per_step_clip=params.get("per_step_clip"),
        )
        outcome = it_nes_attack(oracle, ledger, objective, x, nes_cfg, base.child(10_000 + index))
    elif cfg.attack == "it-bandits":
        bandits_cfg = BanditsConfig(
            prior_lr=float(params.get("prior_lr", 0.1)),
            image_lr=float(params.get("image_lr", 0.01)),
            exploration=float(params.get("exploration", 0.1)),
            tile=int(params.get("tile", 4)),
            fd_eta=float(params.get("fd_eta", 0.1)),
            prior_update=params.get("prior_update", "plain"),
            image_step=params.get("image_step", "sign"),
        )
        outcome = it_bandits_attack(oracle, ledger, objective, x, bandits_cfg, base.child(10_000 + index))
    elif cfg.attack == "it-simba":
        simba_cfg = SimbaConfig(step=float(params.get("step", 0.4)))
        basis = PixelBasis(x.dims, base.child(10_000 + index), x.value_range)
        outcome = it_simba_attack(oracle, ledger, objective, x, simba_cfg, basis)
    elif cfg.attack == "lup-exploit":
        if components is None:
            raise ConfigError("lup-exploit requires a component bundle")
        exploit_cfg = ExploitConfig(
            step=float(params.get("step", 0.4)),
            n_sat=int(params.get("n_sat", 20)),
        )
        basis = PixelBasis(x.dims, base.child(10_000 + index), x.value_range)
        outcome = exploit_phase(oracle, ledger, objective, x, components, basis, exploit_cfg)
    else:
        raise ConfigError(f"attack {cfg.attack!r} is not a per-image campaign attack")
    return outcome, ledger.count


def run_campaign(cfg: CampaignConfig) -> CampaignReport:
    """Attack every dataset image with a fresh ledger; persist all artifacts.

    Fully deterministic for a synthetic oracle under a fixed seed. Transport
    failures abort only the affected image, recorded with an error status.
    """
    oracle = _resolve_oracle(cfg)
    dataset = _resolve_dataset(cfg, oracle)
    components = None
    if cfg.attack == "lup-exploit":
        if not cfg.components_dir:
            raise ConfigError("lup-exploit requires components_dir")
        loaded, _ = load_bundle(cfg.components_dir)
        components = [ImageTensor(c.data, oracle.value_range) for c in loaded]

    records: list[Optional[dict]] = [None] * len(dataset)
    errors: list[dict] = []

    def work(i: int):
        from .errors import TransportError

        try:
            outcome, _ = _attack_one(cfg, oracle, dataset[i], i, components)
            records[i] = outcome_record(i, outcome, cfg.report_norm)
        except TransportError as exc:
            errors.append({"index": i, "error": str(exc)})
            records[i] = None

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(work, range(len(dataset))))
    else:
        for i in range(len(dataset)):
            work(i)

    ok_records = [r for r in records if r is not None]
    if not ok_records:
        raise ConfigError("every attack failed with a transport error")
    report = summarize(ok_records)
    write_report(cfg.output_dir, report, errors)
    return report


def run_leak_campaign(cfg: CampaignConfig, bundle_dir: str) -> dict:
    """Leak perturbations over the dataset and persist the component bundle."""
    oracle = _resolve_oracle(cfg)
    dataset = _resolve_dataset(cfg, oracle)
    params = cfg.attack_params
    simba_cfg = SimbaConfig(step=float(params.get("step", 0.4)))

    def factory(x: ImageTensor, ledger: QueryLedger) -> AttackObjective:
        return build_objective(
            cfg.objective, x, oracle, ledger, cfg.tau, cfg.loss_kind,
            cfg.report_norm, cfg.target_file,
        )

    report = leak_phase(
        oracle, dataset, factory, simba_cfg, cfg.budget, RngStream(cfg.seed)
    )
    save_bundle(
        bundle_dir,
        report.components,
        report.explained_variance,
        report.total_leak_queries,
        cfg.seed,
    )
    return {
        "components": len(report.components),
        "total_leak_queries": report.total_leak_queries,
        "successes": sum(o.success for o in report.per_image_outcomes),
        "images": len(dataset),
    }


def write_report(output_dir: str, report: CampaignReport, errors: Sequence[dict] = ()) -> None:
    """report.json, per-image records, histogram.csv and cumulative.csv."""
    os.makedirs(output_dir, exist_ok=True)
    per_image_dir = os.path.join(output_dir, "per_image")
    os.makedirs(per_image_dir, exist_ok=True)
    for rec in report.per_image:
        path = os.path.join(per_image_dir, f"img_{rec['index']:04d}.json")
        with open(path, "w") as fh:
            json.dump(rec, fh, sort_keys=True)
    summary = report.to_dict()
    summary["errors"] = list(errors)
    with open(os.path.join(output_dir, "report.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    with open(os.path.join(output_dir, "histogram.csv"), "w") as fh:
        fh.write("bin_lo,bin_hi,count\n")
        for row in report.histogram:
            fh.write(f"{row['lo']},{row['hi']},{row['count']}\n")
    with open(os.path.join(output_dir, "cumulative.csv"), "w") as fh:
        fh.write("queries,fraction\n")
        for row in report.cumulative_success:
            fh.write(f"{row['queries']},{row['fraction']}\n")


def recompute_report(output_dir: str) -> CampaignReport:
    """Rebuild the summary from the per-image records on disk."""
    per_image_dir = os.path.join(output_dir, "per_image")
    if not os.path.isdir(per_image_dir):
        raise ConfigError(f"no per_image records under {output_dir}")
    records = []
    for name in sorted(os.listdir(per_image_dir)):
        if name.endswith(".json"):
            with open(os.path.join(per_image_dir, name)) as fh:
                records.append(json.load(fh))
    report = summarize(records)
    write_report(output_dir, report)
    return report
