"""Leaking Universal Perturbations: leak, extract components, exploit.

The leaking phase harvests perturbations from local-search attacks on a small
auxiliary dataset; PCA over those perturbations yields transferable candidate
directions that make subsequent attacks far cheaper, falling back to the full
pixel basis when the loss saturates.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import btf
from .attacks import AttackOutcome, SimbaConfig, it_simba_attack, success_holds
from .candidates import CandidateSource, PixelBasis
from .errors import ConfigError, ShapeError
from .oracle import OracleHandle, QueryLedger, budgeted_query
from .tensor import AttackObjective, ImageTensor, RngStream


@dataclass
class ExploitConfig:
    step: float = 0.4
    n_sat: int = 20
    fallback_basis_rng: Optional[RngStream] = None

    def __post_init__(self):
        if self.step <= 0:
            raise ConfigError("step must be positive")
        if self.n_sat < 1:
            raise ConfigError("n_sat must be >= 1")


@dataclass
class LeakReport:
    perturbations: list[ImageTensor]
    per_image_outcomes: list[AttackOutcome]
    total_leak_queries: int
    components: list[ImageTensor]
    explained_variance: list[float] = field(default_factory=list)


def extract_components(
    perturbations: Sequence[ImageTensor],
) -> tuple[list[ImageTensor], list[float]]:
    """Principal directions of the mean-centered perturbation matrix.

    Components are unit-norm, ordered by nonincreasing explained variance,
    sign-normalized so the largest-magnitude coordinate is positive, and
    truncated below 1e-12 of the top variance. A single perturbation (or any
    identical set) centers to zero and yields no components.
    """
    if not perturbations:
        raise ConfigError("need at least one perturbation")
    dims = perturbations[0].dims
    for p in perturbations:
        if p.dims != dims:
            raise ShapeError(f"perturbation dims {p.dims} != {dims}")
    mat = np.stack([p.flat().astype(np.float64) for p in perturbations])
    mat -= mat.mean(axis=0, keepdims=True)
    if not np.any(mat):
        return [], []
    _, svals, vt = np.linalg.svd(mat, full_matrices=False)
    variances = svals**2 / max(len(perturbations) - 1, 1)
    keep = variances >= 1e-12 * variances[0]
    keep &= variances > 0.0
    components: list[ImageTensor] = []
    kept_vars: list[float] = []
    vrange = perturbations[0].value_range
    for var, vec in zip(variances[keep], vt[keep]):
        if vec[np.argmax(np.abs(vec))] < 0:
            vec = -vec
        components.append(ImageTensor(vec.reshape(dims), vrange))
        kept_vars.append(float(var))
    return components, kept_vars


def leak_phase(
    oracle: OracleHandle,
    leak_dataset: Sequence[ImageTensor],
    objective_factory: Callable[[ImageTensor, QueryLedger], AttackObjective],
    simba_cfg: SimbaConfig,
    budget_per_image: int,
    rng: Optional[RngStream] = None,
) -> LeakReport:
    """Attack every leak image with IT-SimBA (fresh ledger each) and run PCA
    over all resulting perturbations, successful or not.

    The factory receives the per-image ledger so any target-construction
    queries (max_distortion's G(x)) are charged to that image's budget.
    """
    if not leak_dataset:
        raise ConfigError("leak dataset is empty")
    base_rng = rng or simba_cfg.rng or RngStream(0)
    perturbations: list[ImageTensor] = []
    outcomes: list[AttackOutcome] = []
    total = 0
    for i, x in enumerate(leak_dataset):
        ledger = QueryLedger(budget=budget_per_image)
        basis = PixelBasis(x.dims, base_rng.child(i), x.value_range)
        outcome = it_simba_attack(
            oracle, ledger, objective_factory(x, ledger), x, simba_cfg, basis
        )
        perturbations.append(outcome.eta)
        outcomes.append(outcome)
        total += outcome.queries_used
    components, variances = extract_components(perturbations)
    return LeakReport(
        perturbations=perturbations,
        per_image_outcomes=outcomes,
        total_leak_queries=total,
        components=components,
        explained_variance=variances,
    )


def exploit_phase(
    oracle: OracleHandle,
    ledger: QueryLedger,
    objective: AttackObjective,
    x: ImageTensor,
    components: Sequence[ImageTensor],
    pixel_basis: CandidateSource,
    cfg: ExploitConfig,
) -> AttackOutcome:
    """Local search over leaked components first, pixel basis after saturation.

    Phase one consumes components in stored (explained-variance) order. The
    saturation counter i counts consecutive failed probes since the last
    commit; once i reaches n_sat - 1 (or the components run out) the attack
    switches permanently to the pixel basis.
    """
    eta = np.zeros(x.dims, dtype=np.float64)
    out = budgeted_query(ledger, oracle, x)
    if out is None:
        return AttackOutcome(
            eta=ImageTensor(eta, x.value_range),
            queries_used=ledger.count,
            success=False,
            final_loss=None,
            fallback_engaged=not components,
        )
    loss = objective.loss(out)
    trace = [(ledger.count, loss)]
    comp_pos = 0
    phase_two = False
    saturation = 0
    exhausted = False
    while not success_holds(loss, objective) and not exhausted:
        if not phase_two and comp_pos >= len(components):
            phase_two = True
        if phase_two:
            cand = pixel_basis.next()
            if cand is None:
                break
        else:
            cand = components[comp_pos]
            comp_pos += 1
        qvec = cand.data.astype(np.float64)
        for alpha in (cfg.step, -cfg.step):
            out = budgeted_query(
                ledger, oracle, x.with_data(x.data + eta + alpha * qvec)
            )
            if out is None:
                exhausted = True
                break
            probe = objective.loss(out)
            if objective.improves(probe, loss):
                eta += alpha * qvec
                loss = probe
                saturation = 0
                trace.append((ledger.count, loss))
                break
            saturation += 1
        if not phase_two and saturation > 0 and saturation >= cfg.n_sat - 1:
            phase_two = True
    return AttackOutcome(
        eta=ImageTensor(eta, x.value_range),
        queries_used=ledger.count,
        success=success_holds(loss, objective),
        final_loss=loss,
        loss_trace=trace,
        fallback_engaged=phase_two,
    )


def project_total_queries(
    leak_queries: int, mean_exploit_queries: float, dataset_size: int
) -> float:
    """Total-campaign query projection: leak cost plus amortized exploit cost."""
    if min(leak_queries, mean_exploit_queries, dataset_size) < 0:
        raise ValueError("inputs must be nonnegative")
    return leak_queries + dataset_size * mean_exploit_queries


def save_bundle(
    bundle_dir: str,
    components: Sequence[ImageTensor],
    explained_variance: Sequence[float],
    leak_queries: int,
    seed: int,
    source_attack: str = "it-simba",
) -> None:
    """Persist components as BTF1 files plus a JSON manifest."""
    if not components:
        raise ConfigError("cannot save an empty component bundle")
    os.makedirs(bundle_dir, exist_ok=True)
    dims = components[0].dims
    manifest = {
        "dims": list(dims),
        "count": len(components),
        "explained_variance": [float(v) for v in explained_variance],
        "leak_queries": int(leak_queries),
        "source_attack": source_attack,
        "seed": int(seed),
    }
    with open(os.path.join(bundle_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    for i, comp in enumerate(components):
        btf.write_file(os.path.join(bundle_dir, f"component_{i:04d}.btf"), comp)


def load_bundle(bundle_dir: str) -> tuple[list[ImageTensor], dict]:
    manifest_path = os.path.join(bundle_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"no manifest.json in {bundle_dir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    components = [
        btf.read_file(os.path.join(bundle_dir, f"component_{i:04d}.btf"))
        for i in range(manifest["count"])
    ]
    return components, manifest
