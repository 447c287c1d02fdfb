"""Baseline black-box attacks reformulated for image translation oracles.

All three attacks share the same contract: they never issue a query without
going through the budget ledger, they halt on success or budget exhaustion,
and they report the perturbation as accumulated (unclipped) so norms reflect
the additive bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .candidates import CandidateSource
from .errors import ConfigError
from .oracle import OracleHandle, QueryLedger, budgeted_query
from .tensor import AttackObjective, ImageTensor, RngStream


@dataclass
class NesConfig:
    n: int = 50
    sigma: float = 0.01
    step: float = 0.01
    per_step_clip: Optional[float] = None

    def __post_init__(self):
        if self.n <= 0 or self.n % 2 != 0:
            raise ConfigError("n must be an even positive integer (antithetic pairs)")
        if self.sigma <= 0 or self.step <= 0:
            raise ConfigError("sigma and step must be positive")
        if self.per_step_clip is not None and self.per_step_clip <= 0:
            raise ConfigError("per_step_clip must be positive when set")


@dataclass
class SimbaConfig:
    step: float = 0.4
    basis: str = "pixel"
    rng: Optional[RngStream] = None

    def __post_init__(self):
        if self.step <= 0:
            raise ConfigError("step must be positive")
        if self.basis != "pixel":
            raise ConfigError(f"unknown basis {self.basis!r}")


@dataclass
class BanditsConfig:
    prior_lr: float = 0.1
    image_lr: float = 0.01
    exploration: float = 0.1
    tile: int = 4
    fd_eta: float = 0.1
    prior_update: str = "plain"  # or "eg" (exponentiated gradient)
    image_step: str = "sign"  # or "normalized" (L2 flavor)

    def __post_init__(self):
        if min(self.prior_lr, self.image_lr) < 0:
            raise ConfigError("learning rates must be nonnegative")
        if self.exploration <= 0 or self.fd_eta <= 0:
            raise ConfigError("exploration and fd_eta must be positive")
        if self.tile < 1:
            raise ConfigError("tile must be a positive integer")
        if self.prior_update not in ("plain", "eg"):
            raise ConfigError(f"unknown prior_update {self.prior_update!r}")
        if self.image_step not in ("sign", "normalized"):
            raise ConfigError(f"unknown image_step {self.image_step!r}")


@dataclass
class AttackOutcome:
    eta: ImageTensor
    queries_used: int
    success: bool
    final_loss: Optional[float]
    loss_trace: list[tuple[int, float]] = field(default_factory=list)
    fallback_engaged: bool = False


def success_holds(loss: float, objective: AttackObjective) -> bool:
    """Halting test: threshold reached in the objective direction (inclusive)."""
    if objective.direction == "minimize":
        return loss <= objective.threshold
    return loss >= objective.threshold


def nes_gradient_estimate(
    oracle: OracleHandle,
    ledger: QueryLedger,
    objective: AttackObjective,
    x: ImageTensor,
    cfg: NesConfig,
    rng: RngStream | np.random.Generator,
) -> Optional[ImageTensor]:
    """Antithetic Monte-Carlo estimate of the loss gradient at x.

    Draws n/2 standard Gaussians and mirrors them, probing the oracle once per
    direction: (1 / (sigma * n)) * sum_i delta_i * L(G(x + sigma * delta_i), r).
    Consumes exactly n queries, or none at all when fewer than n remain.
    """
    if ledger.remaining < cfg.n:
        return None
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    half = cfg.n // 2
    deltas = [gen.standard_normal(x.dims) for _ in range(half)]
    ordered = deltas + [-d for d in reversed(deltas)]
    grad = np.zeros(x.dims, dtype=np.float64)
    base = x.data.astype(np.float64)
    for delta in ordered:
        out = budgeted_query(ledger, oracle, x.with_data(base + cfg.sigma * delta))
        assert out is not None  # guarded by the remaining-budget check
        grad += delta * objective.loss(out)
    grad /= cfg.sigma * cfg.n
    return ImageTensor(grad, x.value_range)


def it_nes_attack(
    oracle: OracleHandle,
    ledger: QueryLedger,
    objective: AttackObjective,
    x: ImageTensor,
    cfg: NesConfig,
    rng: RngStream | np.random.Generator,
) -> AttackOutcome:
    """Iterated estimate-then-step descent (ascent for maximize objectives).

    Each iteration costs one trace/halting query plus n estimation queries.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    eta = np.zeros(x.dims, dtype=np.float64)
    trace: list[tuple[int, float]] = []
    loss: Optional[float] = None
    success = False
    while True:
        out = budgeted_query(ledger, oracle, x.with_data(x.data + eta))
        if out is None:
            break
        loss = objective.loss(out)
        trace.append((ledger.count, loss))
        if success_holds(loss, objective):
            success = True
            break
        grad = nes_gradient_estimate(
            oracle, ledger, objective, x.with_data(x.data + eta), cfg, gen
        )
        if grad is None:
            break
        step = cfg.step * grad.data.astype(np.float64)
        eta += step if objective.direction == "maximize" else -step
        if cfg.per_step_clip is not None:
            eta = np.clip(eta, -cfg.per_step_clip, cfg.per_step_clip)
    return AttackOutcome(
        eta=ImageTensor(eta, x.value_range),
        queries_used=ledger.count,
        success=success,
        final_loss=loss,
        loss_trace=trace,
    )


def it_simba_attack(
    oracle: OracleHandle,
    ledger: QueryLedger,
    objective: AttackObjective,
    x: ImageTensor,
    cfg: SimbaConfig,
    candidates: CandidateSource,
) -> AttackOutcome:
    """Local search over an orthonormal candidate supply.

    For each candidate q, probe +step then -step around the committed point;
    the first probe that improves the committed loss is kept. Candidates are
    consumed without replacement; exhausting them ends the attack.
    """
    try:
        empty = len(candidates) == 0  # type: ignore[arg-type]
    except TypeError:
        empty = False
    if empty:
        raise ConfigError("candidate source is empty")
    eta = np.zeros(x.dims, dtype=np.float64)
    out = budgeted_query(ledger, oracle, x)
    if out is None:
        return AttackOutcome(
            eta=ImageTensor(eta, x.value_range),
            queries_used=ledger.count,
            success=False,
            final_loss=None,
        )
    loss = objective.loss(out)
    trace = [(ledger.count, loss)]
    exhausted = False
    while not success_holds(loss, objective) and not exhausted:
        cand = candidates.next()
        if cand is None:
            break
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
                trace.append((ledger.count, loss))
                break
    return AttackOutcome(
        eta=ImageTensor(eta, x.value_range),
        queries_used=ledger.count,
        success=success_holds(loss, objective),
        final_loss=loss,
        loss_trace=trace,
    )


def _upsample(prior: np.ndarray, tile: int) -> np.ndarray:
    return prior.repeat(tile, axis=1).repeat(tile, axis=2)


def it_bandits_attack(
    oracle: OracleHandle,
    ledger: QueryLedger,
    objective: AttackObjective,
    x: ImageTensor,
    cfg: BanditsConfig,
    rng: RngStream | np.random.Generator,
) -> AttackOutcome:
    """Gradient estimation with an n=2 antithetic probe and a tiled prior.

    The prior lives at (C, H/tile, W/tile) and carries the running gradient
    estimate across iterations; each iteration spends 2 probe queries plus 1
    trace/halting query.
    """
    c, h, w = x.dims
    if h % cfg.tile or w % cfg.tile:
        raise ConfigError(f"tile {cfg.tile} must divide height {h} and width {w}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    prior = np.zeros((c, h // cfg.tile, w // cfg.tile), dtype=np.float64)
    eta = np.zeros(x.dims, dtype=np.float64)
    trace: list[tuple[int, float]] = []
    loss: Optional[float] = None
    success = False
    while True:
        out = budgeted_query(ledger, oracle, x.with_data(x.data + eta))
        if out is None:
            break
        loss = objective.loss(out)
        trace.append((ledger.count, loss))
        if success_holds(loss, objective):
            success = True
            break
        u = gen.standard_normal(prior.shape)
        u /= np.linalg.norm(u)
        probe_losses = []
        for sgn in (1.0, -1.0):
            direction = _upsample(prior + sgn * cfg.exploration * u, cfg.tile)
            nrm = np.linalg.norm(direction)
            if nrm > 0:
                direction = direction / nrm
            out = budgeted_query(
                ledger, oracle, x.with_data(x.data + eta + cfg.fd_eta * direction)
            )
            if out is None:
                probe_losses = []
                break
            probe_losses.append(objective.loss(out))
        if not probe_losses:
            break
        deriv = (probe_losses[0] - probe_losses[1]) / (2 * cfg.exploration * cfg.fd_eta)
        if cfg.prior_update == "plain":
            prior = prior + cfg.prior_lr * deriv * u
        else:
            p = np.clip((prior + 1.0) / 2.0, 1e-6, 1.0 - 1e-6)
            factor = np.exp(cfg.prior_lr * deriv * u)
            p = (p * factor) / (p * factor + (1.0 - p) / factor)
            prior = 2.0 * p - 1.0
        g_img = _upsample(prior, cfg.tile)
        if cfg.image_step == "sign":
            step_dir = np.sign(g_img)
        else:
            nrm = np.linalg.norm(g_img)
            step_dir = g_img / nrm if nrm > 0 else g_img
        step = cfg.image_lr * step_dir
        eta += step if objective.direction == "maximize" else -step
    return AttackOutcome(
        eta=ImageTensor(eta, x.value_range),
        queries_used=ledger.count,
        success=success,
        final_loss=loss,
        loss_trace=trace,
    )
