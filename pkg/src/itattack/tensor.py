"""Image tensors, losses, norms, clipping and deterministic randomness.

Pixel data is stored as float32 (CHW, row-major); losses and norms
accumulate in float64 so mean reductions do not drift on large tensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

Dims = tuple[int, int, int]


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream_id) pair naming one reproducible random sequence.

    The same pair yields the same draws on every run and platform; distinct
    stream ids derived from one seed are statistically independent.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, stream_id: int) -> "RngStream":
        """A sibling stream under the same seed."""
        return RngStream(self.seed, stream_id)


@dataclass(frozen=True)
class ImageTensor:
    """A dense (C, H, W) float32 image with a declared valid pixel interval."""

    data: np.ndarray
    value_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ShapeError(f"expected (C, H, W) data, got shape {arr.shape}")
        if any(d <= 0 for d in arr.shape):
            raise ShapeError(f"dims must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor contains non-finite values")
        lo, hi = self.value_range
        if not lo < hi:
            raise ValueError(f"invalid value_range ({lo}, {hi})")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "value_range", (float(lo), float(hi)))

    @property
    def dims(self) -> Dims:
        return self.data.shape  # type: ignore[return-value]

    @property
    def size(self) -> int:
        return self.data.size

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def with_data(self, data: np.ndarray) -> "ImageTensor":
        """Same dims contract and value range, new pixel values."""
        arr = np.asarray(data, dtype=np.float32).reshape(self.data.shape)
        return ImageTensor(arr, self.value_range)


def zeros(dims: Dims, value_range: tuple[float, float] = (-1.0, 1.0)) -> ImageTensor:
    return ImageTensor(np.zeros(dims, dtype=np.float32), value_range)


def regression_loss(a: ImageTensor, b: ImageTensor, kind: str = "mse") -> float:
    """Image-level regression loss between two same-shape tensors."""
    if a.dims != b.dims:
        raise ShapeError(f"loss operands differ in dims: {a.dims} vs {b.dims}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    if kind == "mse":
        return float(np.mean(diff * diff))
    if kind == "mae":
        return float(np.mean(np.abs(diff)))
    raise ValueError(f"unknown loss kind {kind!r}")


def perturbation_norm(eta: ImageTensor, p: str = "l2") -> float:
    """Norm of a perturbation for reporting: 'l2' or 'linf'."""
    flat = eta.data.astype(np.float64).reshape(-1)
    if p == "l2":
        return float(np.linalg.norm(flat))
    if p == "linf":
        return float(np.max(np.abs(flat))) if flat.size else 0.0
    raise ValueError(f"unknown report norm {p!r}")


def clip_to_range(x: ImageTensor) -> ImageTensor:
    """Clamp every pixel into the tensor's declared value range. Idempotent."""
    lo, hi = x.value_range
    return x.with_data(np.clip(x.data, lo, hi))


def sample_gaussian(
    dims: Dims,
    rng: RngStream | np.random.Generator,
    value_range: tuple[float, float] = (-1.0, 1.0),
) -> ImageTensor:
    """I.i.d. standard-normal tensor; deterministic under a fixed RngStream."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return ImageTensor(gen.standard_normal(dims).astype(np.float32), value_range)


@dataclass(frozen=True)
class AttackObjective:
    """What an attack optimizes: a loss against a target, a direction and a
    success threshold, plus the norm used when reporting the perturbation."""

    target: ImageTensor
    loss_kind: str = "mse"
    direction: str = "minimize"
    threshold: float = 0.0
    report_norm: str = "l2"

    def __post_init__(self):
        if self.loss_kind not in ("mse", "mae"):
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")
        if self.direction not in ("minimize", "maximize"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")
        if self.report_norm not in ("l2", "linf"):
            raise ValueError(f"unknown report norm {self.report_norm!r}")

    def loss(self, output: ImageTensor) -> float:
        return regression_loss(output, self.target, self.loss_kind)

    def improves(self, new: float, old: float) -> bool:
        """Strict improvement of `new` over `old` in the objective direction."""
        return new < old if self.direction == "minimize" else new > old
