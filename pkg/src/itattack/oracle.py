"""Black-box generator interface, query accounting, and synthetic oracles.

Synthetic oracles are deterministic functions with known structure so that
attack behaviour can be checked against closed-form answers at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import btf
from .errors import CapabilityError, ConfigError, ShapeError, TransportError
from .tensor import AttackObjective, Dims, ImageTensor, RngStream


class OracleHandle:
    """Opaque deterministic map from input images to translated images."""

    input_dims: Dims
    output_dims: Dims
    value_range: tuple[float, float]

    def query(self, x: ImageTensor) -> ImageTensor:
        raise NotImplementedError


@dataclass
class QueryLedger:
    """Counts oracle evaluations against a hard per-image budget."""

    budget: int
    count: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ConfigError("budget must be a positive integer")

    @property
    def remaining(self) -> int:
        return self.budget - self.count


def budgeted_query(
    ledger: QueryLedger, oracle: OracleHandle, x: ImageTensor
) -> Optional[ImageTensor]:
    """One accounted oracle evaluation, or None once the budget is spent.

    The input is clamped into the oracle's declared range before evaluation,
    so attacks stay range-agnostic while the oracle only ever sees valid
    pixels. The budget check happens before evaluation: the count can never
    exceed the budget.
    """
    if x.dims != oracle.input_dims:
        raise ShapeError(f"query dims {x.dims} != oracle input dims {oracle.input_dims}")
    if ledger.count >= ledger.budget:
        return None
    ledger.count += 1
    lo, hi = oracle.value_range
    clipped = ImageTensor(np.clip(x.data, lo, hi), oracle.value_range)
    return oracle.query(clipped)


@dataclass(frozen=True)
class SyntheticOracleSpec:
    """Fully seeded description of a synthetic oracle; reconstructible anywhere.

    kind-specific params:
      affine             rank, scale, offset_scale, smooth_offset
      blur_shift         kernel_width, offset_scale
      subspace_sensitive subspace_dim (k), gain (g), support (coords per
                         direction; None means a dense orthonormal subspace)
    """

    kind: str
    dims: Dims
    seed: int
    params: dict = field(default_factory=dict)
    value_range: tuple[float, float] = (-1.0, 1.0)


def _smooth_field(dims: Dims, gen: np.random.Generator, modes: int = 6) -> np.ndarray:
    """Seeded low-frequency image, max |value| == 1."""
    c, h, w = dims
    ys = np.arange(h) / h
    xs = np.arange(w) / w
    out = np.zeros(dims)
    for _ in range(modes):
        fy, fx = gen.integers(1, 5, size=2)
        py, px = gen.uniform(0, 2 * np.pi, size=2)
        coef = gen.standard_normal(c)
        mode = np.cos(2 * np.pi * fy * ys + py)[:, None] * np.cos(2 * np.pi * fx * xs + px)[None, :]
        out += coef[:, None, None] * mode[None, :, :]
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


class AffineOracle(OracleHandle):
    """G(x) = clip(A x + b) with A = I + low-rank seeded perturbation."""

    def __init__(self, spec: SyntheticOracleSpec):
        p = spec.params
        rank = int(p.get("rank", 4))
        scale = float(p.get("scale", 0.5))
        offset_scale = float(p.get("offset_scale", 0.2))
        offset_kind = p.get("offset_kind", "smooth")
        offset_block = int(p.get("offset_block", 4))
        if rank < 0:
            raise ConfigError("affine rank must be nonnegative")
        if offset_kind not in ("smooth", "gaussian", "blocky"):
            raise ConfigError(f"unknown offset_kind {offset_kind!r}")
        self.input_dims = self.output_dims = spec.dims
        self.value_range = spec.value_range
        d = int(np.prod(spec.dims))
        gen = RngStream(spec.seed).generator()
        if rank > 0:
            u = gen.standard_normal((d, rank))
            v = gen.standard_normal((d, rank))
            u /= np.linalg.norm(u, axis=0)
            v /= np.linalg.norm(v, axis=0)
            self.u, self.v, self.scale = u, v, scale
        else:
            self.u = self.v = None
            self.scale = 0.0
        if offset_scale == 0.0:
            self.b = np.zeros(d)
        elif offset_kind == "smooth":
            self.b = offset_scale * _smooth_field(spec.dims, gen).reshape(-1)
        elif offset_kind == "gaussian":
            self.b = offset_scale * gen.standard_normal(d)
        else:  # blocky: coarse noise upsampled, strongly spatially correlated
            c, h, w = spec.dims
            if h % offset_block or w % offset_block:
                raise ConfigError("offset_block must divide height and width")
            coarse = gen.standard_normal((c, h // offset_block, w // offset_block))
            self.b = (
                offset_scale
                * coarse.repeat(offset_block, axis=1).repeat(offset_block, axis=2)
            ).reshape(-1)

    def apply(self, flat: np.ndarray) -> np.ndarray:
        """Pre-clip affine map in float64 (exact path for test oracles)."""
        y = flat.astype(np.float64).copy()
        if self.u is not None:
            y += self.scale * (self.u @ (self.v.T @ flat.astype(np.float64)))
        return y + self.b

    def jacobian_t_apply(self, flat_v: np.ndarray) -> np.ndarray:
        """A^T v without materializing A."""
        out = flat_v.astype(np.float64).copy()
        if self.u is not None:
            out += self.scale * (self.v @ (self.u.T @ flat_v.astype(np.float64)))
        return out

    def query(self, x: ImageTensor) -> ImageTensor:
        y = self.apply(x.flat())
        lo, hi = self.value_range
        return ImageTensor(np.clip(y, lo, hi).reshape(x.dims), self.value_range)


class BlurShiftOracle(OracleHandle):
    """Seeded separable blur plus a per-channel offset."""

    def __init__(self, spec: SyntheticOracleSpec):
        p = spec.params
        width = int(p.get("kernel_width", 3))
        offset_scale = float(p.get("offset_scale", 0.1))
        if width < 1 or width % 2 == 0:
            raise ConfigError("kernel_width must be a positive odd integer")
        self.input_dims = self.output_dims = spec.dims
        self.value_range = spec.value_range
        gen = RngStream(spec.seed).generator()
        half = width // 2
        kernel = np.exp(-0.5 * (np.arange(-half, half + 1) / max(half, 1)) ** 2)
        self.kernel = kernel / kernel.sum()
        self.offsets = offset_scale * gen.standard_normal(spec.dims[0])

    def query(self, x: ImageTensor) -> ImageTensor:
        data = x.data.astype(np.float64)
        half = len(self.kernel) // 2
        padded = np.pad(data, ((0, 0), (half, half), (half, half)), mode="reflect")
        blurred = np.zeros_like(data)
        for i, kv in enumerate(self.kernel):
            blurred += kv * padded[:, i : i + data.shape[1], half : half + data.shape[2]]
        out = np.zeros_like(data)
        for i, kv in enumerate(self.kernel):
            out += kv * np.pad(blurred, ((0, 0), (0, 0), (half, half)), mode="reflect")[
                :, :, i : i + data.shape[2]
            ]
        out += self.offsets[:, None, None]
        lo, hi = self.value_range
        return ImageTensor(np.clip(out, lo, hi), self.value_range)


class SubspaceSensitiveOracle(OracleHandle):
    """G(x) = clip(x + g * sum_j tanh(<x, u_j>) u_j).

    The seeded orthonormal directions {u_j} form a vulnerable subspace shared
    across all inputs: small moves inside span{u_j} swing the output strongly
    while orthogonal moves pass straight through.
    """

    def __init__(self, spec: SyntheticOracleSpec):
        p = spec.params
        k = int(p.get("subspace_dim", 8))
        gain = float(p.get("gain", 1.0))
        support = p.get("support")
        if k <= 0:
            raise ConfigError("subspace_dim must be positive")
        self.input_dims = self.output_dims = spec.dims
        self.value_range = spec.value_range
        self.gain = gain
        d = int(np.prod(spec.dims))
        gen = RngStream(spec.seed).generator()
        if support is None:
            raw = gen.standard_normal((d, k))
            q, _ = np.linalg.qr(raw)
            self.basis = q[:, :k]
        else:
            support = int(support)
            if support < 1 or support * k > d:
                raise ConfigError("support size out of range")
            coords = gen.permutation(d)[: support * k]
            basis = np.zeros((d, k))
            for j in range(k):
                idx = coords[j * support : (j + 1) * support]
                basis[idx, j] = gen.choice([-1.0, 1.0], size=support) / np.sqrt(support)
            self.basis = basis

    def apply(self, flat: np.ndarray) -> np.ndarray:
        x = flat.astype(np.float64)
        proj = self.basis.T @ x
        return x + self.gain * (self.basis @ np.tanh(proj))

    def jacobian_t_apply(self, flat_x: np.ndarray, flat_v: np.ndarray) -> np.ndarray:
        """J(x)^T v with J = I + g * sum_j (1 - tanh^2(<x,u_j>)) u_j u_j^T."""
        x = flat_x.astype(np.float64)
        v = flat_v.astype(np.float64)
        t = np.tanh(self.basis.T @ x)
        return v + self.gain * (self.basis @ ((1.0 - t * t) * (self.basis.T @ v)))

    def query(self, x: ImageTensor) -> ImageTensor:
        y = self.apply(x.flat())
        lo, hi = self.value_range
        return ImageTensor(np.clip(y, lo, hi).reshape(x.dims), self.value_range)


_KINDS = {
    "affine": AffineOracle,
    "blur_shift": BlurShiftOracle,
    "subspace_sensitive": SubspaceSensitiveOracle,
}


def make_synthetic_oracle(spec: SyntheticOracleSpec) -> OracleHandle:
    if spec.kind not in _KINDS:
        raise ConfigError(f"unknown synthetic oracle kind {spec.kind!r}")
    if any(d <= 0 for d in spec.dims) or len(spec.dims) != 3:
        raise ConfigError(f"invalid oracle dims {spec.dims}")
    return _KINDS[spec.kind](spec)


def analytic_gradient(
    spec: SyntheticOracleSpec, objective: AttackObjective, x: ImageTensor
) -> ImageTensor:
    """Exact gradient of L(G(x), r) w.r.t. x for differentiable synthetic kinds.

    Uses the float64 pre-clip map; output clipping enters through an active-set
    mask, so the result is exact away from clip boundaries.
    """
    oracle = make_synthetic_oracle(spec)
    if not isinstance(oracle, (AffineOracle, SubspaceSensitiveOracle)):
        raise CapabilityError(f"kind {spec.kind!r} has no closed-form gradient")
    flat = x.flat().astype(np.float64)
    pre = oracle.apply(flat)
    lo, hi = spec.value_range
    mask = ((pre > lo) & (pre < hi)).astype(np.float64)
    y = np.clip(pre, lo, hi)
    r = objective.target.flat().astype(np.float64)
    d = flat.size
    if objective.loss_kind == "mse":
        dl_dy = 2.0 * (y - r) / d
    else:
        dl_dy = np.sign(y - r) / d
    dl_dy *= mask
    if isinstance(oracle, AffineOracle):
        grad = oracle.jacobian_t_apply(dl_dy)
    else:
        grad = oracle.jacobian_t_apply(flat, dl_dy)
    if objective.direction == "maximize":
        grad = -grad
    return ImageTensor(grad.reshape(x.dims), x.value_range)


class RemoteOracle(OracleHandle):
    """Client for the oracle wire protocol (BTF1 frames over HTTP)."""

    def __init__(self, endpoint: str, client=None, retries: int = 0):
        import httpx

        self.endpoint = endpoint.rstrip("/")
        self._client = client or httpx.Client()
        self._retries = retries
        try:
            resp = self._client.get(f"{self.endpoint}/v1/info")
        except Exception as exc:  # httpx transport failures
            raise TransportError(f"info endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"info endpoint returned {resp.status_code}")
        info = resp.json()
        self.name = info.get("name", "remote")
        self.input_dims = tuple(info["input_dims"])
        self.output_dims = tuple(info["output_dims"])
        self.value_range = tuple(info["value_range"])

    def query(self, x: ImageTensor) -> ImageTensor:
        import httpx

        frame = btf.encode(x)
        last_exc: Exception | None = None
        for _ in range(self._retries + 1):
            try:
                resp = self._client.post(
                    f"{self.endpoint}/v1/translate",
                    content=frame,
                    headers={"content-type": "application/octet-stream"},
                )
            except httpx.HTTPError as exc:
                last_exc = exc
                continue
            if resp.status_code != 200:
                raise TransportError(
                    f"translate endpoint returned {resp.status_code}: {resp.text[:200]}"
                )
            try:
                out = btf.decode(resp.content, self.value_range)
            except btf.MalformedFrame as exc:
                raise TransportError(f"malformed response frame: {exc}") from exc
            if out.dims != self.output_dims:
                raise TransportError(
                    f"response dims {out.dims} != declared {self.output_dims}"
                )
            return out
        raise TransportError(f"translate request failed: {last_exc}")


def remote_oracle(endpoint: str, client=None, retries: int = 0) -> OracleHandle:
    """Connect to an oracle server; raises TransportError if /v1/info fails."""
    return RemoteOracle(endpoint, client=client, retries=retries)
