"""Translation models served behind the wire protocol.

A model is a deterministic map from one (C, H, W) float32 image to another,
with any conditioning fixed at construction time so the served oracle stays
a pure function.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

Dims = tuple[int, int, int]


class ModelError(RuntimeError):
    """Model could not be constructed or failed during inference."""


class TranslationModel:
    input_dims: Dims
    output_dims: Dims

    def translate(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class EchoModel(TranslationModel):
    """Returns the input unchanged; the protocol-conformance reference."""

    def __init__(self, dims: Dims):
        self.input_dims = self.output_dims = dims

    def translate(self, image: np.ndarray) -> np.ndarray:
        return image


class TorchScriptModel(TranslationModel):
    """A TorchScript generator called as model(image[1,C,H,W], cond[1,K]).

    The conditioning vector is fixed per instance; a probe inference at load
    time validates the checkpoint, the declared dims and the conditioning
    length in one shot.
    """

    def __init__(self, checkpoint: str, dims: Dims, conditioning: Optional[Sequence[float]]):
        import torch

        self._torch = torch
        try:
            self._model = torch.jit.load(checkpoint, map_location="cpu")
        except Exception as exc:
            raise ModelError(f"cannot load checkpoint {checkpoint!r}: {exc}") from exc
        self._model.eval()
        self._cond = None
        if conditioning is not None:
            self._cond = torch.tensor([list(conditioning)], dtype=torch.float32)
        self.input_dims = dims
        probe = np.zeros(dims, dtype=np.float32)
        try:
            out = self._infer(probe)
        except Exception as exc:
            raise ModelError(
                f"probe inference failed (wrong dims or conditioning length?): {exc}"
            ) from exc
        if out.ndim != 3:
            raise ModelError(f"model produced rank-{out.ndim} output, expected 3")
        self.output_dims = tuple(out.shape)

    def _infer(self, image: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))[None]
            if self._cond is None:
                y = self._model(x)
            else:
                y = self._model(x, self._cond)
        return y[0].numpy().astype(np.float32)

    def translate(self, image: np.ndarray) -> np.ndarray:
        try:
            return self._infer(image)
        except Exception as exc:
            raise ModelError(f"inference failed: {exc}") from exc
