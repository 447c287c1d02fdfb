"""Shared test oracles and helpers."""

from __future__ import annotations

import numpy as np
import pytest

from itattack.oracle import OracleHandle
from itattack.tensor import ImageTensor


class EchoOracle(OracleHandle):
    """G(x) = x."""

    def __init__(self, dims=(3, 8, 8), value_range=(-1.0, 1.0)):
        self.input_dims = self.output_dims = dims
        self.value_range = value_range

    def query(self, x: ImageTensor) -> ImageTensor:
        return x


class ConstantOracle(OracleHandle):
    """G(x) = c for every x."""

    def __init__(self, output: ImageTensor):
        self.input_dims = self.output_dims = output.dims
        self.value_range = output.value_range
        self._output = output

    def query(self, x: ImageTensor) -> ImageTensor:
        return self._output


class CountingOracle(OracleHandle):
    """Wraps another oracle with an independent invocation counter."""

    def __init__(self, inner: OracleHandle):
        self.inner = inner
        self.input_dims = inner.input_dims
        self.output_dims = inner.output_dims
        self.value_range = inner.value_range
        self.calls = 0

    def query(self, x: ImageTensor) -> ImageTensor:
        self.calls += 1
        return self.inner.query(x)


class RecordingOracle(OracleHandle):
    """Echo oracle that keeps a copy of every input it sees."""

    def __init__(self, dims=(3, 4, 4), value_range=(-1.0, 1.0)):
        self.input_dims = self.output_dims = dims
        self.value_range = value_range
        self.inputs: list[np.ndarray] = []

    def query(self, x: ImageTensor) -> ImageTensor:
        self.inputs.append(x.data.copy())
        return x


class ScriptedLossOracle(OracleHandle):
    """Produces outputs whose mse against `target` follows a fixed script.

    The i-th query returns an output with mse(output, target) == script[i],
    regardless of the input; lets tests drive attack decisions directly.
    """

    def __init__(self, target: ImageTensor, script):
        self.input_dims = self.output_dims = target.dims
        self.value_range = target.value_range
        self._target = target
        self._script = list(script)
        self._pos = 0

    def query(self, x: ImageTensor) -> ImageTensor:
        if self._pos >= len(self._script):
            raise AssertionError("loss script exhausted")
        value = self._script[self._pos]
        self._pos += 1
        out = self._target.data.astype(np.float64).copy()
        out.flat[0] += np.sqrt(value * out.size)
        return ImageTensor(out, self._target.value_range)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
