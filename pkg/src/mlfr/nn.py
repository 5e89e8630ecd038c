"""Minimal feed-forward inference engine with activation tracing.

Supported layer kinds: dense, conv2d, maxpool2d, relu, flatten. All
arithmetic is float64; images and feature maps are laid out row-major as
(channels, height, width). Layers and networks are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import conv2d_forward, maxpool2d_forward


class ShapeError(ValueError):
    """Raised when tensor shapes are incompatible with a layer or network."""


class NumericalError(ArithmeticError):
    """Raised when a public operation produces non-finite values."""


def _frozen(a, dtype=np.float64):
    out = np.array(a, dtype=dtype, order="C")
    out.setflags(write=False)
    return out


def check_finite(a, context: str):
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"non-finite values in {context}")
    return a


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (int, np.integer)):
        return (int(v), int(v))
    a, b = v
    return (int(a), int(b))


@dataclass(frozen=True)
class Dense:
    """Fully connected layer: y = W x + b, weight shape (out, in)."""

    weight: np.ndarray
    bias: np.ndarray
    kind = "dense"

    def __post_init__(self):
        w = _frozen(self.weight)
        b = _frozen(self.bias)
        if w.ndim != 2:
            raise ShapeError(f"dense weight must be 2-D, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeError(
                f"dense bias length {b.shape} does not match out_features {w.shape[0]}"
            )
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    def output_shape(self, input_shape):
        if input_shape != (self.weight.shape[1],):
            raise ShapeError(
                f"dense expects input shape ({self.weight.shape[1]},), got {input_shape}"
            )
        return (self.weight.shape[0],)

    def apply(self, x):
        return self.weight @ x + self.bias


@dataclass(frozen=True)
class Conv2d:
    """2-D convolution (cross-correlation) with symmetric zero padding.

    Weight shape is (out_channels, in_channels, kh, kw).
    """

    weight: np.ndarray
    bias: np.ndarray
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    kind = "conv2d"

    def __post_init__(self):
        w = _frozen(self.weight)
        b = _frozen(self.bias)
        if w.ndim != 4:
            raise ShapeError(f"conv2d weight must be 4-D, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ShapeError(
                f"conv2d bias length {b.shape} does not match out_channels {w.shape[0]}"
            )
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "stride", _pair(self.stride))
        object.__setattr__(self, "padding", _pair(self.padding))
        if min(self.stride) < 1:
            raise ShapeError(f"conv2d stride must be positive, got {self.stride}")
        if min(self.padding) < 0:
            raise ShapeError(f"conv2d padding must be non-negative, got {self.padding}")

    def output_shape(self, input_shape):
        o, c, kh, kw = self.weight.shape
        if len(input_shape) != 3 or input_shape[0] != c:
            raise ShapeError(
                f"conv2d expects input ({c}, H, W), got {input_shape}"
            )
        _, h, w = input_shape
        ho = (h + 2 * self.padding[0] - kh) // self.stride[0] + 1
        wo = (w + 2 * self.padding[1] - kw) // self.stride[1] + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"conv2d kernel {kh}x{kw} larger than padded input {input_shape}")
        return (o, ho, wo)

    def apply(self, x):
        return conv2d_forward(x, self.weight, self.bias, self.stride, self.padding)


@dataclass(frozen=True)
class MaxPool2d:
    kernel_size: tuple[int, int]
    stride: tuple[int, int] | None = None
    kind = "maxpool2d"

    def __post_init__(self):
        k = _pair(self.kernel_size)
        object.__setattr__(self, "kernel_size", k)
        object.__setattr__(self, "stride", k if self.stride is None else _pair(self.stride))
        if min(k) < 1 or min(self.stride) < 1:
            raise ShapeError("maxpool2d kernel and stride must be positive")

    def output_shape(self, input_shape):
        if len(input_shape) != 3:
            raise ShapeError(f"maxpool2d expects input (C, H, W), got {input_shape}")
        c, h, w = input_shape
        kh, kw = self.kernel_size
        if kh > h or kw > w:
            raise ShapeError(f"maxpool2d kernel {self.kernel_size} larger than input {input_shape}")
        ho = (h - kh) // self.stride[0] + 1
        wo = (w - kw) // self.stride[1] + 1
        return (c, ho, wo)

    def apply(self, x):
        return maxpool2d_forward(x, self.kernel_size, self.stride)


@dataclass(frozen=True)
class ReLU:
    kind = "relu"

    def output_shape(self, input_shape):
        return input_shape

    def apply(self, x):
        return np.maximum(x, 0.0)


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"

    def output_shape(self, input_shape):
        n = 1
        for s in input_shape:
            n *= s
        return (n,)

    def apply(self, x):
        return np.ascontiguousarray(x.reshape(-1))


Layer = Dense | Conv2d | MaxPool2d | ReLU | Flatten


@dataclass(frozen=True)
class Network:
    """Ordered layer stack with a fixed input shape.

    Consecutive layer shapes are validated at construction; the offending
    layer is named in the error when they are not compatible.
    """

    layers: tuple
    input_shape: tuple
    class_labels: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if self.class_labels is not None:
            object.__setattr__(self, "class_labels", tuple(str(s) for s in self.class_labels))
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ShapeError as e:
                raise ShapeError(f"layer {i} ({layer.kind}): {e}") from None
        object.__setattr__(self, "output_shape", shape)

    output_shape: tuple = field(init=False)

    @property
    def num_classes(self) -> int:
        n = 1
        for s in self.output_shape:
            n *= s
        return n


@dataclass(frozen=True)
class StepTrace:
    """One layer's recorded activations from a forward pass."""

    input: np.ndarray
    output: np.ndarray
    argmax: np.ndarray | None = None


@dataclass(frozen=True)
class ActivationTrace:
    steps: tuple

    def __len__(self):
        return len(self.steps)

    def __getitem__(self, i):
        return self.steps[i]


def forward(network: Network, x: np.ndarray) -> tuple[np.ndarray, ActivationTrace]:
    """Run the network on one input, recording every intermediate activation.

    Returns (output, trace); trace[i].output is trace[i+1].input.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != network.input_shape:
        raise ShapeError(
            f"input shape {x.shape} does not match network input_shape {network.input_shape}"
        )
    check_finite(x, "network input")
    steps = []
    for i, layer in enumerate(network.layers):
        if layer.kind == "maxpool2d":
            out, argmax = layer.apply(x)
            steps.append(StepTrace(input=x, output=out, argmax=argmax))
        else:
            out = layer.apply(x)
            steps.append(StepTrace(input=x, output=out))
        x = out
    check_finite(x, "network output")
    return x, ActivationTrace(steps=tuple(steps))
