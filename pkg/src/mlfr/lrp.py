"""Layer-wise relevance propagation through a traced forward pass.

Relevance starts one-hot at the chosen class with the pre-softmax score as
its value, then flows from the last layer to the first. Two redistribution
rules are provided: the stabilized epsilon rule and the alpha-beta rule.
Bias relevance is absorbed, never redistributed to inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import conv2d_lrp_alphabeta, conv2d_lrp_epsilon
from .nn import ActivationTrace, Network, ShapeError, check_finite

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class LrpRule:
    """Redistribution rule: kind 'epsilon' (stabilizer eps >= 0) or
    'alphabeta' (alpha - beta == 1, alpha >= 1)."""

    kind: str
    epsilon: float = 0.0
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind == "epsilon":
            if self.epsilon < 0:
                raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        elif self.kind == "alphabeta":
            if abs(self.alpha - self.beta - 1.0) > 1e-12:
                raise ValueError(
                    f"alphabeta rule requires alpha - beta == 1, got {self.alpha} - {self.beta}"
                )
            if self.alpha < 1.0:
                raise ValueError(f"alphabeta rule requires alpha >= 1, got {self.alpha}")
        else:
            raise ValueError(f"unknown rule kind {self.kind!r}")


def epsilon_rule(epsilon: float = DEFAULT_EPSILON) -> LrpRule:
    return LrpRule(kind="epsilon", epsilon=float(epsilon))


def alphabeta_rule(alpha: float = 2.0) -> LrpRule:
    return LrpRule(kind="alphabeta", alpha=float(alpha), beta=float(alpha) - 1.0)


@dataclass(frozen=True)
class RelevanceMap:
    """Relevance values shaped like the tensor they annotate."""

    values: np.ndarray
    class_index: int
    rule: LrpRule


def _stabilized(z, eps):
    # sign(0) := +1 so the stabilizer never vanishes for eps > 0
    return z + np.where(z >= 0.0, eps, -eps)


def _safe_div(num, denom):
    # zero denominators only arise with eps == 0 at exactly-zero
    # pre-activations; that relevance has no path and is dropped
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denom != 0.0, num / denom, 0.0)


def dense_relevance(weight, bias, a, r_out, rule: LrpRule):
    """Relevance through y = W a + b, returned over the inputs a."""
    if rule.kind == "epsilon":
        z = weight @ a + bias
        s = _safe_div(r_out, _stabilized(z, rule.epsilon))
        return a * (weight.T @ s)
    ap = np.maximum(a, 0.0)
    an = np.minimum(a, 0.0)
    wp = np.maximum(weight, 0.0)
    wn = np.minimum(weight, 0.0)
    zp = wp @ ap + wn @ an + np.maximum(bias, 0.0)
    zn = wn @ ap + wp @ an + np.minimum(bias, 0.0)
    sp = _safe_div(rule.alpha * r_out, zp)
    sn = _safe_div(-rule.beta * r_out, zn)
    return ap * (wp.T @ sp) + an * (wn.T @ sp) + ap * (wn.T @ sn) + an * (wp.T @ sn)


def lrp_dense(layer, a, r_out, rule: LrpRule):
    if r_out.shape != (layer.weight.shape[0],):
        raise ShapeError(
            f"relevance shape {r_out.shape} does not match dense output "
            f"({layer.weight.shape[0]},)"
        )
    return dense_relevance(layer.weight, layer.bias, a, r_out, rule)


def lrp_conv2d(layer, a, r_out, rule: LrpRule):
    expected = layer.output_shape(a.shape)
    if r_out.shape != expected:
        raise ShapeError(
            f"relevance shape {r_out.shape} does not match conv2d output {expected}"
        )
    if rule.kind == "epsilon":
        return conv2d_lrp_epsilon(
            a, layer.weight, layer.bias, r_out, layer.stride, layer.padding, rule.epsilon
        )
    return conv2d_lrp_alphabeta(
        a, layer.weight, layer.bias, r_out, layer.stride, layer.padding, rule.alpha, rule.beta
    )


def lrp_maxpool2d(layer, a, argmax, r_out):
    """Winner-take-all: all relevance of a window goes to its recorded argmax."""
    c, h, w = a.shape
    r_in = np.zeros((c, h * w))
    for ch in range(c):
        np.add.at(r_in[ch], argmax[ch].reshape(-1), r_out[ch].reshape(-1))
    return r_in.reshape(c, h, w)


def lrp_relu(r_out):
    return r_out


def lrp_flatten(input_shape, r_out):
    return r_out.reshape(input_shape)


def propagate(
    network: Network,
    trace: ActivationTrace,
    class_index: int,
    rule: LrpRule,
    initial_relevance: float | None = None,
) -> RelevanceMap:
    """Distribute the class score backward to the network input.

    The starting relevance is one-hot at class_index, valued at the
    pre-softmax score of that class (or initial_relevance if given).
    """
    if len(trace) != len(network.layers):
        raise ValueError(
            f"trace has {len(trace)} steps for a {len(network.layers)}-layer network"
        )
    output = trace[-1].output if len(trace) else None
    if output is None or output.ndim != 1:
        raise ShapeError("propagate requires a network with a flat output vector")
    if not 0 <= class_index < output.shape[0]:
        raise IndexError(
            f"class index {class_index} out of range for {output.shape[0]} outputs"
        )
    r = np.zeros_like(output)
    r[class_index] = output[class_index] if initial_relevance is None else initial_relevance
    for layer, step in zip(reversed(network.layers), reversed(trace.steps)):
        if step.output.shape != r.shape:
            raise ShapeError(
                f"trace/relevance mismatch at layer {layer.kind}: "
                f"{step.output.shape} vs {r.shape}"
            )
        if layer.kind == "dense":
            r = lrp_dense(layer, step.input, r, rule)
        elif layer.kind == "conv2d":
            r = lrp_conv2d(layer, step.input, r, rule)
        elif layer.kind == "maxpool2d":
            r = lrp_maxpool2d(layer, step.input, step.argmax, r)
        elif layer.kind == "relu":
            r = lrp_relu(r)
        elif layer.kind == "flatten":
            r = lrp_flatten(step.input.shape, r)
        else:
            raise ValueError(f"no relevance rule for layer kind {layer.kind!r}")
    check_finite(r, "propagated relevance")
    return RelevanceMap(values=r, class_index=class_index, rule=rule)
