"""Inference engine: forward pass, tracing, shape validation."""

import numpy as np
import pytest

from mlfr.nn import (
    Conv2d,
    Dense,
    Flatten,
    MaxPool2d,
    Network,
    NumericalError,
    ReLU,
    ShapeError,
    forward,
)

from conftest import random_convnet, random_mlp


def naive_dense(w, b, x):
    out = np.zeros(w.shape[0])
    for i in range(w.shape[0]):
        acc = b[i]
        for j in range(w.shape[1]):
            acc += w[i, j] * x[j]
        out[i] = acc
    return out


def naive_conv2d(x, w, b, stride, padding):
    c, h, wd = x.shape
    o, _, kh, kw = w.shape
    sh, sw = stride
    ph, pw = padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    out = np.zeros((o, ho, wo))
    for oc in range(o):
        for oh in range(ho):
            for ow in range(wo):
                acc = b[oc]
                for ic in range(c):
                    for i in range(kh):
                        for j in range(kw):
                            ih = oh * sh + i - ph
                            iw = ow * sw + j - pw
                            if 0 <= ih < h and 0 <= iw < wd:
                                acc += x[ic, ih, iw] * w[oc, ic, i, j]
                out[oc, oh, ow] = acc
    return out


class TestDenseForward:
    def test_identity_layer(self):
        net = Network(
            layers=(Dense(weight=np.eye(3), bias=np.zeros(3)),), input_shape=(3,)
        )
        out, _ = forward(net, np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(out, [1.0, 2.0, 3.0])

    def test_dense_then_relu(self):
        net = Network(
            layers=(
                Dense(weight=np.array([[2.0, 0.0], [0.0, 3.0]]), bias=np.zeros(2)),
                ReLU(),
            ),
            input_shape=(2,),
        )
        out, _ = forward(net, np.array([1.0, -1.0]))
        np.testing.assert_array_equal(out, [2.0, 0.0])

    def test_three_layer_mlp_matches_naive_oracle(self, rng):
        net = random_mlp(rng, [7, 12, 9, 4])
        x = rng.normal(size=7)
        out, _ = forward(net, x)
        expected = x
        for layer in net.layers:
            if layer.kind == "dense":
                expected = naive_dense(layer.weight, layer.bias, expected)
            else:
                expected = np.maximum(expected, 0.0)
        np.testing.assert_allclose(out, expected, rtol=1e-6)

    def test_forward_is_deterministic(self, rng):
        net = random_mlp(rng, [5, 8, 3])
        x = rng.normal(size=5)
        a, _ = forward(net, x)
        b, _ = forward(net, x)
        assert a.tobytes() == b.tobytes()


class TestConvForward:
    @pytest.mark.parametrize("stride,padding", [((1, 1), (0, 0)), ((1, 1), (1, 1)), ((2, 2), (1, 1))])
    def test_matches_naive_oracle(self, rng, stride, padding):
        x = rng.normal(size=(3, 8, 7))
        w = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        layer = Conv2d(weight=w, bias=b, stride=stride, padding=padding)
        net = Network(layers=(layer,), input_shape=(3, 8, 7))
        out, _ = forward(net, x)
        np.testing.assert_allclose(out, naive_conv2d(x, w, b, stride, padding), rtol=1e-6, atol=1e-12)

    def test_relu_outputs_nonnegative(self, rng):
        net = random_convnet(rng)
        _, trace = forward(net, rng.random(net.input_shape))
        post_relu = trace[1].output
        assert post_relu.min() >= 0.0


class TestMaxPool:
    def test_argmax_indexes_window_maximum(self, rng):
        x = rng.normal(size=(2, 6, 6))
        net = Network(
            layers=(MaxPool2d(kernel_size=(2, 2)),), input_shape=(2, 6, 6)
        )
        out, trace = forward(net, x)
        argmax = trace[0].argmax
        c, ho, wo = out.shape
        for ic in range(c):
            for oh in range(ho):
                for ow in range(wo):
                    window = x[ic, oh * 2 : oh * 2 + 2, ow * 2 : ow * 2 + 2]
                    assert out[ic, oh, ow] == window.max()
                    ih, iw = divmod(int(argmax[ic, oh, ow]), 6)
                    assert x[ic, ih, iw] == window.max()

    def test_overlapping_stride(self, rng):
        x = rng.normal(size=(1, 5, 5))
        net = Network(
            layers=(MaxPool2d(kernel_size=(3, 3), stride=(1, 1)),), input_shape=(1, 5, 5)
        )
        out, _ = forward(net, x)
        assert out.shape == (1, 3, 3)
        for oh in range(3):
            for ow in range(3):
                assert out[0, oh, ow] == x[0, oh : oh + 3, ow : ow + 3].max()


class TestValidation:
    def test_input_shape_mismatch(self, rng):
        net = random_mlp(rng, [5, 3])
        with pytest.raises(ShapeError):
            forward(net, np.zeros(4))

    def test_incompatible_layers_name_the_offender(self):
        with pytest.raises(ShapeError, match="layer 1"):
            Network(
                layers=(
                    Dense(weight=np.zeros((3, 5)), bias=np.zeros(3)),
                    Dense(weight=np.zeros((2, 4)), bias=np.zeros(2)),
                ),
                input_shape=(5,),
            )

    def test_dense_bias_length_checked(self):
        with pytest.raises(ShapeError):
            Dense(weight=np.zeros((3, 5)), bias=np.zeros(4))

    def test_conv_weight_rank_checked(self):
        with pytest.raises(ShapeError):
            Conv2d(weight=np.zeros((4, 3, 3)), bias=np.zeros(4))

    def test_non_finite_input_rejected(self, rng):
        net = random_mlp(rng, [3, 2])
        with pytest.raises(NumericalError):
            forward(net, np.array([1.0, np.nan, 0.0]))

    def test_flatten_shapes(self):
        net = Network(
            layers=(Flatten(), Dense(weight=np.ones((1, 12)), bias=np.zeros(1))),
            input_shape=(3, 2, 2),
        )
        out, trace = forward(net, np.ones((3, 2, 2)))
        assert trace[0].output.shape == (12,)
        assert out[0] == 12.0

    def test_trace_chains_outputs_to_inputs(self, rng):
        net = random_convnet(rng)
        _, trace = forward(net, rng.random(net.input_shape))
        assert len(trace) == len(net.layers)
        for i in range(len(trace) - 1):
            assert trace[i].output is trace[i + 1].input
