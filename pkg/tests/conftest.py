"""Shared builders for fixture networks and images."""

import numpy as np
import pytest

from mlfr.nn import Conv2d, Dense, Flatten, MaxPool2d, Network, ReLU


def random_mlp(rng, sizes, bias=True, relu=True):
    """Dense/ReLU stack; weights ~ N(0,1)/sqrt(fan_in), bias ~ N(0, 0.1)."""
    layers = []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        w = rng.normal(size=(fan_out, fan_in)) / np.sqrt(fan_in)
        b = rng.normal(scale=0.1, size=fan_out) if bias else np.zeros(fan_out)
        layers.append(Dense(weight=w, bias=b))
        if relu and i < len(sizes) - 2:
            layers.append(ReLU())
    return Network(layers=tuple(layers), input_shape=(sizes[0],))


def random_convnet(rng, in_shape=(3, 12, 12), channels=4, classes=5, bias=True):
    """conv-relu-maxpool-flatten-dense fixture net."""
    c, h, w = in_shape
    conv = Conv2d(
        weight=rng.normal(size=(channels, c, 3, 3)) / 3.0,
        bias=rng.normal(scale=0.1, size=channels) if bias else np.zeros(channels),
        stride=(1, 1),
        padding=(1, 1),
    )
    pooled = (channels, h // 2, w // 2)
    flat = int(np.prod(pooled))
    dense = Dense(
        weight=rng.normal(size=(classes, flat)) / np.sqrt(flat),
        bias=rng.normal(scale=0.1, size=classes) if bias else np.zeros(classes),
    )
    return Network(
        layers=(conv, ReLU(), MaxPool2d(kernel_size=(2, 2)), Flatten(), dense),
        input_shape=in_shape,
    )


def half_plane_image(size=16, channels=3):
    """Two-color fixture: left half dark red-ish, right half light blue-ish."""
    img = np.zeros((channels, size, size))
    img[:, :, : size // 2] = np.array([0.8, 0.1, 0.1])[:channels, None, None]
    img[:, :, size // 2 :] = np.array([0.1, 0.2, 0.9])[:channels, None, None]
    return img


def smooth_random_image(rng, size=16, channels=3):
    """Random image with mild spatial structure and no exact plateaus."""
    base = rng.random((channels, size, size))
    kernel = np.array([0.25, 0.5, 0.25])
    for axis in (1, 2):
        base = np.apply_along_axis(lambda v: np.convolve(v, kernel, mode="same"), axis, base)
    base += rng.random((channels, size, size)) * 1e-3
    lo, hi = base.min(), base.max()
    return (base - lo) / (hi - lo)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
