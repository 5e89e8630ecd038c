"""Bit-exact model container format.

Layout:
  bytes 0-3    ASCII magic "MLFR"
  bytes 4-7    format version, unsigned 32-bit little-endian (currently 1)
  bytes 8-11   manifest byte length N, unsigned 32-bit little-endian
  bytes 12..   UTF-8 JSON manifest (input_shape, class_labels, ordered layer
               descriptors with kind / shapes / stride / padding)
  remainder    for each parameterized layer in order: weight then bias as
               packed little-endian IEEE-754 float32, row-major, no padding

Parameters are stored as float32 and widened to float64 on load; saving
narrows with round-to-nearest. Manifests are written in canonical JSON
(sorted keys, compact separators) so that save(load(f)) reproduces f
byte-for-byte for every file this module or the exporter produces.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nn import Conv2d, Dense, Flatten, MaxPool2d, Network, ReLU

MAGIC = b"MLFR"
VERSION = 1


class ContainerError(ValueError):
    """Base class for container format violations."""


class BadMagicError(ContainerError):
    pass


class UnsupportedVersionError(ContainerError):
    pass


class TruncatedPayloadError(ContainerError):
    pass


class ManifestError(ContainerError):
    """Malformed manifest, or manifest inconsistent with the payload."""


def _layer_descriptor(layer) -> dict:
    if layer.kind == "dense":
        return {
            "kind": "dense",
            "out_features": layer.weight.shape[0],
            "in_features": layer.weight.shape[1],
        }
    if layer.kind == "conv2d":
        o, c, kh, kw = layer.weight.shape
        return {
            "kind": "conv2d",
            "out_channels": o,
            "in_channels": c,
            "kernel_size": [kh, kw],
            "stride": list(layer.stride),
            "padding": list(layer.padding),
        }
    if layer.kind == "maxpool2d":
        return {
            "kind": "maxpool2d",
            "kernel_size": list(layer.kernel_size),
            "stride": list(layer.stride),
        }
    if layer.kind in ("relu", "flatten"):
        return {"kind": layer.kind}
    raise ContainerError(f"layer kind {layer.kind!r} is not serializable")


def _layer_from_descriptor(idx: int, desc) -> tuple:
    """Returns (constructor, weight_shape | None). Parameters filled later."""
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ManifestError(f"layer {idx}: descriptor must be an object with a 'kind'")
    kind = desc["kind"]
    try:
        if kind == "dense":
            return ("dense", (int(desc["out_features"]), int(desc["in_features"])))
        if kind == "conv2d":
            kh, kw = desc["kernel_size"]
            shape = (
                int(desc["out_channels"]),
                int(desc["in_channels"]),
                int(kh),
                int(kw),
            )
            return ("conv2d", shape, tuple(desc["stride"]), tuple(desc["padding"]))
        if kind == "maxpool2d":
            return ("maxpool2d", tuple(desc["kernel_size"]), tuple(desc["stride"]))
        if kind in ("relu", "flatten"):
            return (kind,)
    except (KeyError, TypeError, ValueError) as e:
        raise ManifestError(f"layer {idx} ({kind}): {e}") from None
    raise ManifestError(f"layer {idx}: unknown layer kind {kind!r}")


def save_network(network: Network, path) -> None:
    """Write a network to the container format (inverse of load_network)."""
    manifest = {
        "input_shape": list(network.input_shape),
        "class_labels": list(network.class_labels) if network.class_labels else None,
        "layers": [_layer_descriptor(layer) for layer in network.layers],
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [MAGIC, VERSION.to_bytes(4, "little"), len(blob).to_bytes(4, "little"), blob]
    for layer in network.layers:
        if layer.kind in ("dense", "conv2d"):
            chunks.append(layer.weight.astype("<f4").tobytes(order="C"))
            chunks.append(layer.bias.astype("<f4").tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_network(path) -> Network:
    """Load a network, widening stored float32 parameters to float64."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise TruncatedPayloadError(f"{path}: file shorter than the 12-byte header")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version = int.from_bytes(raw[4:8], "little")
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: format version {version}, expected {VERSION}")
    mlen = int.from_bytes(raw[8:12], "little")
    if len(raw) < 12 + mlen:
        raise TruncatedPayloadError(f"{path}: manifest truncated ({len(raw) - 12} of {mlen} bytes)")
    try:
        manifest = json.loads(raw[12 : 12 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ManifestError(f"{path}: manifest is not valid JSON ({e})") from None
    for key in ("input_shape", "layers"):
        if key not in manifest:
            raise ManifestError(f"{path}: manifest missing {key!r}")
    if not isinstance(manifest["layers"], list):
        raise ManifestError(f"{path}: manifest 'layers' must be a list")

    parsed_layers = [
        _layer_from_descriptor(idx, desc) for idx, desc in enumerate(manifest["layers"])
    ]
    expected = 0
    for parsed in parsed_layers:
        if parsed[0] == "dense":
            expected += 4 * (parsed[1][0] * parsed[1][1] + parsed[1][0])
        elif parsed[0] == "conv2d":
            expected += 4 * (int(np.prod(parsed[1])) + parsed[1][0])
    payload = raw[12 + mlen :]
    if len(payload) != expected:
        raise ManifestError(
            f"{path}: manifest implies a {expected}-byte parameter payload "
            f"but the file carries {len(payload)} bytes"
        )
    offset = 0

    def read_f32(shape):
        nonlocal offset
        n = int(np.prod(shape))
        end = offset + 4 * n
        arr = np.frombuffer(payload[offset:end], dtype="<f4").astype(np.float64)
        offset = end
        return arr.reshape(shape)

    layers = []
    for parsed in parsed_layers:
        kind = parsed[0]
        if kind == "dense":
            shape = parsed[1]
            layers.append(Dense(weight=read_f32(shape), bias=read_f32((shape[0],))))
        elif kind == "conv2d":
            shape, stride, padding = parsed[1], parsed[2], parsed[3]
            layers.append(
                Conv2d(
                    weight=read_f32(shape),
                    bias=read_f32((shape[0],)),
                    stride=stride,
                    padding=padding,
                )
            )
        elif kind == "maxpool2d":
            layers.append(MaxPool2d(kernel_size=parsed[1], stride=parsed[2]))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "flatten":
            layers.append(Flatten())
    labels = manifest.get("class_labels")
    try:
        return Network(
            layers=tuple(layers),
            input_shape=tuple(int(s) for s in manifest["input_shape"]),
            class_labels=tuple(labels) if labels else None,
        )
    except (TypeError, ValueError) as e:
        raise ManifestError(f"{path}: {e}") from None
