"""Convert small torch models into the MLFR container format.

The serializer here is written against the documented container layout,
independently of the mlfr package, so a container produced on this side
and loaded on that side exercises the format contract from both ends.

Weights are narrowed to float32 at export. torch modules already hold
float32 parameters, so the reference outputs emitted alongside the
container are computed on exactly the narrowed values; any disagreement
with the consumer's forward pass reflects arithmetic order only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

MAGIC = b"MLFR"
VERSION = 1
REFERENCE_INPUT_COUNT = 3


class ExportError(ValueError):
    """Model cannot be expressed in the container format."""


@dataclass
class ExportManifest:
    """What was exported: source description, per-layer mapping, and the
    reference inputs/outputs used for round-trip validation."""

    source: str
    input_shape: tuple
    layer_map: list = field(default_factory=list)
    reference_inputs: list = field(default_factory=list)
    reference_outputs: list = field(default_factory=list)


def _pair(v):
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def _flatten_modules(model: nn.Module):
    """Leaf modules in execution order for sequential-style models."""
    leaves = []
    for module in model.children():
        if isinstance(module, (nn.Sequential, nn.ModuleList)):
            leaves.extend(_flatten_modules(module))
        else:
            leaves.append(module)
    return leaves or [model]


def _descriptor_and_params(index: int, module: nn.Module):
    """Map one torch module to (manifest descriptor, [param arrays])."""
    if isinstance(module, nn.Linear):
        weight = module.weight.detach().cpu().numpy()
        bias = (
            module.bias.detach().cpu().numpy()
            if module.bias is not None
            else np.zeros(weight.shape[0], dtype=np.float32)
        )
        desc = {
            "kind": "dense",
            "out_features": weight.shape[0],
            "in_features": weight.shape[1],
        }
        return desc, [weight, bias]
    if isinstance(module, nn.Conv2d):
        if module.groups != 1:
            raise ExportError(f"layer {index} (Conv2d): grouped convolutions are not exportable")
        if _pair(module.dilation) != (1, 1):
            raise ExportError(f"layer {index} (Conv2d): dilation is not exportable")
        if isinstance(module.padding, str):
            raise ExportError(
                f"layer {index} (Conv2d): string padding {module.padding!r} is not exportable; "
                "use explicit integers"
            )
        weight = module.weight.detach().cpu().numpy()
        bias = (
            module.bias.detach().cpu().numpy()
            if module.bias is not None
            else np.zeros(weight.shape[0], dtype=np.float32)
        )
        desc = {
            "kind": "conv2d",
            "out_channels": weight.shape[0],
            "in_channels": weight.shape[1],
            "kernel_size": [weight.shape[2], weight.shape[3]],
            "stride": list(_pair(module.stride)),
            "padding": list(_pair(module.padding)),
        }
        return desc, [weight, bias]
    if isinstance(module, nn.MaxPool2d):
        if _pair(module.padding) != (0, 0):
            raise ExportError(f"layer {index} (MaxPool2d): padding is not exportable")
        if _pair(module.dilation) != (1, 1) or module.ceil_mode:
            raise ExportError(f"layer {index} (MaxPool2d): dilation/ceil_mode are not exportable")
        stride = module.stride if module.stride is not None else module.kernel_size
        desc = {
            "kind": "maxpool2d",
            "kernel_size": list(_pair(module.kernel_size)),
            "stride": list(_pair(stride)),
        }
        return desc, []
    if isinstance(module, nn.ReLU):
        return {"kind": "relu"}, []
    if isinstance(module, nn.Flatten):
        return {"kind": "flatten"}, []
    raise ExportError(
        f"layer {index} ({type(module).__name__}) is not exportable; "
        "supported kinds: Linear, Conv2d, MaxPool2d, ReLU, Flatten"
    )


def export(
    model: nn.Module,
    input_shape,
    container_path,
    refs_path,
    class_labels=None,
    reference_seed: int = 0,
) -> ExportManifest:
    """Write the container and a reference-output JSON for a torch model.

    Reference outputs are the torch forward results on REFERENCE_INPUT_COUNT
    seeded inputs, recorded after the float32 narrowing.
    """
    input_shape = tuple(int(s) for s in input_shape)
    modules = _flatten_modules(model)
    descriptors = []
    params = []
    layer_map = []
    for index, module in enumerate(modules):
        desc, arrays = _descriptor_and_params(index, module)
        descriptors.append(desc)
        params.extend(arrays)
        layer_map.append({"source": type(module).__name__, "target": desc["kind"]})

    manifest = {
        "input_shape": list(input_shape),
        "class_labels": list(class_labels) if class_labels else None,
        "layers": descriptors,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [MAGIC, VERSION.to_bytes(4, "little"), len(blob).to_bytes(4, "little"), blob]
    for array in params:
        chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes(order="C"))
    Path(container_path).write_bytes(b"".join(chunks))

    rng = np.random.default_rng(reference_seed)
    inputs = [rng.random(input_shape, dtype=np.float32) for _ in range(REFERENCE_INPUT_COUNT)]
    outputs = []
    model.eval()
    with torch.no_grad():
        for x in inputs:
            out = model(torch.from_numpy(x).unsqueeze(0)).squeeze(0)
            outputs.append(out.cpu().numpy().astype(np.float32))

    result = ExportManifest(
        source=type(model).__name__,
        input_shape=input_shape,
        layer_map=layer_map,
        reference_inputs=[x.reshape(-1).tolist() for x in inputs],
        reference_outputs=[o.reshape(-1).tolist() for o in outputs],
    )
    refs_doc = {
        "schema": "mlfr-export-refs-v1",
        "source": result.source,
        "input_shape": list(input_shape),
        "layer_map": layer_map,
        "inputs": result.reference_inputs,
        "outputs": result.reference_outputs,
    }
    Path(refs_path).write_text(
        json.dumps(refs_doc, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )
    return result
