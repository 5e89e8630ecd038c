"""Input decoders and the end-to-end middle-level relevance pipeline.

A decoder is a linear map x = V u + eps whose columns are middle-level
feature vectors: masked image segments (all coefficients 1, zero bias) or
dictionary atoms (sparse coefficients, bias absorbing the reconstruction
residual). Stacking the decoder in front of a classifier yields a model
that maps encodings to class scores; running relevance propagation
through the stack assigns one relevance value per feature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dictlearn import Encoding, sparse_encode
from .lrp import LrpRule, RelevanceMap, dense_relevance, propagate
from .nn import Dense, Network, ShapeError, check_finite, forward
from .segmentation import SegmentLabels, rle_encode_mask


@dataclass(frozen=True)
class Decoder:
    """Linear decoder: decode(u) = features @ u + bias.

    feature_kind 'segment' requires a zero bias and feature columns with
    pairwise-disjoint supports covering every input position.
    """

    features: np.ndarray
    bias: np.ndarray
    feature_kind: str
    image_shape: tuple
    segment_labels: SegmentLabels | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.features, dtype=np.float64)
        b = np.ascontiguousarray(self.bias, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError(f"features must be (d, m), got shape {v.shape}")
        if b.shape != (v.shape[0],):
            raise ShapeError(f"bias length {b.shape} does not match d={v.shape[0]}")
        if self.feature_kind not in ("segment", "atom"):
            raise ValueError(f"unknown feature_kind {self.feature_kind!r}")
        if int(np.prod(self.image_shape)) != v.shape[0]:
            raise ShapeError(
                f"image_shape {self.image_shape} is incompatible with d={v.shape[0]}"
            )
        if self.feature_kind == "segment":
            if np.any(b != 0.0):
                raise ValueError("segment decoders must have a zero bias")
            if self.segment_labels is None:
                raise ValueError("segment decoders carry their segment labels")
            owners = np.repeat(
                self.segment_labels.labels.reshape(-1)[None, :], self.image_shape[0], axis=0
            ).reshape(-1)
            wrong = np.nonzero(v)[0]
            if np.any(np.nonzero(v)[1] != owners[wrong]):
                raise ValueError("segment columns must have disjoint supports")
        v.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "features", v)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "image_shape", tuple(int(s) for s in self.image_shape))

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def decode(self, encoding: Encoding | np.ndarray) -> np.ndarray:
        u = encoding.coefficients if isinstance(encoding, Encoding) else np.asarray(encoding)
        if u.shape != (self.num_features,):
            raise ShapeError(
                f"encoding length {u.shape} does not match m={self.num_features}"
            )
        return self.features @ u + self.bias

    def feature_masks(self) -> list[np.ndarray]:
        """Per-feature pixel masks of shape (H, W): segment membership, or
        the non-zero support of an atom reduced over channels."""
        c, h, w = self.image_shape
        if self.feature_kind == "segment":
            return self.segment_labels.masks()
        cols = self.features.reshape(c, h, w, self.num_features)
        return [np.any(cols[..., j] != 0.0, axis=0) for j in range(self.num_features)]


def segmentation_decoder(
    image: np.ndarray, labels: SegmentLabels
) -> tuple[Decoder, Encoding]:
    """Columns are the image masked to each segment; the all-ones encoding
    reconstructs the image exactly."""
    image = np.ascontiguousarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ShapeError(f"image must be (C, H, W), got shape {image.shape}")
    c, h, w = image.shape
    if labels.labels.shape != (h, w):
        raise ShapeError(
            f"label map shape {labels.labels.shape} does not match image plane {(h, w)}"
        )
    m = labels.segment_count
    flat = image.reshape(-1)
    owners = np.repeat(labels.labels.reshape(-1)[None, :], c, axis=0).reshape(-1)
    v = np.zeros((flat.shape[0], m))
    v[np.arange(flat.shape[0]), owners] = flat
    decoder = Decoder(
        features=v,
        bias=np.zeros(flat.shape[0]),
        feature_kind="segment",
        image_shape=image.shape,
        segment_labels=labels,
    )
    return decoder, Encoding(coefficients=np.ones(m))


def dictionary_decoder(
    dictionary, image: np.ndarray, sparsity: float
) -> tuple[Decoder, Encoding]:
    """Sparse-encode the image against the atoms; the bias absorbs the
    residual so decoding the encoding reproduces the image."""
    from .dictlearn import _atoms_of

    v = _atoms_of(dictionary)
    image = np.ascontiguousarray(image, dtype=np.float64)
    flat = image.reshape(-1)
    if v.shape[0] != flat.shape[0]:
        raise ShapeError(
            f"dictionary dimension {v.shape[0]} does not match image size {flat.shape[0]}"
        )
    encoding = sparse_encode(v, flat, sparsity)
    bias = flat - v @ encoding.coefficients
    decoder = Decoder(
        features=v,
        bias=bias,
        feature_kind="atom",
        image_shape=image.shape if image.ndim == 3 else (1, 1, flat.shape[0]),
    )
    return decoder, encoding


@dataclass(frozen=True)
class RelevanceReport:
    """Per-feature relevance with enough metadata to render and re-rank
    without re-running segmentation or encoding."""

    feature_relevance: np.ndarray
    class_index: int
    rule: LrpRule
    feature_kind: str
    image_shape: tuple
    pixel_relevance: RelevanceMap | None = None
    segment_labels: SegmentLabels | None = None
    class_label: str | None = None
    bias_relevance_absorbed: float = 0.0

    def __post_init__(self):
        r = np.ascontiguousarray(self.feature_relevance, dtype=np.float64)
        check_finite(r, "feature relevance")
        r.setflags(write=False)
        object.__setattr__(self, "feature_relevance", r)

    @property
    def num_features(self) -> int:
        return self.feature_relevance.shape[0]


def mlfr_explain(
    network: Network,
    decoder: Decoder,
    encoding: Encoding,
    class_index: int,
    rule: LrpRule,
) -> RelevanceReport:
    """Relevance of each middle-level feature for one class score.

    Runs the stacked decoder+network forward on the encoding, propagates
    relevance through the network down to pixels, then through the decoder
    in one dense step. The decoder uses the same rule as the network; bias
    relevance (atom decoders) is absorbed, and its total is reported.
    """
    x = decoder.decode(encoding)
    d = int(np.prod(network.input_shape))
    if x.shape[0] != d:
        raise ShapeError(
            f"decoded input length {x.shape[0]} does not match network input "
            f"{network.input_shape}"
        )
    output, trace = forward(network, x.reshape(network.input_shape))
    pixel = propagate(network, trace, class_index, rule)
    pixel_flat = pixel.values.reshape(-1)
    u = encoding.coefficients
    r = dense_relevance(decoder.features, decoder.bias, u, pixel_flat, rule)
    check_finite(r, "feature relevance")
    label = None
    if network.class_labels and class_index < len(network.class_labels):
        label = network.class_labels[class_index]
    return RelevanceReport(
        feature_relevance=r,
        class_index=class_index,
        rule=rule,
        feature_kind=decoder.feature_kind,
        image_shape=decoder.image_shape,
        pixel_relevance=pixel,
        segment_labels=decoder.segment_labels,
        class_label=label,
        bias_relevance_absorbed=float(pixel_flat.sum() - r.sum()),
    )


def atom_support_masks(decoder: Decoder, threshold: float = 0.05) -> list[np.ndarray]:
    """Per-atom (H, W) masks where the atom's channel-max magnitude exceeds
    threshold * its peak magnitude."""
    if not 0 <= threshold <= 1:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    c, h, w = decoder.image_shape
    cols = np.abs(decoder.features.reshape(c, h, w, decoder.num_features))
    masks = []
    for j in range(decoder.num_features):
        mag = cols[..., j].max(axis=0)
        peak = mag.max()
        masks.append(mag > threshold * peak if peak > 0 else np.zeros((h, w), dtype=bool))
    return masks


def top_k_features(report: RelevanceReport, k: int) -> list[int]:
    """Feature ids sorted by descending relevance; ties break toward the
    smaller id so rankings are deterministic."""
    m = report.num_features
    if not 1 <= k <= m:
        raise ValueError(f"k must be in 1..{m}, got {k}")
    r = report.feature_relevance
    order = sorted(range(m), key=lambda i: (-r[i], i))
    return order[:k]


def stack_decoder(decoder: Decoder, network: Network) -> Network:
    """Materialize the decoder+network stack as a single network.

    Only possible when the network consumes a flat input; convolutional
    front ends are handled compositionally by mlfr_explain instead, since
    the layer set has no unflatten.
    """
    d = int(np.prod(network.input_shape))
    if network.input_shape != (d,):
        raise ShapeError(
            f"cannot stack a decoder onto input shape {network.input_shape}; "
            "only flat-input networks can be materialized"
        )
    head = Dense(weight=decoder.features, bias=decoder.bias)
    return Network(
        layers=(head,) + tuple(network.layers),
        input_shape=(decoder.num_features,),
        class_labels=network.class_labels,
    )


def _rule_json(rule: LrpRule) -> dict:
    if rule.kind == "epsilon":
        return {"kind": "epsilon", "epsilon": rule.epsilon}
    return {"kind": "alphabeta", "alpha": rule.alpha, "beta": rule.beta}


def report_to_json(report: RelevanceReport, atom_masks: list[np.ndarray] | None = None) -> dict:
    """JSON document for a relevance report (schema mlfr-report-v1).

    Segment features carry their pixel masks run-length encoded; atom
    features carry their id and, when provided, a thresholded support mask.
    """
    features = []
    if report.feature_kind == "segment":
        masks = report.segment_labels.masks()
        for j in range(report.num_features):
            features.append(
                {
                    "id": j,
                    "kind": "segment",
                    "relevance": float(report.feature_relevance[j]),
                    "mask_rle": rle_encode_mask(masks[j]),
                }
            )
    else:
        for j in range(report.num_features):
            rec = {
                "id": j,
                "kind": "atom",
                "relevance": float(report.feature_relevance[j]),
                "atom_id": j,
            }
            if atom_masks is not None:
                rec["mask_rle"] = rle_encode_mask(atom_masks[j])
            features.append(rec)
    doc = {
        "schema": "mlfr-report-v1",
        "class_index": int(report.class_index),
        "class_label": report.class_label,
        "rule": _rule_json(report.rule),
        "feature_kind": report.feature_kind,
        "image_shape": list(report.image_shape),
        "features": features,
        "bias_relevance_absorbed": float(report.bias_relevance_absorbed),
    }
    return doc


def report_json_dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
