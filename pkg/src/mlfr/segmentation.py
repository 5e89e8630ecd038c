"""Quickshift superpixel segmentation.

Pixels are embedded in a joint space of ratio-scaled color and position;
a Parzen density with Gaussian kernel of bandwidth kernel_size is
estimated over a window of 3 * kernel_size, and every pixel links to its
nearest strictly-denser neighbor within max_dist. Link forests are the
segments. Distance ties keep the first candidate in row-major order, so
constant-density plateaus fragment into per-pixel segments rather than
merging arbitrarily.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import quickshift_density, quickshift_link


@dataclass(frozen=True)
class QuickshiftParams:
    """kernel_size: density bandwidth; max_dist: link cutoff in joint
    distance; ratio: color-vs-space weighting in (0, 1]; jitter: stddev of
    optional seeded color noise (0 disables it)."""

    kernel_size: float = 4.0
    max_dist: float = 200.0
    ratio: float = 0.2
    seed: int = 0
    jitter: float = 0.0

    def __post_init__(self):
        if not self.kernel_size > 0:
            raise ValueError(f"kernel_size must be > 0, got {self.kernel_size}")
        if not self.max_dist > 0:
            raise ValueError(f"max_dist must be > 0, got {self.max_dist}")
        if not 0 < self.ratio <= 1:
            raise ValueError(f"ratio must be in (0, 1], got {self.ratio}")
        if self.jitter < 0:
            raise ValueError(f"jitter must be >= 0, got {self.jitter}")
        if self.seed < 0:
            raise ValueError(f"seed must be unsigned, got {self.seed}")


@dataclass(frozen=True)
class SegmentLabels:
    """Partition of an image grid: labels in 0..segment_count-1, each used."""

    labels: np.ndarray
    segment_count: int

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 2:
            raise ValueError(f"labels must be a (height, width) grid, got {labels.shape}")
        present = np.unique(labels)
        if not np.array_equal(present, np.arange(self.segment_count)):
            raise ValueError(
                f"labels must take exactly the values 0..{self.segment_count - 1}"
            )

    def masks(self) -> list[np.ndarray]:
        return [self.labels == h for h in range(self.segment_count)]


def relabel_compact(labels: np.ndarray) -> SegmentLabels:
    """Renumber arbitrary integer labels to 0..m-1 in first-occurrence
    raster order, preserving the partition structure."""
    labels = np.asarray(labels)
    flat = labels.reshape(-1)
    mapping: dict[int, int] = {}
    out = np.empty(flat.shape, dtype=np.int64)
    for i, v in enumerate(flat.tolist()):
        idx = mapping.get(v)
        if idx is None:
            idx = len(mapping)
            mapping[v] = idx
        out[i] = idx
    return SegmentLabels(labels=out.reshape(labels.shape), segment_count=len(mapping))


def quickshift(image: np.ndarray, params: QuickshiftParams) -> SegmentLabels:
    """Segment a (channels, height, width) image with values in [0, 1]."""
    image = np.ascontiguousarray(image, dtype=np.float64)
    if image.ndim != 3 or image.size == 0:
        raise ValueError(f"image must be non-empty (C, H, W), got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    _, h, w = image.shape

    color = image * params.ratio
    if params.jitter > 0.0:
        rng = np.random.default_rng(params.seed)
        color = color + rng.normal(scale=params.jitter, size=color.shape)
    color = np.ascontiguousarray(color)

    density_radius = int(math.ceil(3.0 * params.kernel_size))
    density = quickshift_density(color, params.kernel_size, density_radius)

    link_radius = min(int(math.ceil(params.max_dist)), max(h, w))
    parent = quickshift_link(color, density, params.max_dist, link_radius)

    return relabel_compact(_resolve_roots(parent).reshape(h, w))


def _resolve_roots(parent: np.ndarray) -> np.ndarray:
    """Follow parent links to the root of each tree (path-compressed)."""
    root = parent.copy()
    for i in range(root.shape[0]):
        j = i
        path = []
        while root[j] != j:
            path.append(j)
            j = root[j]
        for p in path:
            root[p] = j
    return root


def rle_encode_mask(mask: np.ndarray) -> list[int]:
    """Run lengths of a flattened boolean mask, alternating and starting
    with a run of zeros (which may be empty)."""
    flat = np.asarray(mask, dtype=bool).reshape(-1)
    runs = []
    current = False
    count = 0
    for v in flat.tolist():
        if v == current:
            count += 1
        else:
            runs.append(count)
            current = v
            count = 1
    runs.append(count)
    return runs


def rle_decode_mask(runs: list[int], size: int) -> np.ndarray:
    out = np.zeros(size, dtype=bool)
    pos = 0
    value = False
    for count in runs:
        if value:
            out[pos : pos + count] = True
        pos += count
        value = not value
    if pos != size:
        raise ValueError(f"run lengths sum to {pos}, expected {size}")
    return out


def labels_to_json(seg: SegmentLabels) -> dict:
    """Run-length-encoded label map as a JSON-ready document."""
    flat = seg.labels.reshape(-1).tolist()
    runs = []
    prev = flat[0]
    count = 0
    for v in flat:
        if v == prev:
            count += 1
        else:
            runs.append([prev, count])
            prev = v
            count = 1
    runs.append([prev, count])
    return {
        "schema": "mlfr-labels-v1",
        "height": int(seg.labels.shape[0]),
        "width": int(seg.labels.shape[1]),
        "segment_count": int(seg.segment_count),
        "labels_rle": runs,
    }


def labels_from_json(doc: dict) -> SegmentLabels:
    h, w = int(doc["height"]), int(doc["width"])
    flat = np.empty(h * w, dtype=np.int64)
    pos = 0
    for value, count in doc["labels_rle"]:
        flat[pos : pos + count] = value
        pos += count
    if pos != h * w:
        raise ValueError("labels_rle does not cover the full grid")
    return SegmentLabels(labels=flat.reshape(h, w), segment_count=int(doc["segment_count"]))
