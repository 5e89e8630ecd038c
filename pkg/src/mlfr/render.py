"""Rendering: overlays of selected features, diverging relevance heatmaps,
and PNG/array conversions.

Images travel as (channels, height, width) float64 in [0, 1]. Overlay
pixels that belong to selected features keep their float values untouched,
so the round trip back to 8-bit PNG reproduces the input bytes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .decoders import RelevanceReport, top_k_features
from .segmentation import SegmentLabels


@dataclass(frozen=True)
class OverlaySpec:
    top_k: int = 3
    dim_factor: float = 0.3
    outline: bool = False

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError(f"top_k must be positive, got {self.top_k}")
        if not 0.0 <= self.dim_factor <= 1.0:
            raise ValueError(f"dim_factor must lie in [0, 1], got {self.dim_factor}")


@dataclass(frozen=True)
class HeatmapSpec:
    """Signed diverging map: negative relevance in blue, positive in red,
    zero exactly white; normalized symmetrically by max |r|."""

    positive_color: tuple = (1.0, 0.0, 0.0)
    negative_color: tuple = (0.0, 0.0, 1.0)


def load_image(path) -> np.ndarray:
    """PNG (or any PIL-readable) file to (C, H, W) float64 in [0, 1].
    Alpha channels are dropped."""
    with Image.open(path) as img:
        if img.mode in ("RGBA", "P", "LA"):
            img = img.convert("RGB")
        elif img.mode not in ("RGB", "L"):
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = arr.transpose(2, 0, 1)
    return np.ascontiguousarray(arr)


def save_image(image: np.ndarray, path) -> None:
    """(C, H, W) floats in [0, 1] to an 8-bit PNG."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    data = np.rint(arr * 255.0).astype(np.uint8)
    if data.shape[0] == 1:
        img = Image.fromarray(data[0], mode="L")
    elif data.shape[0] == 3:
        img = Image.fromarray(data.transpose(1, 2, 0), mode="RGB")
    else:
        raise ValueError(f"can only write 1- or 3-channel images, got {data.shape[0]}")
    img.save(Path(path), format="PNG")


def adapt_channels(image: np.ndarray, channels: int) -> np.ndarray:
    """Match an image's channel count to what a model expects: replicate
    grayscale, or reduce RGB to luminance."""
    c = image.shape[0]
    if c == channels:
        return image
    if c == 1:
        return np.ascontiguousarray(np.repeat(image, channels, axis=0))
    if c == 3 and channels == 1:
        lum = 0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2]
        return np.ascontiguousarray(lum[None])
    raise ValueError(f"cannot adapt a {c}-channel image to {channels} channels")


def selected_mask(
    masks: list[np.ndarray], report: RelevanceReport, top_k: int
) -> np.ndarray:
    ids = top_k_features(report, top_k)
    out = np.zeros_like(masks[0], dtype=bool)
    for j in ids:
        out |= masks[j]
    return out


def render_overlay(image: np.ndarray, mask: np.ndarray, spec: OverlaySpec) -> np.ndarray:
    """Dim everything outside the mask; masked pixels are returned
    bit-identical to the input."""
    out = image * spec.dim_factor
    out[:, mask] = image[:, mask]
    if spec.outline:
        border = _dilate(mask) & ~mask
        if image.shape[0] == 3:
            out[0, border], out[1, border], out[2, border] = 1.0, 0.85, 0.1
        else:
            out[:, border] = 1.0
    return out


def _dilate(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def render_heatmap(values: np.ndarray, spec: HeatmapSpec = HeatmapSpec()) -> np.ndarray:
    """(H, W) signed values to a (3, H, W) diverging RGB image."""
    values = np.asarray(values, dtype=np.float64)
    peak = np.abs(values).max()
    t = values / peak if peak > 0 else np.zeros_like(values)
    out = np.ones((3, *values.shape))
    pos = np.maximum(t, 0.0)
    neg = np.maximum(-t, 0.0)
    for ch in range(3):
        out[ch] -= pos * (1.0 - spec.positive_color[ch])
        out[ch] -= neg * (1.0 - spec.negative_color[ch])
    return out


def pixel_heatmap(report: RelevanceReport) -> np.ndarray:
    """Diverging heatmap of the report's pixel relevance, summed over
    channels."""
    if report.pixel_relevance is None:
        raise ValueError("report carries no pixel relevance")
    values = report.pixel_relevance.values
    if values.ndim == 1:
        values = values.reshape(report.image_shape)
    return render_heatmap(values.sum(axis=0))


def labels_to_image(seg: SegmentLabels) -> np.ndarray:
    """One gray level per segment id; only sensible for small m."""
    m = seg.segment_count
    if m == 1:
        gray = np.zeros_like(seg.labels, dtype=np.float64)
    else:
        gray = seg.labels / (m - 1)
    return gray[None, :, :]
