"""Region-flipping MoRF curves and AOPC.

Each middle-level feature is one flipping region. Regions are flipped
cumulatively in the order given (most relevant first for the method
curve, shuffled for the random baseline); every flipped pixel is replaced
channel-wise with independent Uniform[0, 1] draws. The score drop at each
step is measured at the pre-softmax score of the chosen class.

RNG streams are derived from (master seed, image index, step index) so
batch order and concurrency never change results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Network, ShapeError, forward


@dataclass(frozen=True)
class MoRFCurve:
    """drops[k] = f(x_0) - f(x_k) for k = 0..L; drops[0] is always 0."""

    drops: tuple
    L: int
    seed: int
    ordering: str

    def __post_init__(self):
        drops = tuple(float(v) for v in self.drops)
        object.__setattr__(self, "drops", drops)
        if len(drops) != self.L + 1:
            raise ValueError(f"expected {self.L + 1} drops, got {len(drops)}")
        if drops[0] != 0.0:
            raise ValueError("drops[0] must be 0")
        if self.ordering not in ("relevance", "random"):
            raise ValueError(f"unknown ordering {self.ordering!r}")

    @property
    def mean_drop(self) -> float:
        return float(np.mean(self.drops))


@dataclass(frozen=True)
class AopcResult:
    aopc: float
    per_image_curves: tuple
    relative_to_random: float | None = None


def _step_rng(seed: int, image_index: int, step: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(image_index), int(step)])


def flip_region(image: np.ndarray, region: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Copy of image with every channel value of every region pixel
    replaced by an independent Uniform[0, 1] draw."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ShapeError(f"image must be (C, H, W), got shape {image.shape}")
    region = np.asarray(region, dtype=bool)
    if region.shape != image.shape[1:]:
        raise ShapeError(
            f"region mask shape {region.shape} does not match image plane {image.shape[1:]}"
        )
    out = image.copy()
    n = int(region.sum())
    if n:
        out[:, region] = rng.random((image.shape[0], n))
    return out


def _check_regions(image_plane, regions):
    cover = np.zeros(image_plane, dtype=np.int64)
    for i, region in enumerate(regions):
        region = np.asarray(region, dtype=bool)
        if region.shape != image_plane:
            raise ShapeError(
                f"region {i} shape {region.shape} does not match image plane {image_plane}"
            )
        cover += region
    if cover.max(initial=0) > 1:
        raise ValueError("regions must be pairwise disjoint")


def _class_score(network: Network, image, class_index: int) -> float:
    x = image
    if network.input_shape != image.shape:
        if int(np.prod(network.input_shape)) != image.size:
            raise ShapeError(
                f"image shape {image.shape} incompatible with network input "
                f"{network.input_shape}"
            )
        x = image.reshape(network.input_shape)
    out, _ = forward(network, x)
    if not 0 <= class_index < out.shape[0]:
        raise IndexError(f"class index {class_index} out of range for {out.shape[0]} outputs")
    return float(out[class_index])


def morf_curve(
    network: Network,
    image: np.ndarray,
    regions: list[np.ndarray],
    class_index: int,
    L: int,
    seed: int,
    image_index: int = 0,
    ordering: str = "relevance",
) -> MoRFCurve:
    """Flip the first L regions cumulatively, recording the score drop at
    every step. Regions must arrive pre-ordered (descending relevance for
    the method curve) and pairwise disjoint."""
    image = np.ascontiguousarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ShapeError(f"image must be (C, H, W), got shape {image.shape}")
    if not 0 <= L <= len(regions):
        raise ValueError(f"L must be in 0..{len(regions)}, got {L}")
    _check_regions(image.shape[1:], regions)
    f0 = _class_score(network, image, class_index)
    drops = [0.0]
    x = image
    for k in range(1, L + 1):
        x = flip_region(x, regions[k - 1], _step_rng(seed, image_index, k))
        drops.append(f0 - _class_score(network, x, class_index))
    return MoRFCurve(drops=tuple(drops), L=L, seed=seed, ordering=ordering)


def aopc(curves: list[MoRFCurve]) -> AopcResult:
    """Mean over images of the mean drop: (1/(L+1)) sum_k drops[k], averaged."""
    if not curves:
        raise ValueError("aopc requires at least one curve")
    L = curves[0].L
    if any(c.L != L for c in curves):
        raise ValueError("all curves must share the same L")
    return AopcResult(
        aopc=float(np.mean([c.mean_drop for c in curves])),
        per_image_curves=tuple(curves),
    )


def random_baseline(
    network: Network,
    image: np.ndarray,
    regions: list[np.ndarray],
    class_index: int,
    L: int,
    seeds: list[int],
    image_index: int = 0,
) -> AopcResult:
    """morf_curve with the region order drawn uniformly at random per
    seed, averaged over seeds. The order stream is (seed, image, 0); flip
    streams are the same (seed, image, step) used by morf_curve."""
    if not seeds:
        raise ValueError("random_baseline requires at least one seed")
    curves = []
    for seed in seeds:
        order = _step_rng(seed, image_index, 0).permutation(len(regions))
        shuffled = [regions[i] for i in order]
        curves.append(
            morf_curve(
                network,
                image,
                shuffled,
                class_index,
                L,
                seed,
                image_index=image_index,
                ordering="random",
            )
        )
    return aopc(curves)


def atom_flip_regions(
    decoder,
    order: list[int],
    threshold: float = 0.05,
) -> list[np.ndarray]:
    """Flipping regions for (spatially overlapping) dictionary atoms.

    An atom's region is its thresholded support; pixels claimed by an
    earlier (higher-relevance) atom are never re-flipped, which also makes
    the regions pairwise disjoint. Returned in the given order.
    """
    from .decoders import atom_support_masks

    masks = atom_support_masks(decoder, threshold)
    claimed = np.zeros(decoder.image_shape[1:], dtype=bool)
    regions = []
    for j in order:
        support = masks[j] & ~claimed
        claimed |= support
        regions.append(support)
    return regions


def segment_flip_regions(decoder, order: list[int]) -> list[np.ndarray]:
    """Segment masks in the given order (already disjoint by construction)."""
    masks = decoder.feature_masks()
    return [masks[j] for j in order]
