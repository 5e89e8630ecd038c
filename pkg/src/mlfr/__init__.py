"""Middle-level feature relevance: explain a feed-forward classifier in
terms of superpixels or dictionary atoms by stacking an input decoder on
the model and propagating relevance through the combined stack, plus
region-flipping MoRF/AOPC evaluation of the resulting explanations."""

from ._kernels import BACKEND
from .container import (
    BadMagicError,
    ContainerError,
    ManifestError,
    TruncatedPayloadError,
    UnsupportedVersionError,
    load_network,
    save_network,
)
from .decoders import (
    Decoder,
    RelevanceReport,
    atom_support_masks,
    dictionary_decoder,
    mlfr_explain,
    segmentation_decoder,
    stack_decoder,
    top_k_features,
)
from .dictlearn import (
    DictLearnConfig,
    Dictionary,
    Encoding,
    learn_dictionary,
    load_dictionary,
    save_dictionary,
    sparse_encode,
)
from .evaluation import (
    AopcResult,
    MoRFCurve,
    aopc,
    atom_flip_regions,
    flip_region,
    morf_curve,
    random_baseline,
    segment_flip_regions,
)
from .lrp import (
    DEFAULT_EPSILON,
    LrpRule,
    RelevanceMap,
    alphabeta_rule,
    epsilon_rule,
    propagate,
)
from .nn import (
    ActivationTrace,
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
from .segmentation import (
    QuickshiftParams,
    SegmentLabels,
    quickshift,
    relabel_compact,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ActivationTrace",
    "AopcResult",
    "BadMagicError",
    "ContainerError",
    "Conv2d",
    "DEFAULT_EPSILON",
    "Decoder",
    "Dense",
    "DictLearnConfig",
    "Dictionary",
    "Encoding",
    "Flatten",
    "LrpRule",
    "ManifestError",
    "MaxPool2d",
    "MoRFCurve",
    "Network",
    "NumericalError",
    "QuickshiftParams",
    "ReLU",
    "RelevanceMap",
    "RelevanceReport",
    "SegmentLabels",
    "ShapeError",
    "TruncatedPayloadError",
    "UnsupportedVersionError",
    "aopc",
    "alphabeta_rule",
    "atom_flip_regions",
    "atom_support_masks",
    "dictionary_decoder",
    "epsilon_rule",
    "flip_region",
    "forward",
    "learn_dictionary",
    "load_dictionary",
    "load_network",
    "mlfr_explain",
    "morf_curve",
    "propagate",
    "quickshift",
    "random_baseline",
    "relabel_compact",
    "save_dictionary",
    "save_network",
    "segment_flip_regions",
    "segmentation_decoder",
    "sparse_encode",
    "stack_decoder",
    "top_k_features",
]
