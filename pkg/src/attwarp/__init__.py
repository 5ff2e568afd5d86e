"""Attention-guided rectilinear image warping.

Expands image regions that hold high query-conditioned attention and
compresses the rest, via axis-wise inverse-CDF resampling. Includes iterative
refinement with a KL stopping rule, exact inverse mapping for coordinates and
boxes, and localization/expansion metrics.
"""

__version__ = "0.1.0"

from .aggregation import (
    LAYER_PRESETS,
    AttentionScoreMatrix,
    RawAttentionTensor,
    SharpnessTransform,
    aggregate,
    postprocess,
)
from .chains import ChainConfig, ChainTrace, kl_divergence, run_chain
from .metrics import expansion_stats, pointing_game, proportion
from .warp import (
    AxisCdf,
    AxisProfile,
    BoundingBox,
    WarpField,
    WarpedImage,
    build_warp,
    cdf,
    compose_fields,
    field_from_attention,
    marginals,
    warp_box_forward,
    warp_box_inverse,
    warp_image,
)

__all__ = [
    "LAYER_PRESETS",
    "AttentionScoreMatrix",
    "AxisCdf",
    "AxisProfile",
    "BoundingBox",
    "ChainConfig",
    "ChainTrace",
    "RawAttentionTensor",
    "SharpnessTransform",
    "WarpField",
    "WarpedImage",
    "aggregate",
    "build_warp",
    "cdf",
    "compose_fields",
    "expansion_stats",
    "field_from_attention",
    "kl_divergence",
    "marginals",
    "pointing_game",
    "postprocess",
    "proportion",
    "run_chain",
    "warp_box_forward",
    "warp_box_inverse",
    "warp_image",
]
