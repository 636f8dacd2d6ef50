"""Reduced-reference image quality analysis from contrast-histogram signatures."""

from .distances import DISTANCE_NAMES, DistanceVector, distance_vector
from .features import (
    DEFAULT_BINNING,
    BinningScheme,
    FeatureSet,
    StreamingExtractor,
    decode_signature,
    encode_signature,
    extract_features,
    extract_features_streaming,
)
from .imaging import sobel_gradients, to_luminance
from .scoring import cd2a_score, classify, distortion_map, render_heatmap

__all__ = [
    "BinningScheme",
    "DEFAULT_BINNING",
    "DISTANCE_NAMES",
    "DistanceVector",
    "FeatureSet",
    "StreamingExtractor",
    "cd2a_score",
    "classify",
    "decode_signature",
    "distance_vector",
    "distortion_map",
    "encode_signature",
    "extract_features",
    "extract_features_streaming",
    "render_heatmap",
    "sobel_gradients",
    "to_luminance",
]
