"""Patch-decomposed face similarity over restricted receptive fields.

Submodules: geometry (patch layouts), metric (similarity + decomposition),
fusion (weight learning / score combination), protocol (K-fold
verification), io (file formats), toyembed (synthetic benchmark + embedder),
kernels (compiled/numpy compute backends), cli.
"""

from .errors import RRFSimError
from .geometry import PatchLayout, layout_patches, mirror_map, shape_plan
from .kernels import backend
from .metric import (
    EmbeddingSet,
    SimilarityBreakdown,
    flip_merge,
    heatmap,
    local_similarity,
    mean_embedding,
    region_similarity,
    rrfnet_similarity_decomposed,
    rrfnet_similarity_direct,
)

__version__ = "0.1.0"

__all__ = [
    "EmbeddingSet",
    "PatchLayout",
    "RRFSimError",
    "SimilarityBreakdown",
    "backend",
    "flip_merge",
    "heatmap",
    "layout_patches",
    "local_similarity",
    "mean_embedding",
    "mirror_map",
    "region_similarity",
    "rrfnet_similarity_decomposed",
    "rrfnet_similarity_direct",
    "shape_plan",
    "__version__",
]
