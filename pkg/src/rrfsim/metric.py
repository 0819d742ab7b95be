"""Patch-level similarity metrics and their additive decompositions.

Two global metrics over per-patch embeddings:

* region-based: a weighted sum of the K position-wise cosine similarities,
  with weights from a fitted FusionModel;
* mean-embedding ("rrfnet" mode): cosine between the means of the two patch
  matrices, which expands exactly into a normalized sum over all K*K
  patch-pair dot products. The K*K terms of that expansion are the
  contribution matrix; its entries sum to the global score and explain it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    DataError,
    DegenerateEmbeddingError,
    DomainError,
    IncompatibilityError,
)


@dataclass(frozen=True)
class EmbeddingSet:
    """Per-image K x D matrix of patch feature vectors, row i = position i.

    Immutable after construction; the matrix is stored float64 and marked
    read-only. Zero rows are rejected because every metric divides by row
    or mean norms.
    """

    image_id: str
    matrix: np.ndarray
    layout_fingerprint: int = 0

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise DomainError(f"embedding matrix must be 2-D non-empty, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DataError(f"non-finite values in embeddings for {self.image_id!r}")
        if np.any(~m.any(axis=1)):
            rows = np.flatnonzero(~m.any(axis=1)).tolist()
            raise DegenerateEmbeddingError(
                f"zero embedding rows {rows} in {self.image_id!r}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def patch_count(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class SimilarityBreakdown:
    """Global score plus the additive terms it decomposes into.

    region_based: ``local_scores[i]`` is the cosine at position i and
    ``weighted_terms[i] = weight_i * local_scores[i]``; the global score is
    their sum plus the model bias.

    rrfnet: ``contributions[i, j]`` is the share of patch pair (i of A,
    j of B); the K*K entries sum to the global score.
    """

    mode: str
    global_score: float
    local_scores: np.ndarray | None = None
    weighted_terms: np.ndarray | None = None
    bias: float = 0.0
    contributions: np.ndarray | None = None

    @property
    def patch_count(self) -> int:
        if self.mode == "rrfnet":
            return self.contributions.shape[0]
        return self.local_scores.shape[0]


def _check_compatible(a: EmbeddingSet, b: EmbeddingSet):
    if a.matrix.shape != b.matrix.shape:
        raise IncompatibilityError(
            f"embedding shapes differ: {a.matrix.shape} vs {b.matrix.shape}"
        )
    if a.layout_fingerprint != b.layout_fingerprint:
        raise IncompatibilityError(
            f"layout fingerprints differ: {a.layout_fingerprint:#018x} "
            f"vs {b.layout_fingerprint:#018x}"
        )


def local_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two single patch embeddings."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise IncompatibilityError(f"vector shapes differ: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DataError("non-finite vector")
    if not a.any() or not b.any():
        raise DegenerateEmbeddingError("zero vector has no direction")
    return kernels.vec_cosine(a, b)


def region_similarity(a: EmbeddingSet, b: EmbeddingSet, model) -> SimilarityBreakdown:
    """Weighted sum of position-wise cosines between two embedding sets.

    ``model`` is a FusionModel (duck-typed: ``weights`` and ``bias``); the
    global score is the raw fused logit sum(w_i * local_i) + bias.
    """
    _check_compatible(a, b)
    weights = np.asarray(model.weights, dtype=np.float64)
    if weights.shape != (a.patch_count,):
        raise IncompatibilityError(
            f"model has {weights.shape[0]} weights for {a.patch_count} patches"
        )
    locals_ = kernels.row_cosines(a.matrix, b.matrix)
    terms = weights * locals_
    score = float(np.sum(terms) + model.bias)
    return SimilarityBreakdown(
        mode="region_based",
        global_score=score,
        local_scores=locals_,
        weighted_terms=terms,
        bias=float(model.bias),
    )


def mean_embedding(a: EmbeddingSet) -> np.ndarray:
    """Mean of the K patch feature vectors."""
    return np.sum(a.matrix, axis=0) / a.patch_count


def rrfnet_similarity_direct(a: EmbeddingSet, b: EmbeddingSet) -> float:
    """Cosine between the two mean embeddings."""
    _check_compatible(a, b)
    fa = mean_embedding(a)
    fb = mean_embedding(b)
    na = float(np.linalg.norm(fa))
    nb = float(np.linalg.norm(fb))
    if na == 0.0 or nb == 0.0:
        raise DegenerateEmbeddingError("zero mean embedding")
    return kernels.vec_cosine(fa, fb)


def rrfnet_similarity_decomposed(a: EmbeddingSet, b: EmbeddingSet) -> SimilarityBreakdown:
    """Mean-embedding cosine computed through its patch-pair expansion.

    Computes the K x K cross dot-product matrix G[i, j] = f_i^A . f_j^B and
    the two self totals sum_ij(f_i . f_j); the global score is
    sum(G) / sqrt(self_a * self_b) and contribution [i, j] is G[i, j] scaled
    by the same denominator, so the contributions sum to the score exactly.
    """
    _check_compatible(a, b)
    cross = kernels.pair_dot_matrix(a.matrix, b.matrix)
    self_a = kernels.sum_all(kernels.pair_dot_matrix(a.matrix, a.matrix))
    self_b = kernels.sum_all(kernels.pair_dot_matrix(b.matrix, b.matrix))
    if self_a <= 0.0 or self_b <= 0.0:
        raise DegenerateEmbeddingError("zero mean embedding (self gram sum <= 0)")
    denom = math.sqrt(self_a) * math.sqrt(self_b)
    contributions = cross / denom
    contributions.setflags(write=False)
    return SimilarityBreakdown(
        mode="rrfnet",
        global_score=kernels.sum_all(cross) / denom,
        contributions=contributions,
    )


def heatmap(breakdown: SimilarityBreakdown, side: str = "A") -> np.ndarray:
    """Per-patch aggregate of a breakdown, aligned with layout positions.

    rrfnet: row sums of the contribution matrix for side A, column sums for
    side B; either sums to the global score. region_based: the weighted
    per-position terms (identical for both sides); they sum to the global
    score minus the model bias.
    """
    if side not in ("A", "B"):
        raise DomainError(f"side must be 'A' or 'B', got {side!r}")
    if breakdown.mode == "rrfnet":
        if side == "A":
            return kernels.row_sums(breakdown.contributions)
        return kernels.col_sums(breakdown.contributions)
    return np.array(breakdown.weighted_terms)


def flip_merge(e: EmbeddingSet, e_flipped: EmbeddingSet) -> EmbeddingSet:
    """Merge an image's embeddings with its mirrored pass by row-wise sum.

    ``e_flipped`` must already be re-indexed through the layout's mirror map
    so its row i describes position i (see toyembed.embed). Summing rather
    than averaging is cosine-equivalent and keeps integer-friendly values.
    """
    _check_compatible(e, e_flipped)
    return EmbeddingSet(
        image_id=e.image_id,
        matrix=e.matrix + e_flipped.matrix,
        layout_fingerprint=e.layout_fingerprint,
    )
