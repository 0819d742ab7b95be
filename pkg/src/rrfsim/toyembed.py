"""Deterministic synthetic identities and a fixed-projection patch embedder.

Lets the whole pipeline (embed, fuse, verify, explain) run with no trained
model: each identity is a random image template, each image is the template
plus seeded within-identity noise, and the embedder is a fixed seeded affine
projection from patch pixels to D dimensions. Identity structure therefore
survives into embedding space by construction, which is all the metric and
protocol layers need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .geometry import PatchLayout, mirror_map
from .io import layout_fingerprint
from .metric import EmbeddingSet, flip_merge
from .protocol import PairEntry, PairList

# stream tags for per-purpose RNGs derived from one user seed
_STREAM_TEMPLATE = 1
_STREAM_NOISE = 2
_STREAM_PAIRS = 3
_STREAM_AUGMENT = 4
_STREAM_PROJECTION = 101

# keeps masked (all-zero) patches away from the zero embedding
_OFFSET_SCALE = 0.05


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(key)))


@dataclass(frozen=True)
class ToyEmbedder:
    """Fixed random affine projection from patch pixels to ``dim`` features."""

    seed: int
    dim: int = 512

    def projection(self, patch_width: int, patch_height: int, channels: int):
        return _projection(self.seed, self.dim, patch_width, patch_height, channels)

    def describe(self) -> str:
        return f"toy-projection(seed={self.seed},dim={self.dim})"


@lru_cache(maxsize=16)
def _projection(seed, dim, patch_width, patch_height, channels):
    n_pixels = patch_width * patch_height * channels
    rng = _rng(seed, _STREAM_PROJECTION, patch_width, patch_height, channels, dim)
    matrix = rng.standard_normal((n_pixels, dim)) / math.sqrt(n_pixels)
    offset = rng.standard_normal(dim) * _OFFSET_SCALE
    matrix.setflags(write=False)
    offset.setflags(write=False)
    return matrix, offset


def _extract_patches(image: np.ndarray, layout: PatchLayout) -> np.ndarray:
    w, h = layout.patch_width, layout.patch_height
    return np.stack(
        [image[y : y + h, x : x + w].reshape(-1) for x, y in layout.positions]
    )


def embed(
    embedder: ToyEmbedder,
    image: np.ndarray,
    layout: PatchLayout,
    flip: bool = False,
    image_id: str = "",
) -> EmbeddingSet:
    """Project every layout patch of an (H, W, C) image to ``dim`` features.

    With ``flip`` the horizontally mirrored image is embedded as well,
    re-indexed through the layout's mirror map so row i still describes
    position i, and merged by row-wise sum. Values are quantized to float32
    so an embed -> write -> read cycle is lossless.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[:2] != (layout.height, layout.width):
        raise DomainError(
            f"image shape {image.shape} does not match layout "
            f"({layout.height}, {layout.width}, C)"
        )
    matrix, offset = embedder.projection(
        layout.patch_width, layout.patch_height, image.shape[2]
    )

    def project(img: np.ndarray) -> np.ndarray:
        feats = _extract_patches(img, layout).astype(np.float64) @ matrix + offset
        return feats.astype(np.float32)

    fingerprint = layout_fingerprint(layout)
    base = EmbeddingSet(
        image_id=image_id, matrix=project(image), layout_fingerprint=fingerprint
    )
    if not flip:
        return base
    perm = np.array(mirror_map(layout).pairs)
    mirrored = project(image[:, ::-1, :])[perm]
    return flip_merge(
        base,
        EmbeddingSet(
            image_id=image_id, matrix=mirrored, layout_fingerprint=fingerprint
        ),
    )


def augment(
    image: np.ndarray,
    layout: PatchLayout,
    shift: tuple[int, int] | None = None,
    shift_range: int = 5,
    mask_ratio: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """Training-style augmentation: integer shift plus patch masking.

    The image is shifted by ``shift`` pixels (drawn uniformly from
    [-shift_range, shift_range]^2 when not given) with edge replication,
    then floor(mask_ratio * K) patches, picked by a seeded draw over layout
    positions, are zero-filled.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[:2] != (layout.height, layout.width):
        raise DomainError(f"image shape {image.shape} does not match layout")
    if shift_range < 0:
        raise DomainError(f"shift_range must be nonnegative, got {shift_range}")
    if shift is None:
        shift_rng = _rng(seed, _STREAM_AUGMENT, 0)
        dx, dy = (
            (0, 0)
            if shift_range == 0
            else tuple(shift_rng.integers(-shift_range, shift_range + 1, size=2))
        )
    else:
        dx, dy = shift
        if abs(dx) > shift_range or abs(dy) > shift_range:
            raise DomainError(f"shift {shift} outside +-{shift_range}")

    height, width = image.shape[:2]
    ys = np.clip(np.arange(height) - dy, 0, height - 1)
    xs = np.clip(np.arange(width) - dx, 0, width - 1)
    out = image[np.ix_(ys, xs)].copy()

    w, h = layout.patch_width, layout.patch_height
    for i in masked_patch_indices(layout, mask_ratio, seed):
        x, y = layout.positions[i]
        out[y : y + h, x : x + w] = 0
    return out


def masked_patch_indices(
    layout: PatchLayout, mask_ratio: float, seed: int = 0
) -> tuple[int, ...]:
    """The floor(mask_ratio * K) position indices augment zero-fills."""
    if not 0.0 <= mask_ratio <= 1.0:
        raise DomainError(f"mask_ratio must be in [0, 1], got {mask_ratio}")
    n_masked = int(mask_ratio * layout.count)
    if not n_masked:
        return ()
    rng = _rng(seed, _STREAM_AUGMENT, 1)
    return tuple(
        int(i) for i in rng.choice(layout.count, size=n_masked, replace=False)
    )


@dataclass(frozen=True)
class SyntheticIdentity:
    """One synthetic person: a latent template images are noised from."""

    id: str
    template: np.ndarray  # (H, W, C) latent signal, shared by all images
    noise_scale: object  # scalar or per-pixel array actually applied

    def __post_init__(self):
        self.template.setflags(write=False)


@dataclass(frozen=True)
class ToyBenchmark:
    """A generated verification benchmark, all in memory."""

    images: dict[str, np.ndarray]  # image id -> (H, W, C) float32
    identities: dict[str, str]  # image id -> identity id
    identity_bank: dict[str, SyntheticIdentity]
    pairs: PairList
    train_pairs: PairList | None
    config: dict = field(default_factory=dict)


def _per_patch_sigma_map(sigmas: np.ndarray, layout: PatchLayout) -> np.ndarray:
    if sigmas.shape != (layout.count,):
        raise DomainError(
            f"{sigmas.shape[0]} noise scales for {layout.count} patches"
        )
    if np.any(sigmas < 0):
        raise DomainError("noise scales must be nonnegative")
    if layout.stride < layout.patch_width or layout.stride < layout.patch_height:
        raise DomainError(
            "per-patch noise needs non-overlapping patches (stride >= patch size)"
        )
    grid = np.full((layout.height, layout.width, 1), float(np.mean(sigmas)))
    w, h = layout.patch_width, layout.patch_height
    for (x, y), s in zip(layout.positions, sigmas):
        grid[y : y + h, x : x + w, 0] = s
    return grid


def generate_benchmark(
    n_ids: int,
    imgs_per_id: int,
    layout: PatchLayout,
    sigma_w,
    seed: int,
    channels: int = 1,
    train_ids: int = 0,
    fold_count: int = 10,
) -> ToyBenchmark:
    """Create identities, images, and balanced genuine/impostor pairs.

    ``sigma_w`` is the within-identity noise scale: a scalar, or one value
    per patch position (heterogeneous noise; needs a non-overlapping
    layout). The first ``train_ids`` identities feed ``train_pairs`` for
    fusion fitting and never appear in the evaluation pairs, which are split
    round-robin into ``fold_count`` folds after a seeded shuffle.
    """
    if n_ids < 2 or imgs_per_id < 2:
        raise DomainError("need n_ids >= 2 and imgs_per_id >= 2")
    if not 0 <= train_ids <= n_ids - 2:
        raise DomainError(f"train_ids must leave >= 2 eval identities, got {train_ids}")
    if fold_count < 2:
        raise DomainError(f"fold_count must be >= 2, got {fold_count}")
    if channels < 1:
        raise DomainError(f"channels must be >= 1, got {channels}")

    if np.isscalar(sigma_w):
        if sigma_w < 0:
            raise DomainError(f"noise scale must be nonnegative, got {sigma_w}")
        sigma = float(sigma_w)
        sigma_echo = sigma
    else:
        sigma = _per_patch_sigma_map(np.asarray(sigma_w, dtype=np.float64), layout)
        sigma_echo = list(np.asarray(sigma_w, dtype=np.float64))

    shape = (layout.height, layout.width, channels)
    images: dict[str, np.ndarray] = {}
    identities: dict[str, str] = {}
    identity_bank: dict[str, SyntheticIdentity] = {}
    by_identity: dict[str, list[str]] = {}
    for i in range(n_ids):
        identity = f"p{i:03d}"
        template = _rng(seed, _STREAM_TEMPLATE, i).standard_normal(shape)
        identity_bank[identity] = SyntheticIdentity(
            id=identity, template=template, noise_scale=sigma
        )
        members = []
        for j in range(imgs_per_id):
            image_id = f"{identity}_{j:02d}"
            noise = _rng(seed, _STREAM_NOISE, i, j).standard_normal(shape)
            images[image_id] = (template + sigma * noise).astype(np.float32)
            identities[image_id] = identity
            members.append(image_id)
        by_identity[identity] = members

    ordered = sorted(by_identity)
    train_set = ordered[:train_ids]
    eval_set = ordered[train_ids:]

    def build_pairs(id_subset: list[str], stream: int) -> PairList:
        genuine = [
            (a, b)
            for identity in id_subset
            for ai, a in enumerate(by_identity[identity])
            for b in by_identity[identity][ai + 1 :]
        ]
        rng = _rng(seed, _STREAM_PAIRS, stream)
        impostor: list[tuple[str, str]] = []
        seen = set()
        while len(impostor) < len(genuine):
            ia, ib = rng.integers(0, len(id_subset), size=2)
            if ia == ib:
                continue
            a = by_identity[id_subset[ia]][rng.integers(0, imgs_per_id)]
            b = by_identity[id_subset[ib]][rng.integers(0, imgs_per_id)]
            key = (a, b) if a < b else (b, a)
            if key in seen:
                continue
            seen.add(key)
            impostor.append(key)
        labelled = [(a, b, 1) for a, b in genuine] + [(a, b, 0) for a, b in impostor]
        order = rng.permutation(len(labelled))
        return PairList(
            entries=tuple(
                PairEntry(*labelled[k], fold=pos % fold_count)
                for pos, k in enumerate(order)
            )
        )

    pairs = build_pairs(eval_set, stream=0)
    train_pairs = build_pairs(train_set, stream=1) if train_ids >= 2 else None
    config = {
        "n_ids": n_ids,
        "imgs_per_id": imgs_per_id,
        "sigma_w": sigma_echo,
        "seed": seed,
        "channels": channels,
        "train_ids": train_ids,
        "fold_count": fold_count,
    }
    return ToyBenchmark(
        images=images,
        identities=identities,
        identity_bank=identity_bank,
        pairs=pairs,
        train_pairs=train_pairs,
        config=config,
    )
