"""Batch export: images directory -> one embedding file per image + manifest.

The manifest is written last, so its presence marks a completed export; a
rerun over a completed directory verifies and returns without recomputing
anything. Failures are collected per image and reported together.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ExportError, ImageError, PluginError
from .layout import Layout
from .rrfe import write_embedding_file

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".npy")


@dataclass(frozen=True)
class ExportResult:
    manifest_path: Path
    written: int
    skipped: bool


def discover_images(images_dir) -> dict[str, Path]:
    images_dir = Path(images_dir)
    if not images_dir.is_dir():
        raise ImageError(f"not a directory: {images_dir}")
    found = {}
    for path in sorted(images_dir.iterdir()):
        if path.suffix.lower() in IMAGE_SUFFIXES:
            if path.stem in found:
                raise ImageError(f"duplicate image id {path.stem!r}")
            found[path.stem] = path
    if not found:
        raise ImageError(f"no images under {images_dir}")
    return found


def load_image(path: Path) -> np.ndarray:
    """Load as (H, W, C) float32; pixel values are kept as stored (0..255)."""
    if path.suffix.lower() == ".npy":
        array = np.load(path)
    else:
        with Image.open(path) as img:
            array = np.asarray(img)
    array = np.asarray(array, dtype=np.float32)
    if array.ndim == 2:
        array = array[:, :, None]
    if array.ndim != 3:
        raise ImageError(f"{path}: expected 2-D or 3-D pixels, got {array.shape}")
    return array


def _extract(image: np.ndarray, layout: Layout) -> np.ndarray:
    w, h = layout.patch_width, layout.patch_height
    return np.stack([image[y : y + h, x : x + w] for x, y in layout.positions])


def _embed_patches(plugin, patches: np.ndarray, image_id: str) -> np.ndarray:
    batch_size = int(getattr(plugin, "batch_size", 1))
    rows = []
    if hasattr(plugin, "embed_batch"):
        for start in range(0, len(patches), batch_size):
            rows.append(np.asarray(plugin.embed_batch(patches[start : start + batch_size])))
        matrix = np.concatenate(rows, axis=0)
    else:
        matrix = np.stack([np.asarray(plugin(p)) for p in patches])
    if matrix.shape != (len(patches), plugin.dim):
        raise PluginError(
            f"{image_id}: plugin declared dim={plugin.dim} but produced "
            f"shape {matrix.shape} for {len(patches)} patches"
        )
    return matrix


def export(
    images_dir,
    layout: Layout,
    plugin,
    out_dir,
    flip: bool = False,
    plugin_label: str = "",
) -> ExportResult:
    """Run the plugin over every image and write the embedding store."""
    out_dir = Path(out_dir)
    images = discover_images(images_dir)
    manifest_path = out_dir / "manifest.json"
    manifest_payload = {
        "layout": layout.to_dict(),
        "images": {image_id: f"{image_id}.rrfe" for image_id in images},
        "flip_policy": "merged" if flip else "none",
        "embedder": plugin_label or f"{type(plugin).__module__}.{type(plugin).__qualname__}",
    }
    if manifest_path.exists():
        existing = json.loads(manifest_path.read_text())
        if existing != manifest_payload:
            raise ExportError(
                f"{manifest_path} exists with a different configuration; "
                f"remove it or export elsewhere"
            )
        missing = [
            rel for rel in existing["images"].values() if not (out_dir / rel).exists()
        ]
        if missing:
            raise ExportError(f"completed manifest but missing files: {missing[:5]}")
        return ExportResult(manifest_path=manifest_path, written=0, skipped=True)

    out_dir.mkdir(parents=True, exist_ok=True)
    fingerprint = layout.fingerprint()
    mirror = layout.mirror_permutation() if flip else None
    failures = []
    written = 0
    for image_id, path in images.items():
        try:
            image = load_image(path)
            if image.shape[:2] != (layout.height, layout.width):
                raise ImageError(
                    f"{path}: image is {image.shape[:2]}, layout wants "
                    f"({layout.height}, {layout.width})"
                )
            matrix = _embed_patches(plugin, _extract(image, layout), image_id)
            if flip:
                mirrored = _embed_patches(
                    plugin, _extract(image[:, ::-1, :], layout), image_id
                )
                matrix = matrix + mirrored[list(mirror)]
            write_embedding_file(out_dir / f"{image_id}.rrfe", matrix, fingerprint)
            written += 1
        except ExportError as exc:
            failures.append(f"{image_id}: {exc}")
    if failures:
        detail = "; ".join(failures[:10])
        raise ExportError(f"{len(failures)} image(s) failed: {detail}")
    manifest_path.write_text(
        json.dumps(manifest_payload, sort_keys=True, indent=2) + "\n"
    )
    return ExportResult(manifest_path=manifest_path, written=written, skipped=False)
