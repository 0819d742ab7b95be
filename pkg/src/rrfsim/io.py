"""File formats: embedding files, manifests, pair lists, heatmap export.

Embedding file (.rrfe): 24-byte header (magic "RRFE", u32 version=1, u32 K,
u32 D, u64 layout fingerprint, all little-endian) followed by K*D IEEE-754
float32 little-endian values, row-major in layout position order. The
fingerprint is FNV-1a 64 over the canonical layout JSON (sorted keys, no
whitespace), so any two components can agree on it without sharing code.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DomainError,
    FormatError,
    LayoutMismatchError,
)
from .geometry import PatchLayout
from .metric import EmbeddingSet, SimilarityBreakdown
from .protocol import PairEntry, PairList

MAGIC = b"RRFE"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _U64
    return h


def canonical_layout_json(layout: PatchLayout) -> str:
    """The exact string the layout fingerprint is computed over."""
    return json.dumps(layout.to_dict(), sort_keys=True, separators=(",", ":"))


def layout_fingerprint(layout: PatchLayout) -> int:
    return fnv1a64(canonical_layout_json(layout).encode("utf-8"))


def write_embeddings(embeddings: EmbeddingSet, path):
    """Write one image's embedding matrix; see the module docstring format."""
    k, d = embeddings.matrix.shape
    header = _HEADER.pack(MAGIC, VERSION, k, d, embeddings.layout_fingerprint)
    payload = embeddings.matrix.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(header + payload)


def read_embeddings(path, expected_layout: PatchLayout, image_id: str | None = None) -> EmbeddingSet:
    """Read and validate an embedding file against the layout we expect.

    float32 values are widened to float64 exactly; all later arithmetic is
    64-bit. Rejects wrong magic/version, truncation, fingerprint mismatch,
    non-finite values and zero rows.
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, k, d, fingerprint = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if k < 1 or d < 1:
        raise FormatError(f"{path}: non-positive K={k} or D={d}")
    expected = layout_fingerprint(expected_layout)
    if fingerprint != expected:
        raise LayoutMismatchError(
            f"{path}: written under layout {fingerprint:#018x}, "
            f"expected {expected:#018x}"
        )
    if k != expected_layout.count:
        raise FormatError(f"{path}: K={k} but layout has {expected_layout.count}")
    want = k * d * 4
    if len(blob) - _HEADER.size != want:
        raise FormatError(
            f"{path}: payload is {len(blob) - _HEADER.size} bytes, expected {want}"
        )
    matrix = (
        np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
        .reshape(k, d)
        .astype(np.float64)
    )
    if not np.all(np.isfinite(matrix)):
        raise DataError(f"{path}: non-finite embedding values")
    return EmbeddingSet(
        image_id=image_id if image_id is not None else path.stem,
        matrix=matrix,
        layout_fingerprint=fingerprint,
    )


@dataclass(frozen=True)
class Manifest:
    """Index of an embedding store: layout + image id -> embedding file."""

    layout: PatchLayout
    images: dict[str, str]  # image id -> path relative to the manifest
    flip_policy: str = "none"
    embedder: str = ""

    def __post_init__(self):
        if self.flip_policy not in ("none", "merged"):
            raise DomainError(f"flip_policy must be none|merged, got {self.flip_policy!r}")


def write_manifest(manifest: Manifest, path):
    payload = {
        "layout": manifest.layout.to_dict(),
        "images": manifest.images,
        "flip_policy": manifest.flip_policy,
        "embedder": manifest.embedder,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
        manifest = Manifest(
            layout=PatchLayout.from_dict(d["layout"]),
            images={str(k): str(v) for k, v in d["images"].items()},
            flip_policy=str(d.get("flip_policy", "none")),
            embedder=str(d.get("embedder", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed manifest: {exc}") from exc
    base = path.parent
    missing = [rel for rel in manifest.images.values() if not (base / rel).exists()]
    if missing:
        raise FormatError(f"{path}: missing embedding files: {missing[:5]}")
    return manifest


def load_store(manifest_path) -> tuple[Manifest, dict[str, EmbeddingSet]]:
    """Load every embedding file referenced by a manifest, fully validated."""
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    base = manifest_path.parent
    store = {
        image_id: read_embeddings(base / rel, manifest.layout, image_id=image_id)
        for image_id, rel in sorted(manifest.images.items())
    }
    return manifest, store


_PAIRS_HEADER = ("id_a", "id_b", "label", "fold")


def load_pairs(path) -> PairList:
    """Parse an `id_a,id_b,label,fold` CSV (header optional, label 1/0)."""
    entries = []
    path = Path(path)
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if lineno == 1 and tuple(row) == _PAIRS_HEADER:
                continue
            if len(row) != 4:
                raise DataError(f"{path}: line {lineno}: expected 4 columns, got {len(row)}")
            id_a, id_b, label_s, fold_s = (c.strip() for c in row)
            if label_s not in ("0", "1"):
                raise DataError(f"{path}: line {lineno}: label must be 0 or 1, got {label_s!r}")
            try:
                fold = int(fold_s)
            except ValueError:
                raise DataError(f"{path}: line {lineno}: bad fold {fold_s!r}") from None
            if fold < 0:
                raise DataError(f"{path}: line {lineno}: negative fold {fold}")
            entries.append(PairEntry(id_a=id_a, id_b=id_b, label=int(label_s), fold=fold))
    if not entries:
        raise DataError(f"{path}: no pairs")
    return PairList(entries=tuple(entries))


def write_pairs(pairs: PairList, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for e in pairs.entries:
            writer.writerow([e.id_a, e.id_b, e.label, e.fold])


def export_heatmap(values, layout: PatchLayout, path, fmt: str = "csv"):
    """Write per-patch values aligned with layout positions.

    csv: header plus one `x,y,value` row per position, in layout order.
    pgm: binary 8-bit graymap; the position grid is min-max normalized and
    each cell is rendered as a patch-sized block (missing corner-excluded
    cells render black).
    """
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (layout.count,):
        raise DomainError(f"{v.shape[0]} values for {layout.count} positions")
    path = Path(path)
    if fmt == "csv":
        lines = ["x,y,value"]
        lines += [
            f"{x},{y},{val!r}" for (x, y), val in zip(layout.positions, v.tolist())
        ]
        path.write_text("\n".join(lines) + "\n")
        return
    if fmt == "pgm":
        ncols = (layout.width - layout.patch_width) // layout.stride + 1
        nrows = (layout.height - layout.patch_height) // layout.stride + 1
        lo, hi = float(np.min(v)), float(np.max(v))
        span = hi - lo
        grid = np.zeros((nrows, ncols), dtype=np.uint8)
        seen_cells = set()
        for (x, y), val in zip(layout.positions, v):
            cell = (y // layout.stride, x // layout.stride)
            if x % layout.stride or y % layout.stride or cell in seen_cells:
                raise DomainError(
                    f"position {(x, y)} does not map to a unique stride cell"
                )
            seen_cells.add(cell)
            level = 0 if span == 0.0 else int(round(255.0 * (val - lo) / span))
            grid[cell] = level
        cells = np.kron(grid, np.ones((layout.patch_height, layout.patch_width), dtype=np.uint8))
        header = f"P5\n{cells.shape[1]} {cells.shape[0]}\n255\n".encode("ascii")
        path.write_bytes(header + cells.tobytes(order="C"))
        return
    raise DomainError(f"unknown heatmap format {fmt!r} (expected csv or pgm)")


def export_contributions(breakdown: SimilarityBreakdown, path, scale: float = 1.0):
    """Contribution matrix as CSV, one row per patch index of image A.

    ``scale`` multiplies the displayed values (the additive identity holds at
    scale 1; other scales are cosmetic, for figure-style output).
    """
    if breakdown.mode != "rrfnet" or breakdown.contributions is None:
        raise DomainError("contribution export needs an rrfnet breakdown")
    rows = (breakdown.contributions * scale).tolist()
    text = "\n".join(",".join(repr(v) for v in row) for row in rows)
    Path(path).write_text(text + "\n")
