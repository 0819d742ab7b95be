"""The patch-layout contract shared with the verification component.

This module deliberately reimplements the layout JSON handling from the
published format description rather than importing the consumer package:
the canonical JSON string (sorted keys, no whitespace) and its 64-bit
FNV-1a hash are the interface, and an independent implementation keeps the
two sides honest about it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import LayoutJsonError

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class Layout:
    """Patch grid over an aligned image, as described by a layout JSON."""

    width: int
    height: int
    patch_width: int
    patch_height: int
    stride: int
    corner_exclusion: bool
    positions: tuple[tuple[int, int], ...]

    @property
    def count(self) -> int:
        return len(self.positions)

    def to_dict(self) -> dict:
        return {
            "W": self.width,
            "H": self.height,
            "w": self.patch_width,
            "h": self.patch_height,
            "stride": self.stride,
            "corner_exclusion": self.corner_exclusion,
            "positions": [[x, y] for x, y in self.positions],
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> int:
        return fnv1a64(self.canonical_json().encode("utf-8"))

    def mirror_permutation(self) -> tuple[int, ...]:
        """Index of the horizontally reflected position, per position."""
        index = {pos: i for i, pos in enumerate(self.positions)}
        span = self.width - self.patch_width
        perm = []
        for x, y in self.positions:
            mirrored = (span - x, y)
            if mirrored not in index:
                raise LayoutJsonError(
                    f"position {(x, y)} has no mirror counterpart {mirrored}"
                )
            perm.append(index[mirrored])
        return tuple(perm)


def from_dict(d: dict) -> Layout:
    try:
        layout = Layout(
            width=int(d["W"]),
            height=int(d["H"]),
            patch_width=int(d["w"]),
            patch_height=int(d["h"]),
            stride=int(d["stride"]),
            corner_exclusion=bool(d["corner_exclusion"]),
            positions=tuple((int(x), int(y)) for x, y in d["positions"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise LayoutJsonError(f"malformed layout JSON: {exc}") from exc
    for x, y in layout.positions:
        if not (0 <= x <= layout.width - layout.patch_width):
            raise LayoutJsonError(f"position x={x} outside the image")
        if not (0 <= y <= layout.height - layout.patch_height):
            raise LayoutJsonError(f"position y={y} outside the image")
    if len(set(layout.positions)) != layout.count or layout.count == 0:
        raise LayoutJsonError("positions must be unique and non-empty")
    return layout


def load(path) -> Layout:
    """Read a layout from a JSON file (either bare or under a 'layout' key)."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LayoutJsonError(f"{path}: {exc}") from exc
    if isinstance(payload, dict) and "layout" in payload and "W" not in payload:
        payload = payload["layout"]
    return from_dict(payload)
