"""Patch grid layouts over aligned face images, mirror maps, shape arithmetic.

Positions are top-left pixel coordinates of ``patch_width x patch_height``
windows on a ``width x height`` image, laid out row-major (y, then x) on a
regular stride grid. Optionally every window that touches one of the four
28x28 corner squares is dropped; that single rule yields the 33-patch and
5-patch configurations used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import AsymmetricLayoutError, DomainError, LayoutError

# Side of the square corner regions removed by corner exclusion.
CORNER_SIDE = 28


@dataclass(frozen=True)
class PatchLayout:
    """A set of restricted receptive fields over one image geometry."""

    width: int
    height: int
    patch_width: int
    patch_height: int
    stride: int
    corner_exclusion: bool
    positions: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not (0 < self.patch_width <= self.width):
            raise DomainError(
                f"patch width {self.patch_width} outside (0, {self.width}]"
            )
        if not (0 < self.patch_height <= self.height):
            raise DomainError(
                f"patch height {self.patch_height} outside (0, {self.height}]"
            )
        if self.stride <= 0:
            raise LayoutError(f"stride must be positive, got {self.stride}")
        seen = set()
        for x, y in self.positions:
            if not (0 <= x <= self.width - self.patch_width):
                raise LayoutError(f"x={x} puts a patch outside the image")
            if not (0 <= y <= self.height - self.patch_height):
                raise LayoutError(f"y={y} puts a patch outside the image")
            if (x, y) in seen:
                raise LayoutError(f"duplicate position {(x, y)}")
            seen.add((x, y))
        ordered = tuple(sorted(self.positions, key=lambda p: (p[1], p[0])))
        if tuple(self.positions) != ordered:
            raise LayoutError("positions must be sorted row-major (y, then x)")

    @property
    def count(self) -> int:
        """Number of patch positions (K)."""
        return len(self.positions)

    def to_dict(self) -> dict:
        """Plain-JSON form used by manifests and layout files."""
        return {
            "W": self.width,
            "H": self.height,
            "w": self.patch_width,
            "h": self.patch_height,
            "stride": self.stride,
            "corner_exclusion": self.corner_exclusion,
            "positions": [[x, y] for x, y in self.positions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatchLayout":
        try:
            return cls(
                width=int(d["W"]),
                height=int(d["H"]),
                patch_width=int(d["w"]),
                patch_height=int(d["h"]),
                stride=int(d["stride"]),
                corner_exclusion=bool(d["corner_exclusion"]),
                positions=tuple((int(x), int(y)) for x, y in d["positions"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise LayoutError(f"malformed layout dict: {exc}") from exc


@dataclass(frozen=True)
class MirrorMap:
    """Index map pairing each position with its horizontal reflection."""

    pairs: tuple[int, ...]
    class_count: int

    def __getitem__(self, i: int) -> int:
        return self.pairs[i]


@dataclass(frozen=True)
class ShapePlan:
    """Per-stage tensor shapes for the patch network / whole-image network."""

    variant: str
    batch: int
    channels: int
    patches: tuple[int, int, int, int] | None
    blocks: tuple[tuple[int, int, int, int], ...]
    feature: tuple[int, int]
    mean: tuple[int, int] | None


def _touches_corner(x: int, y: int, w: int, h: int, width: int, height: int) -> bool:
    # Rectangle [x, x+w) x [y, y+h) vs the four CORNER_SIDE**2 corner squares.
    left = x < CORNER_SIDE
    right = x + w > width - CORNER_SIDE
    top = y < CORNER_SIDE
    bottom = y + h > height - CORNER_SIDE
    return (left or right) and (top or bottom)


def layout_patches(
    width: int,
    height: int,
    patch_width: int,
    patch_height: int,
    stride: int,
    corner_exclusion: bool = False,
) -> PatchLayout:
    """Lay out the full row-major grid of patch positions at the given stride.

    The stride must tile the image exactly ((width - patch_width) and
    (height - patch_height) both divisible by it); anything else signals a
    misconfigured grid. With ``corner_exclusion`` every position whose window
    intersects a 28x28 corner square of the image is removed.
    """
    if not (0 < patch_width <= width):
        raise DomainError(f"patch width {patch_width} outside (0, {width}]")
    if not (0 < patch_height <= height):
        raise DomainError(f"patch height {patch_height} outside (0, {height}]")
    if stride <= 0:
        raise LayoutError(f"stride must be positive, got {stride}")
    if (width - patch_width) % stride or (height - patch_height) % stride:
        raise LayoutError(
            f"stride {stride} does not tile ({width - patch_width}, "
            f"{height - patch_height}) leftover space"
        )
    positions = []
    for y in range(0, height - patch_height + 1, stride):
        for x in range(0, width - patch_width + 1, stride):
            if corner_exclusion and _touches_corner(
                x, y, patch_width, patch_height, width, height
            ):
                continue
            positions.append((x, y))
    return PatchLayout(
        width=width,
        height=height,
        patch_width=patch_width,
        patch_height=patch_height,
        stride=stride,
        corner_exclusion=corner_exclusion,
        positions=tuple(positions),
    )


def mirror_map(layout: PatchLayout) -> MirrorMap:
    """Map each position index to the index it lands on under x -> W - w - x.

    Raises AsymmetricLayoutError if some reflected position is not itself in
    the layout. ``class_count`` is the number of mirror-equivalence classes
    (left/right pairs count once, self-mirrored positions count once).
    """
    index = {pos: i for i, pos in enumerate(layout.positions)}
    span = layout.width - layout.patch_width
    pairs = []
    for x, y in layout.positions:
        mirrored = (span - x, y)
        if mirrored not in index:
            raise AsymmetricLayoutError(
                f"position {(x, y)} reflects to {mirrored}, absent from layout"
            )
        pairs.append(index[mirrored])
    two_sided = sum(1 for i, j in enumerate(pairs) if i != j)
    assert two_sided % 2 == 0
    return MirrorMap(pairs=tuple(pairs), class_count=layout.count - two_sided // 2)


def _halved(dim: int) -> int:
    # Spatial downsampling rounds up (28 -> 14 -> 7 -> 4).
    return (dim + 1) // 2


def shape_plan(
    variant: str,
    batch: int,
    width: int,
    height: int,
    channels: int,
    patch_width: int | None = None,
    patch_height: int | None = None,
    patch_count: int | None = None,
) -> ShapePlan:
    """Tensor shapes through the four backbone blocks.

    ``rrfnet`` variant: the image is split into ``patch_count`` windows that
    travel through the network as one batch of K*B items; the first block
    keeps full patch resolution (stride 1) and a mean over the K features
    produces the per-image output. ``resnet`` variant (whole-image backbone):
    the first block already halves the image, and there is no mean stage.
    """
    if batch <= 0 or width <= 0 or height <= 0 or channels <= 0:
        raise DomainError("batch, width, height, channels must be positive")
    block_channels = (64, 128, 256, 512)
    if variant == "rrfnet":
        if not patch_width or not patch_height or not patch_count:
            raise DomainError("rrfnet plan needs patch_width/patch_height/patch_count")
        n = patch_count * batch
        patches = (n, patch_width, patch_height, channels)
        blocks = []
        pw, ph = patch_width, patch_height
        for stage, ch in enumerate(block_channels):
            if stage > 0:
                pw, ph = _halved(pw), _halved(ph)
            blocks.append((n, pw, ph, ch))
        return ShapePlan(
            variant=variant,
            batch=batch,
            channels=channels,
            patches=patches,
            blocks=tuple(blocks),
            feature=(n, 512),
            mean=(batch, 512),
        )
    if variant == "resnet":
        blocks = []
        pw, ph = width, height
        for ch in block_channels:
            pw, ph = _halved(pw), _halved(ph)
            blocks.append((batch, pw, ph, ch))
        return ShapePlan(
            variant=variant,
            batch=batch,
            channels=channels,
            patches=None,
            blocks=tuple(blocks),
            feature=(batch, 512),
            mean=None,
        )
    raise DomainError(f"unknown variant {variant!r} (expected 'rrfnet' or 'resnet')")
