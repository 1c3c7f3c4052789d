"""Non-neural pixel obfuscators: pixelation, pixel snow, k-same averaging.

Pixel grids are uint8 arrays of shape (height, width, channels).  All
averaging is done in exact integer arithmetic with ties rounded half
up, so results are bit-reproducible across platforms.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .datamodel import Dataset
from .errors import ParseError
from .score_io import EmbeddingTable

#: Inputs are normalized to this square size before standard pixelation.
STANDARD_SIZE = 224
#: Standard pixelation uses square cells of this many pixels.
STANDARD_BLOCK = 16

GRID_MAGIC = b"P-RAW"


@dataclass(frozen=True)
class ImageGrid:
    """An 8-bit pixel grid with 1 (gray) or 3 (color) channels."""

    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if not isinstance(arr, np.ndarray) or arr.dtype != np.uint8:
            raise ValueError("pixel grid must be a uint8 ndarray")
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"pixel grid must be (H, W, C) with C in (1, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("pixel grid must be at least 1x1")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def read_grid(path: str | Path) -> ImageGrid:
    """Read a raw pixel grid: ASCII header then row-major samples."""
    path = Path(path)
    raw = path.read_bytes()
    newline = raw.find(b"\n")
    if newline < 0 or not raw.startswith(GRID_MAGIC + b" "):
        raise ParseError(path, None, "not a raw pixel grid (bad header)")
    fields = raw[:newline].split(b" ")
    if len(fields) != 4:
        raise ParseError(path, None, f"header needs magic and 3 dimensions, got {len(fields)}")
    try:
        height, width, channels = (int(x) for x in fields[1:])
    except ValueError:
        raise ParseError(path, None, "non-integer dimensions in header") from None
    body = raw[newline + 1 :]
    if len(body) != height * width * channels:
        raise ParseError(
            path, None, f"expected {height * width * channels} samples, found {len(body)}"
        )
    arr = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    try:
        return ImageGrid(data=arr.copy())
    except ValueError as exc:
        raise ParseError(path, None, str(exc)) from None


def write_grid(grid: ImageGrid, path: str | Path) -> None:
    header = b"%s %d %d %d\n" % (GRID_MAGIC, grid.height, grid.width, grid.channels)
    Path(path).write_bytes(header + grid.data.tobytes(order="C"))


def _mean_half_up(sums: np.ndarray, count: int | np.ndarray) -> np.ndarray:
    # floor((sum / count) + 1/2) without leaving integer arithmetic
    return (2 * sums + count) // (2 * count)


def pixelate(grid: ImageGrid, block: int) -> ImageGrid:
    """Replace each block x block cell by its rounded mean color.

    Cells at the right and bottom edges may be smaller when the size is
    not a multiple of ``block``; each cell still averages only its own
    pixels.
    """
    if not 1 <= block <= min(grid.height, grid.width):
        raise ValueError(f"block must be in [1, {min(grid.height, grid.width)}], got {block}")
    row_starts = np.arange(0, grid.height, block)
    col_starts = np.arange(0, grid.width, block)
    row_sizes = np.diff(np.append(row_starts, grid.height))
    col_sizes = np.diff(np.append(col_starts, grid.width))
    sums = np.add.reduceat(grid.data.astype(np.int64), row_starts, axis=0)
    sums = np.add.reduceat(sums, col_starts, axis=1)
    counts = np.outer(row_sizes, col_sizes)[:, :, None]
    means = _mean_half_up(sums, counts)
    out = np.repeat(np.repeat(means, row_sizes, axis=0), col_sizes, axis=1)
    return ImageGrid(data=out.astype(np.uint8))


def resize_nearest(grid: ImageGrid, height: int, width: int) -> ImageGrid:
    """Nearest-neighbor resample using pixel-center alignment."""
    if height < 1 or width < 1:
        raise ValueError("target size must be at least 1x1")
    rows = np.minimum(
        ((np.arange(height) + 0.5) * grid.height / height).astype(np.int64), grid.height - 1
    )
    cols = np.minimum(
        ((np.arange(width) + 0.5) * grid.width / width).astype(np.int64), grid.width - 1
    )
    return ImageGrid(data=grid.data[rows][:, cols])


def pixelate_standard(grid: ImageGrid) -> ImageGrid:
    """Pixelate at the standard geometry: 224x224 input, 16-pixel cells.

    Inputs of any other size are first resampled to 224x224, so every
    output is a 14x14 mosaic.
    """
    if (grid.height, grid.width) != (STANDARD_SIZE, STANDARD_SIZE):
        grid = resize_nearest(grid, STANDARD_SIZE, STANDARD_SIZE)
    return pixelate(grid, STANDARD_BLOCK)


def dp_snow(grid: ImageGrid, delta: float, gray: int = 128, seed: int = 42) -> ImageGrid:
    """Set a fixed fraction of pixel positions to a flat gray.

    Exactly floor(delta * H * W) positions are drawn uniformly without
    replacement using the given seed; all channels at a chosen position
    are overwritten.
    """
    if not 0 < delta <= 1:
        raise ValueError(f"delta must be in (0, 1], got {delta}")
    if not 0 <= gray <= 255:
        raise ValueError(f"gray level must be in [0, 255], got {gray}")
    total = grid.height * grid.width
    count = int(delta * total)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=count, replace=False)
    flat = grid.data.reshape(total, grid.channels).copy()
    flat[chosen] = gray
    return ImageGrid(data=flat.reshape(grid.data.shape))


def k_same_pixel(
    target_id: str,
    dataset: Dataset,
    grids: Mapping[str, ImageGrid],
    embeddings: EmbeddingTable,
    k: int = 5,
) -> ImageGrid:
    """Average the target image with its k-1 nearest other-identity faces.

    Neighbors are ranked by cosine distance between embeddings, at most
    one image per distinct gallery identity, never from the target's own
    identity.  Distance ties break toward the smaller image id.  The
    pixel average is rounded half up once, after summing all k grids.
    """
    from .verification import cosine_distance

    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    target_rec = dataset.record(target_id)
    target_grid = grids[target_id]
    target_vec = embeddings.vector(target_id)
    candidates = []
    for rec in sorted(dataset.records, key=lambda r: r.image_id):
        if rec.identity_id == target_rec.identity_id:
            continue
        if rec.image_id not in grids:
            continue
        dist = cosine_distance(target_vec, embeddings.vector(rec.image_id))
        candidates.append((dist, rec.image_id, rec.identity_id))
    candidates.sort(key=lambda c: (c[0], c[1]))
    chosen: list[str] = []
    used_identities: set[str] = set()
    for _, image_id, identity_id in candidates:
        if identity_id in used_identities:
            continue
        used_identities.add(identity_id)
        chosen.append(image_id)
        if len(chosen) == k - 1:
            break
    if len(chosen) < k - 1:
        raise ValueError(
            f"gallery holds {len(chosen)} usable identities, need {k - 1} for k={k}"
        )
    acc = target_grid.data.astype(np.int64)
    for image_id in chosen:
        other = grids[image_id]
        if other.data.shape != target_grid.data.shape:
            raise ValueError(
                f"grid {image_id!r} has shape {other.data.shape}, "
                f"target is {target_grid.data.shape}"
            )
        acc = acc + other.data.astype(np.int64)
    return ImageGrid(data=_mean_half_up(acc, k).astype(np.uint8))
