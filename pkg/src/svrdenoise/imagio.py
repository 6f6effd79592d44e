"""Image I/O (8-bit binary PGM), subband patch tiling and corpus ingestion."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np

PATCH_SIZE = 16

_HEADER_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


class ImageFormatError(ValueError):
    """Raised for unreadable or unsupported image files."""


@dataclass(frozen=True)
class Image:
    """A grayscale luminance image stored row-major as float64.

    ``data`` has shape ``(height, width)``; nominal range is [0, 255] but
    intermediate results (noisy images, estimates) may leave it.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"image data must be a non-empty 2D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    def clipped(self) -> "Image":
        return Image(np.clip(self.data, 0.0, 255.0))


def _read_token(buf: bytes, pos: int) -> Tuple[bytes, int]:
    m = _HEADER_TOKEN.match(buf, pos)
    if m is None:
        raise ImageFormatError("malformed PGM header")
    return m.group(1), m.end()


def load_image(path) -> Image:
    """Read an 8-bit binary (P5) PGM file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    buf = path.read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic == b"P2":
        raise ImageFormatError(f"{path}: unsupported format (ASCII PGM); only binary P5 is read")
    if magic != b"P5":
        raise ImageFormatError(f"{path}: unsupported format {magic[:8]!r}")
    try:
        w_tok, pos = _read_token(buf, pos)
        h_tok, pos = _read_token(buf, pos)
        m_tok, pos = _read_token(buf, pos)
        width, height, maxval = int(w_tok), int(h_tok), int(m_tok)
    except (ImageFormatError, ValueError) as exc:
        raise ImageFormatError(f"{path}: malformed PGM header") from exc
    if width <= 0 or height <= 0:
        raise ImageFormatError(f"{path}: malformed PGM header (non-positive size)")
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported bit depth (maxval {maxval}, expected 255)")
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    payload = buf[pos:pos + width * height]
    if len(payload) != width * height:
        raise ImageFormatError(
            f"{path}: malformed payload ({len(payload)} bytes, expected {width * height})")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return Image(arr.astype(np.float64))


def quantize(data: np.ndarray) -> np.ndarray:
    """Clip to [0, 255] and round half up to uint8."""
    return np.floor(np.clip(data, 0.0, 255.0) + 0.5).astype(np.uint8)


def save_image(img: Image, path) -> None:
    """Write ``img`` as a binary PGM, clipping to [0, 255] and rounding."""
    data = img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    raster = quantize(data)
    h, w = raster.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(raster.tobytes())


@dataclass
class Patch:
    origin: Tuple[int, int]
    values: np.ndarray


@dataclass
class PatchGrid:
    patches: List[Patch]
    source_dims: Tuple[int, int]
    patch_size: int = field(default=PATCH_SIZE)

    def __len__(self):
        return len(self.patches)


def tile(grid: np.ndarray, patch_size: int = PATCH_SIZE) -> PatchGrid:
    """Split a 2D block into non-overlapping patches in row-major order.

    Trailing patches along a dimension that is not a multiple of
    ``patch_size`` are smaller (ragged tiling); no padding is added.
    """
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.size == 0:
        raise ValueError("tile: empty or non-2D grid")
    if patch_size < 1:
        raise ValueError("tile: patch_size must be positive")
    h, w = grid.shape
    patches = []
    for r in range(0, h, patch_size):
        for c in range(0, w, patch_size):
            block = grid[r:r + patch_size, c:c + patch_size].copy()
            patches.append(Patch((r, c), block))
    return PatchGrid(patches, (h, w), patch_size)


def untile(pg: PatchGrid) -> np.ndarray:
    """Reassemble a :class:`PatchGrid`; inconsistent layouts raise ``ValueError``."""
    h, w = pg.source_dims
    if not pg.patches:
        raise ValueError("untile: no patches")
    dtype = np.result_type(*[p.values for p in pg.patches])
    out = np.zeros((h, w), dtype=dtype)
    covered = np.zeros((h, w), dtype=bool)
    for p in pg.patches:
        r, c = p.origin
        ph, pw = np.shape(p.values)
        if r < 0 or c < 0 or r + ph > h or c + pw > w:
            raise ValueError(f"untile: patch at {p.origin} falls outside {pg.source_dims}")
        if covered[r:r + ph, c:c + pw].any():
            raise ValueError(f"untile: patch at {p.origin} overlaps another patch")
        covered[r:r + ph, c:c + pw] = True
        out[r:r + ph, c:c + pw] = p.values
    if not covered.all():
        raise ValueError("untile: patches do not cover the source grid")
    return out


def list_images(directory) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {directory}")
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() == ".pgm")


def load_corpus(directory, limit: int | None = None) -> List[Image]:
    """Load PGM files from ``directory`` in lexicographic filename order."""
    files = list_images(directory)
    if not files:
        raise ValueError(f"corpus directory {directory} contains no .pgm images")
    if limit is not None:
        files = files[:limit]
    return [load_image(f) for f in files]


def as_array(img) -> np.ndarray:
    """Accept an :class:`Image` or array-like and return a float64 array."""
    if isinstance(img, Image):
        return img.data
    return np.asarray(img, dtype=np.float64)


__all__ = [
    "Image", "ImageFormatError", "Patch", "PatchGrid", "load_image", "save_image",
    "tile", "untile", "load_corpus", "list_images", "as_array", "quantize", "PATCH_SIZE",
]
