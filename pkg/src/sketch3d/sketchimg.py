"""Raster sketches: binarization, dilation, thinning, stroke drawing and PGM I/O.

Pixel coordinates are ``(x, y)`` = ``(column, row)``; arrays are indexed
``[row, col]``.  Intensities live in ``[0, 1]`` with 0 = ink, 1 = background.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy import ndimage

# Guards against absurd headers before allocating.
MAX_PIXELS = 1 << 28


class SketchImage:
    """Row-major intensity grid, shape ``(height, width)``."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError(f"image must be a non-empty 2D grid, got shape {arr.shape}")
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise ValueError("intensities must lie in [0, 1]")
        self.pixels = arr

    @classmethod
    def blank(cls, width: int, height: int) -> "SketchImage":
        return cls(np.ones((height, width)))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SketchImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self):
        return f"SketchImage({self.width}x{self.height})"


class BinaryMask:
    """Boolean grid, True = ink."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        arr = np.array(bits, dtype=bool)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2D, got shape {arr.shape}")
        self.bits = arr

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_points(cls, width: int, height: int, points: Iterable[Tuple[int, int]]) -> "BinaryMask":
        bits = np.zeros((height, width), dtype=bool)
        for x, y in points:
            bits[y, x] = True
        return cls(bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def ink_points(self) -> set:
        """Set of ``(x, y)`` ink coordinates."""
        rows, cols = np.nonzero(self.bits)
        return set(zip(cols.tolist(), rows.tolist()))

    def count(self) -> int:
        return int(self.bits.sum())

    def to_image(self) -> SketchImage:
        return SketchImage(np.where(self.bits, 0.0, 1.0))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __repr__(self):
        return f"BinaryMask({self.width}x{self.height}, ink={self.count()})"


@dataclass(frozen=True)
class StructuringElement:
    """Square neighbourhood of Chebyshev radius ``radius``."""

    radius: int = 1

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValueError(f"structuring element radius must be an integer >= 1, got {self.radius}")


def binarize(img: SketchImage, threshold: float = 0.5) -> BinaryMask:
    """Ink wherever intensity is strictly below ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return BinaryMask(img.pixels < threshold)


def dilate(mask: BinaryMask, se: StructuringElement = StructuringElement(1), iterations: int = 1) -> BinaryMask:
    """Iterated dilation by a square kernel; pixels outside the canvas count as background."""
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    bits = mask.bits.copy()
    if iterations == 0 or not bits.any():
        return BinaryMask(bits)
    structure = np.ones((2 * se.radius + 1, 2 * se.radius + 1), dtype=bool)
    out = ndimage.binary_dilation(bits, structure=structure, iterations=iterations, border_value=0)
    return BinaryMask(out)


def _bresenham(x0: int, y0: int, x1: int, y1: int):
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        yield x0, y0
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def rasterize_polyline(points: Sequence[Tuple[float, float]], width: int, height: int) -> SketchImage:
    """Draw 8-connected Bresenham segments between consecutive points.

    Points are rounded to the nearest pixel and clamped to the canvas.  A
    single point draws a dot.
    """
    if len(points) == 0:
        raise ValueError("polyline needs at least one point")
    if width <= 0 or height <= 0:
        raise ValueError(f"canvas must be positive, got {width}x{height}")
    pts = [
        (min(max(int(round(x)), 0), width - 1), min(max(int(round(y)), 0), height - 1))
        for x, y in points
    ]
    pixels = np.ones((height, width))
    if len(pts) == 1:
        pts = pts * 2
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        for x, y in _bresenham(x0, y0, x1, y1):
            pixels[y, x] = 0.0
    return SketchImage(pixels)


def _neighbours(b: np.ndarray):
    """P2..P9 of every pixel (N, NE, E, SE, S, SW, W, NW) as uint8 planes."""
    p = np.pad(b, 1).astype(np.uint8)
    h, w = b.shape
    return (
        p[0:h, 1:w + 1],      # P2 north
        p[0:h, 2:w + 2],      # P3 north-east
        p[1:h + 1, 2:w + 2],  # P4 east
        p[2:h + 2, 2:w + 2],  # P5 south-east
        p[2:h + 2, 1:w + 1],  # P6 south
        p[2:h + 2, 0:w],      # P7 south-west
        p[1:h + 1, 0:w],      # P8 west
        p[0:h, 0:w],          # P9 north-west
    )


def _deletable(ring, step: int) -> bool:
    p2, p3, p4, p5, p6, p7, p8, p9 = ring
    b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
    seq = (p2, p3, p4, p5, p6, p7, p8, p9, p2)
    a = sum((1 - seq[i]) * seq[i + 1] for i in range(8))
    if step == 0:
        c1, c2 = p2 * p4 * p6, p4 * p6 * p8
    else:
        c1, c2 = p2 * p4 * p8, p2 * p6 * p8
    return (b >= 2) & (b <= 6) & (a == 1) & (c1 == 0) & (c2 == 0)


_OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _ring_at(b: np.ndarray, r: int, c: int):
    h, w = b.shape
    out = []
    for dr, dc in _OFFSETS:
        rr, cc = r + dr, c + dc
        out.append(int(b[rr, cc]) if 0 <= rr < h and 0 <= cc < w else 0)
    return out


def thin(mask: BinaryMask) -> BinaryMask:
    """Zhang-Suen thinning iterated to a fixpoint.

    Each sub-iteration finds the Zhang-Suen deletion candidates in parallel,
    then removes them in raster order, re-testing every candidate against
    the already-updated grid.  The re-test keeps a candidate only if it is
    still a simple, non-end point, so strokes two pixels thick and 2x2 blocks
    keep their connectivity instead of being erased.
    """
    b = mask.bits.copy()
    changed = True
    while changed:
        changed = False
        for step in (0, 1):
            candidates = np.argwhere(b & _deletable(_neighbours(b), step))
            for r, c in candidates:
                if _deletable(_ring_at(b, r, c), step):
                    b[r, c] = False
                    changed = True
    return BinaryMask(b)


def components(mask: BinaryMask) -> int:
    """Number of 8-connected ink components."""
    _, n = ndimage.label(mask.bits, structure=np.ones((3, 3), dtype=int))
    return int(n)


# --- PGM ---------------------------------------------------------------------


class PGMError(ValueError):
    """Base class for PGM decoding failures."""


class PGMHeaderError(PGMError):
    pass


class PGMDimensionError(PGMError):
    pass


class PGMTruncatedError(PGMError):
    pass


def _header_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last token.
    """
    tokens = []
    i, n = 0, len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        if i >= n:
            raise PGMHeaderError("unexpected end of header")
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        tokens.append(data[start:i])
    if len(tokens) == count and count == 4:
        if i >= n or not data[i:i + 1].isspace():
            raise PGMHeaderError("header must end with a single whitespace byte")
        i += 1
    return tokens, i


def decode_pgm(data: bytes) -> SketchImage:
    """Decode a P2 (ASCII) or P5 (binary) PGM.

    Header grammar: magic, whitespace, width, whitespace, height,
    whitespace, maxval, exactly one whitespace byte, payload.  ``#``
    comments may appear between header tokens.
    """
    tokens, offset = _header_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise PGMHeaderError(f"unsupported magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PGMHeaderError(f"non-integer header field in {tokens[1:]!r}") from None
    if width <= 0 or height <= 0:
        raise PGMDimensionError(f"dimensions must be positive, got {width}x{height}")
    if width * height > MAX_PIXELS:
        raise PGMDimensionError(f"image {width}x{height} exceeds {MAX_PIXELS} pixels")
    if not 0 < maxval <= 65535:
        raise PGMHeaderError(f"maxval must lie in [1, 65535], got {maxval}")
    count = width * height
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        payload = data[offset:offset + need]
        if len(payload) < need:
            raise PGMTruncatedError(f"expected {need} payload bytes, got {len(payload)}")
        values = np.frombuffer(payload, dtype=dtype).astype(np.int64)
    else:
        words = data[offset:].split()
        if len(words) < count:
            raise PGMTruncatedError(f"expected {count} samples, got {len(words)}")
        try:
            values = np.array([int(w) for w in words[:count]], dtype=np.int64)
        except ValueError:
            raise PGMHeaderError("non-integer sample in ASCII payload") from None
    if values.max(initial=0) > maxval:
        raise PGMHeaderError(f"sample exceeds maxval {maxval}")
    return SketchImage(values.reshape(height, width) / maxval)


def read_pgm(path: str | os.PathLike) -> SketchImage:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def encode_pgm(img: SketchImage, ascii: bool = False) -> bytes:
    """8-bit encoding; intensities are rounded to the nearest of 256 levels."""
    values = np.rint(img.pixels * 255.0).astype(np.uint8)
    header = f"{'P2' if ascii else 'P5'}\n{img.width} {img.height}\n255\n".encode()
    if ascii:
        rows = (" ".join(str(v) for v in row) for row in values.tolist())
        return header + "\n".join(rows).encode() + b"\n"
    return header + values.tobytes()


def write_pgm(img: SketchImage, path: str | os.PathLike, ascii: bool = False) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img, ascii=ascii))
