"""Image and mask buffers, cropping, bilinear resizing, and file formats.

Buffers are immutable numpy float64 arrays in memory. The native ``.malf``
format stores float32, so values survive a round trip exactly when they are
float32-representable (everything loaded from a file is). PNG and PGM are
8-bit interchange formats; quantization is ``floor(v * 255)``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .boxes import BBox
from .errors import BoundsError, DegenerateBoxError, DimensionMismatchError, MalformedFileError

MALF_MAGIC = b"MALF"
_MAX_PIXELS = 1 << 28  # refuse absurd headers before allocating


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class Image:
    """H x W x C pixel buffer with values in [0, 1]; C is 1 (gray) or 3 (RGB)."""

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"image must be HxW or HxWxC with C in (1, 3), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must have at least one pixel, got shape {arr.shape}")
        if not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        self.data = _freeze(arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def bounds(self) -> BBox:
        return BBox(0.0, 0.0, float(self.width), float(self.height))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Image)
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )


class ProbMask:
    """H x W map of mask scores. Most producers keep values in [0, 1]."""

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask must be HxW with at least one pixel, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("mask values must be finite")
        self.data = _freeze(arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ProbMask)
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )


class BinaryMask:
    """H x W grid of bits."""

    def __init__(self, data):
        arr = np.array(data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask must be HxW with at least one pixel, got shape {arr.shape}")
        if arr.dtype != np.bool_:
            values = np.unique(arr)
            if not np.isin(values, (0, 1)).all():
                raise ValueError("binary mask values must be 0 or 1")
            arr = arr.astype(bool)
        self.data = _freeze(arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def count(self) -> int:
        return int(self.data.sum())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BinaryMask)
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )


def rounded_rect(box: BBox, width: int, height: int) -> tuple[int, int, int, int]:
    """Integer crop window covering ``box``: origin floors, far corner ceils.

    Raises on zero-area or out-of-bounds boxes.
    """
    if box.x1 <= box.x0 or box.y1 <= box.y0:
        raise DegenerateBoxError(f"cannot crop zero-area box {box.as_list()}")
    ix0 = int(np.floor(box.x0))
    iy0 = int(np.floor(box.y0))
    ix1 = int(np.ceil(box.x1))
    iy1 = int(np.ceil(box.y1))
    if ix0 < 0 or iy0 < 0 or ix1 > width or iy1 > height:
        raise BoundsError(
            f"box {box.as_list()} rounds to {(ix0, iy0, ix1, iy1)}, outside {width}x{height}"
        )
    return ix0, iy0, ix1, iy1


def crop(img: Image, box: BBox) -> Image:
    """Cut the pixel window covering ``box`` out of ``img``.

    The window rounds outward (floor the origin, ceil the far corner) so no
    pixel touched by the box is lost.
    """
    ix0, iy0, ix1, iy1 = rounded_rect(box, img.width, img.height)
    return Image(img.data[iy0:iy1, ix0:ix1, :])


def resize_bilinear(img: Image, out_w: int, out_h: int) -> Image:
    """Resize with half-pixel-center bilinear sampling.

    Sample positions are (i + 0.5) * scale - 0.5, clamped to the source grid,
    so an identity resize is bit-exact and outputs never leave the range of
    the four contributing pixels.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    src = img.data
    h, w = src.shape[:2]
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]

    a = src[y0][:, x0]
    b = src[y0][:, x1]
    c = src[y1][:, x0]
    d = src[y1][:, x1]
    top = a + fx * (b - a)
    bottom = c + fx * (d - c)
    out = top + fy * (bottom - top)
    # keep rounding noise inside the hull of the contributing pixels
    lo = np.minimum(np.minimum(a, b), np.minimum(c, d))
    hi = np.maximum(np.maximum(a, b), np.maximum(c, d))
    return Image(np.clip(out, lo, hi))


# ---------------------------------------------------------------------------
# file formats


def _quantize_u8(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(arr * 255.0), 0, 255).astype(np.uint8)


def _write_malf(path: Path, arr: np.ndarray) -> None:
    h, w = arr.shape[:2]
    c = arr.shape[2] if arr.ndim == 3 else 1
    with open(path, "wb") as f:
        f.write(MALF_MAGIC)
        f.write(struct.pack("<III", w, h, c))
        f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_malf(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16:
        raise MalformedFileError(f"{path}: truncated header")
    if raw[:4] != MALF_MAGIC:
        raise MalformedFileError(f"{path}: bad magic {raw[:4]!r}")
    w, h, c = struct.unpack("<III", raw[4:16])
    if w < 1 or h < 1 or c < 1 or w * h * c > _MAX_PIXELS:
        raise MalformedFileError(f"{path}: implausible dimensions {w}x{h}x{c}")
    expected = 16 + 4 * w * h * c
    if len(raw) != expected:
        raise MalformedFileError(f"{path}: expected {expected} bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=16).astype(np.float64)
    return data.reshape(h, w, c)


def _read_8bit(path: Path) -> np.ndarray:
    try:
        with PILImage.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
            arr = np.asarray(im, dtype=np.float64)
    except (OSError, SyntaxError, ValueError) as exc:
        raise MalformedFileError(f"{path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr / 255.0


def _write_8bit(path: Path, arr: np.ndarray) -> None:
    q = _quantize_u8(arr)
    if q.shape[2] == 1:
        PILImage.fromarray(q[:, :, 0], mode="L").save(path)
    else:
        PILImage.fromarray(q, mode="RGB").save(path)


def _suffix(path) -> str:
    return Path(path).suffix.lower()


def save_image(img: Image, path) -> None:
    path = Path(path)
    ext = _suffix(path)
    if ext == ".malf":
        _write_malf(path, img.data)
    elif ext in (".png", ".pgm"):
        if ext == ".pgm" and img.channels != 1:
            raise ValueError("PGM stores a single channel; convert to gray first")
        _write_8bit(path, img.data)
    else:
        raise ValueError(f"unsupported image format {ext!r}")


def load_image(path) -> Image:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    ext = _suffix(path)
    if ext == ".malf":
        arr = _read_malf(path)
        if arr.shape[2] not in (1, 3):
            raise MalformedFileError(f"{path}: {arr.shape[2]} channels is not an image")
        if arr.min() < 0.0 or arr.max() > 1.0 or not np.isfinite(arr).all():
            raise MalformedFileError(f"{path}: image values outside [0, 1]")
        return Image(arr)
    if ext in (".png", ".pgm"):
        return Image(_read_8bit(path))
    raise ValueError(f"unsupported image format {ext!r}")


def save_prob_mask(mask: ProbMask, path) -> None:
    path = Path(path)
    ext = _suffix(path)
    if ext == ".malf":
        _write_malf(path, mask.data[:, :, None])
    elif ext in (".png", ".pgm"):
        _write_8bit(path, mask.data[:, :, None])
    else:
        raise ValueError(f"unsupported mask format {ext!r}")


def load_prob_mask(path) -> ProbMask:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    ext = _suffix(path)
    if ext == ".malf":
        arr = _read_malf(path)
        if arr.shape[2] != 1:
            raise MalformedFileError(f"{path}: score map must have 1 channel, got {arr.shape[2]}")
        return ProbMask(arr[:, :, 0])
    if ext in (".png", ".pgm"):
        arr = _read_8bit(path)
        if arr.shape[2] != 1:
            raise MalformedFileError(f"{path}: score map must be grayscale")
        return ProbMask(arr[:, :, 0])
    raise ValueError(f"unsupported mask format {ext!r}")


def save_binary_mask(mask: BinaryMask, path) -> None:
    path = Path(path)
    ext = _suffix(path)
    if ext == ".malf":
        _write_malf(path, mask.data.astype(np.float64)[:, :, None])
    elif ext in (".png", ".pgm"):
        q = mask.data.astype(np.uint8) * 255
        PILImage.fromarray(q, mode="L").save(path)
    else:
        raise ValueError(f"unsupported mask format {ext!r}")


def load_binary_mask(path) -> BinaryMask:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    ext = _suffix(path)
    if ext == ".malf":
        arr = _read_malf(path)
        if arr.shape[2] != 1:
            raise MalformedFileError(f"{path}: binary mask must have 1 channel")
        values = arr[:, :, 0]
        if not np.isin(values, (0.0, 1.0)).all():
            raise MalformedFileError(f"{path}: binary mask values must be 0 or 1")
        return BinaryMask(values.astype(bool))
    if ext in (".png", ".pgm"):
        arr = _read_8bit(path)
        if arr.shape[2] != 1:
            raise MalformedFileError(f"{path}: binary mask must be grayscale")
        values = arr[:, :, 0]
        if not np.isin(values, (0.0, 1.0)).all():
            raise MalformedFileError(f"{path}: binary mask pixels must be 0 or 255")
        return BinaryMask(values.astype(bool))
    raise ValueError(f"unsupported mask format {ext!r}")


def require_same_shape(a, b) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatchError(
            f"shape mismatch: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
