"""Image containers, file ingestion, BT.601 colour conversion and quality metrics.

Colour images are ``RgbImage`` (8-bit, row-major ``(H, W, 3)``), digits are
``GrayImage`` (8-bit ``(H, W)``). Between transform stages luminance and
chroma travel as plain float64 ``(H, W)`` arrays ("planes"); rounding to 8 bits
only happens in :func:`ycbcr_to_rgb` and the other materialisation points.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass

import numpy as np


class ImageFormatError(ValueError):
    """Base class for malformed image files."""


class MalformedHeaderError(ImageFormatError):
    pass


class TruncatedPayloadError(ImageFormatError):
    pass


class UnsupportedMaxvalError(ImageFormatError):
    pass


class BadMagicError(ImageFormatError):
    pass


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class RgbImage:
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"RgbImage needs (H, W, 3) pixels, got {px.shape}")
        if px.dtype != np.uint8:
            raise ValueError("RgbImage pixels must be uint8")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class GrayImage:
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError(f"GrayImage needs (H, W) pixels, got {px.shape}")
        if px.dtype != np.uint8:
            raise ValueError("GrayImage pixels must be uint8")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


# --------------------------------------------------------------------------
# Netpbm / IDX
# --------------------------------------------------------------------------

_PNM_HEADER = re.compile(rb"(P[56])(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def _parse_pnm(data: bytes, magic: bytes, channels: int) -> np.ndarray:
    if not data.startswith(magic):
        raise MalformedHeaderError(f"expected {magic!r} magic")
    m = _PNM_HEADER.match(data)
    if m is None:
        raise MalformedHeaderError("unparseable PNM header")
    width, height, maxval = (int(g) for g in m.group(2, 3, 4))
    if width <= 0 or height <= 0:
        raise MalformedHeaderError(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"maxval {maxval} (only 255 supported)")
    start = m.end()
    need = width * height * channels
    if len(data) - start < need:
        raise TruncatedPayloadError(f"payload has {len(data) - start} bytes, header promises {need}")
    arr = np.frombuffer(data, dtype=np.uint8, count=need, offset=start)
    shape = (height, width, channels) if channels > 1 else (height, width)
    return arr.reshape(shape).copy()


def load_ppm(data: bytes) -> RgbImage:
    """Parse a binary P6 file with maxval 255."""
    return RgbImage(_parse_pnm(data, b"P6", 3))


def save_ppm(img: RgbImage) -> bytes:
    return f"P6\n{img.width} {img.height}\n255\n".encode("ascii") + img.pixels.tobytes()


def load_pgm(data: bytes) -> GrayImage:
    return GrayImage(_parse_pnm(data, b"P5", 1))


def save_pgm(img: GrayImage) -> bytes:
    return f"P5\n{img.width} {img.height}\n255\n".encode("ascii") + img.pixels.tobytes()


IDX3_MAGIC = 0x00000803


def load_idx(data: bytes) -> list[GrayImage]:
    """Parse an IDX3 (MNIST image) file into a list of digits."""
    if len(data) < 16:
        raise TruncatedPayloadError("IDX header shorter than 16 bytes")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX3_MAGIC:
        raise BadMagicError(f"magic 0x{magic:08x}, expected 0x{IDX3_MAGIC:08x}")
    need = count * rows * cols
    if len(data) - 16 < need:
        raise TruncatedPayloadError(f"payload has {len(data) - 16} bytes, header promises {need}")
    arr = np.frombuffer(data, dtype=np.uint8, count=need, offset=16).reshape(count, rows, cols)
    return [GrayImage(a.copy()) for a in arr]


def save_idx(images: list[GrayImage]) -> bytes:
    rows, cols = images[0].pixels.shape if images else (0, 0)
    head = struct.pack(">IIII", IDX3_MAGIC, len(images), rows, cols)
    return head + b"".join(im.pixels.tobytes() for im in images)


# --------------------------------------------------------------------------
# Colour conversion (BT.601 studio range)
# --------------------------------------------------------------------------

# Rows are Y, Cb, Cr. The printed derivation labels rows 2/3 as Cr/Cb but the
# coefficients are the standard Cb and Cr rows, which is what we follow.
YCBCR_MATRIX = np.array([
    [0.257, 0.504, 0.098],
    [-0.148, -0.291, 0.439],
    [0.439, -0.368, -0.071],
])
YCBCR_OFFSET = np.array([16.0, 128.0, 128.0])
_YCBCR_INVERSE = np.linalg.inv(YCBCR_MATRIX)


def rgb_to_ycbcr(img: RgbImage) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rgb = img.pixels.astype(np.float64)
    ycc = rgb @ YCBCR_MATRIX.T + YCBCR_OFFSET
    return ycc[..., 0].copy(), ycc[..., 1].copy(), ycc[..., 2].copy()


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_uint8(x: np.ndarray) -> np.ndarray:
    """Round half away from zero and clamp to [0, 255]."""
    return np.clip(round_half_away(np.asarray(x, dtype=np.float64)), 0, 255).astype(np.uint8)


def ycbcr_to_rgb_float(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    """Inverse colour transform without rounding or clamping, (H, W, 3)."""
    y, cb, cr = (np.asarray(p, dtype=np.float64) for p in (y, cb, cr))
    if not (y.shape == cb.shape == cr.shape) or y.ndim != 2:
        raise DimensionMismatchError(f"plane shapes differ: {y.shape}, {cb.shape}, {cr.shape}")
    ycc = np.stack([y, cb, cr], axis=-1) - YCBCR_OFFSET
    return ycc @ _YCBCR_INVERSE.T


def ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> RgbImage:
    return RgbImage(to_uint8(ycbcr_to_rgb_float(y, cb, cr)))


def luma(img) -> np.ndarray:
    """Float luminance plane of an RgbImage, GrayImage or 2-D array."""
    if isinstance(img, RgbImage):
        return rgb_to_ycbcr(img)[0]
    if isinstance(img, GrayImage):
        return img.pixels.astype(np.float64)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D plane, got shape {arr.shape}")
    return arr


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------

def _pixels(img) -> np.ndarray:
    if isinstance(img, (RgbImage, GrayImage)):
        return img.pixels.astype(np.float64)
    return np.asarray(img, dtype=np.float64)


def psnr(a, b, peak: float = 255.0) -> float:
    """PSNR in dB over all channels; ``math.inf`` for identical inputs."""
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise DimensionMismatchError(f"{pa.shape} vs {pb.shape}")
    mse = float(np.mean((pa - pb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable 'valid' correlation with a symmetric 1-D kernel
    k = g.size
    rows = np.lib.stride_tricks.sliding_window_view(x, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim(a, b, *, data_range: float = 255.0, win_size: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over all full windows (Gaussian weighted).

    Colour images are compared on their BT.601 luminance.
    """
    pa, pb = luma(a), luma(b)
    if pa.shape != pb.shape:
        raise DimensionMismatchError(f"{pa.shape} vs {pb.shape}")
    if min(pa.shape) < win_size:
        raise ValueError(f"image {pa.shape} smaller than {win_size}x{win_size} window")
    g = gaussian_window(win_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _filter_valid(pa, g)
    mu_b = _filter_valid(pb, g)
    var_a = _filter_valid(pa * pa, g) - mu_a ** 2
    var_b = _filter_valid(pb * pb, g) - mu_b ** 2
    cov = _filter_valid(pa * pb, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
