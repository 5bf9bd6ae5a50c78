"""Semantic payload insertion into (and extraction from) a carrier image.

The carrier's luminance goes through one Haar level; the LL subband is cut
into 4x4 blocks, each block is DCT'd and factorised, and the largest
singular value of block ``i`` is moved onto the lattice ``alpha * Z`` with a
parity that encodes payload bit ``i``. Chroma is never touched.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .imaging import RgbImage, rgb_to_ycbcr, round_half_away, ycbcr_to_rgb, ycbcr_to_rgb_float
from .transforms import (
    BlockSvd,
    Subbands,
    blockify,
    dct2_block,
    dwt2_haar,
    idct2_block,
    idwt2_haar,
    reconstruct_svd,
    svd_4x4,
    unblockify,
)

log = logging.getLogger(__name__)

LENGTH_HEADER_BITS = 32


class PayloadTooLargeError(ValueError):
    pass


class BadDimensionsError(ValueError):
    pass


@dataclass(frozen=True)
class EmbedConfig:
    """Shared transmitter/receiver embedding parameters.

    ``midpoint_mode`` places each embedded singular value in the middle of its
    lattice cell instead of on the cell edge, which gives a +/- alpha/2
    noise margin at extraction time.

    ``refine_iterations`` > 0 re-checks every block after 8-bit
    materialisation and retargets blocks that clipping or rounding pushed out
    of their cell (or, in midpoint mode, closer than alpha/4 to its edge) to
    the same-parity lattice point two steps away, moving away from the clip.
    """

    alpha: float = 14.0
    q: int = 4
    midpoint_mode: bool = False
    payload_layout: str = "row-major"
    length_header: bool = False
    refine_iterations: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 1 <= self.q <= 8:
            raise ValueError(f"q must be in [1, 8], got {self.q}")
        if self.refine_iterations < 0:
            raise ValueError("refine_iterations must be >= 0")
        if self.payload_layout != "row-major":
            raise ValueError(f"unknown payload layout {self.payload_layout!r}")


@dataclass
class QuantizedPayload:
    bits: np.ndarray
    feature_shape: tuple

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        self.feature_shape = tuple(self.feature_shape)

    def __len__(self) -> int:
        return self.bits.size


@dataclass
class InsertStats:
    blocks_used: int
    order_swaps: int  # blocks whose new top singular value fell below the second one
    retargeted: int = 0


# --------------------------------------------------------------------------
# Quantiser
# --------------------------------------------------------------------------

def quantize(s: np.ndarray, q: int = 4) -> QuantizedPayload:
    """Uniform q-bit quantisation of values in [0, 1], MSB first, row-major."""
    s = np.asarray(s, dtype=np.float64)
    codes = np.minimum(2 ** q - 1, np.floor(np.clip(s, 0.0, 1.0) * 2 ** q)).astype(np.int64)
    shifts = np.arange(q - 1, -1, -1)
    bits = (codes.ravel()[:, None] >> shifts) & 1
    return QuantizedPayload(bits.ravel(), s.shape)


def dequantize(p: QuantizedPayload, q: int = 4) -> np.ndarray:
    """Map each q-bit code back to the midpoint of its bin."""
    bits = np.asarray(p.bits, dtype=np.int64)
    if bits.size % q:
        raise ValueError(f"payload length {bits.size} is not a multiple of q={q}")
    weights = 1 << np.arange(q - 1, -1, -1)
    codes = bits.reshape(-1, q) @ weights
    values = (codes + 0.5) / 2 ** q
    shape = p.feature_shape if int(np.prod(p.feature_shape)) == codes.size else (codes.size,)
    return values.reshape(shape)


# --------------------------------------------------------------------------
# Lattice rule
# --------------------------------------------------------------------------

def _cell_index(sigma, alpha):
    # ceil(sigma/alpha), with float noise around exact lattice points snapped
    r = np.asarray(sigma, dtype=np.float64) / alpha
    k = np.round(r)
    on_point = np.abs(r - k) <= 1e-9 * np.maximum(1.0, np.abs(r))
    return np.where(on_point, k, np.ceil(r)).astype(np.int64)


def qim_embed(sigma, bit, alpha: float, midpoint: bool = False):
    """Move ``sigma`` to the nearest lattice point at or above it whose index
    parity encodes ``bit`` (even index -> 1, odd index -> 0).

    With ``midpoint`` the targets are cell centres instead, and ``sigma``
    moves to the nearest centre of the right parity in either direction.
    """
    eta = _cell_index(sigma, alpha)
    bit = np.asarray(bit, dtype=np.int64)
    keep = (eta % 2 == 1) == (bit == 0)
    out = alpha * np.where(keep, eta, eta + 1).astype(np.float64)
    if midpoint:
        out = out - alpha / 2
        # a singular value cannot go negative: use the next same-parity point
        out = np.where(out < 0, out + 2 * alpha, out)
        # the same-parity centre one step down may be closer
        down = out - 2 * alpha
        closer = (down > 0) & (np.abs(sigma - down) < np.abs(out - sigma))
        out = np.where(closer, down, out)
    return out if out.ndim else float(out)


def qim_extract(sigma, alpha: float):
    eta = _cell_index(sigma, alpha)
    out = (eta % 2 == 0).astype(np.uint8)
    return out if out.ndim else int(out)


# --------------------------------------------------------------------------
# Framing
# --------------------------------------------------------------------------

def frame_payload(bits: np.ndarray) -> np.ndarray:
    """32-bit big-endian bit count, payload, zero padding to a byte boundary."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    header = (bits.size >> np.arange(LENGTH_HEADER_BITS - 1, -1, -1)) & 1
    body = np.concatenate([header.astype(np.uint8), bits])
    pad = (-body.size) % 8
    return np.concatenate([body, np.zeros(pad, np.uint8)])


def read_length_header(bits: np.ndarray) -> int:
    head = np.asarray(bits[:LENGTH_HEADER_BITS], dtype=np.int64)
    return int(head @ (1 << np.arange(LENGTH_HEADER_BITS - 1, -1, -1, dtype=np.int64)))


def unframe_payload(bits: np.ndarray) -> np.ndarray:
    n = read_length_header(bits)
    return np.asarray(bits[LENGTH_HEADER_BITS:LENGTH_HEADER_BITS + n], dtype=np.uint8)


# --------------------------------------------------------------------------
# Carrier pipeline
# --------------------------------------------------------------------------

def capacity(width: int, height: int) -> int:
    """Embeddable bits: one per 4x4 block of the half-resolution LL band."""
    if width <= 0 or height <= 0 or width % 8 or height % 8:
        raise BadDimensionsError(f"carrier {width}x{height} is not a positive multiple of 8")
    return (width // 2) * (height // 2) // 16


def _ll_blocks(y: np.ndarray):
    bands = dwt2_haar(y)
    grid = blockify(bands.ll, 4)
    return bands, grid.shape[:2], grid.reshape(-1, 4, 4)


def _top_singular_values(y: np.ndarray, n: int) -> np.ndarray:
    _, _, blocks = _ll_blocks(y)
    return svd_4x4(dct2_block(blocks[:n])).z[:, 0]


def _rebuild_luma(bands, grid_shape, blocks, f, targets) -> np.ndarray:
    n = targets.size
    z = f.z.copy()
    z[:, 0] = targets
    blocks = blocks.copy()
    blocks[:n] = idct2_block(reconstruct_svd(BlockSvd(f.u, z, f.v)))
    out = Subbands(unblockify(blocks.reshape(grid_shape + (4, 4))), bands.lh, bands.hl, bands.hh)
    return idwt2_haar(out)


def embed_luma(y: np.ndarray, bits: np.ndarray, cfg: EmbedConfig) -> tuple[np.ndarray, InsertStats]:
    """Embed ``bits`` into a float luminance plane; returns the new plane."""
    y = np.asarray(y, dtype=np.float64)
    n = bits.size
    if n == 0:
        return y.copy(), InsertStats(0, 0, 0)
    bands, grid_shape, blocks = _ll_blocks(y)
    f = svd_4x4(dct2_block(blocks[:n]))
    targets = qim_embed(f.z[:, 0], bits, cfg.alpha, cfg.midpoint_mode)
    return _rebuild_luma(bands, grid_shape, blocks, f, targets), InsertStats(n, _swaps(f, targets), 0)


def _swaps(f: BlockSvd, targets: np.ndarray) -> int:
    swaps = int(np.count_nonzero(targets < f.z[:, 1]))
    if swaps:
        log.debug("%d blocks pushed below their second singular value", swaps)
    return swaps


def extract_luma(y: np.ndarray, n: int, cfg: EmbedConfig) -> np.ndarray:
    if n == 0:
        return np.zeros(0, np.uint8)
    return qim_extract(_top_singular_values(y, n), cfg.alpha)


def _payload_bits(payload: QuantizedPayload, cfg: EmbedConfig) -> np.ndarray:
    return frame_payload(payload.bits) if cfg.length_header else payload.bits


# midpoint blocks closer than this (in units of alpha) to a cell edge are
# retargeted; the slack absorbs later high-quality JPEG drift
REFINE_MARGIN = 0.4


def round_tiles(x: np.ndarray, tile: int = 8) -> np.ndarray:
    """Round to integers so each ``tile`` x ``tile`` tile keeps its sum.

    Within a tile the values with the largest fractional parts round up and
    the rest round down, so a tile sum moves by at most 0.5 (plain rounding
    can move it by tile**2 / 2 in flat regions). Rows and columns beyond the
    last whole tile are rounded plainly. Extra trailing axes (channels) are
    handled independently.
    """
    x = np.asarray(x, dtype=np.float64)
    out = round_half_away(x)
    h, w = (x.shape[0] // tile) * tile, (x.shape[1] // tile) * tile
    if h == 0 or w == 0:
        return out
    rest = x.shape[2:]
    sub = x[:h, :w].reshape(h // tile, tile, w // tile, tile, *rest).swapaxes(1, 2)
    sub = sub.reshape(h // tile, w // tile, tile * tile, *rest)
    base = np.floor(sub)
    frac = sub - base
    k = np.round(frac.sum(axis=2, keepdims=True))
    order = np.argsort(-frac, axis=2, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(tile * tile).reshape((1, 1, -1) + (1,) * len(rest)), axis=2)
    rounded = base + (ranks < k)
    rounded = rounded.reshape(h // tile, w // tile, tile, tile, *rest).swapaxes(1, 2)
    out[:h, :w] = rounded.reshape(h, w, *rest)
    return out


def _materialize(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> RgbImage:
    # Plain rounding shifts every pixel of a flat tile the same way, which
    # moves the tile's top singular value by up to 4; sum-keeping rounding
    # of each 8x8 tile (one LL block) avoids that.
    rgb = np.clip(ycbcr_to_rgb_float(y, cb, cr), 0, 255)
    return RgbImage(round_tiles(rgb, 8).astype(np.uint8))


def _edge_distance(sigma, alpha):
    eta = _cell_index(sigma, alpha)
    return np.minimum(sigma - (eta - 1) * alpha, eta * alpha - sigma)


def _refine_targets(bands, grid_shape, blocks, f, targets, bits, cb, cr, cfg):
    # Every LL block owns a disjoint 8x8 pixel tile and rounding/clipping is
    # per pixel, so each block's outcome depends on its own target only and
    # the best target per block can be chosen independently.
    n = targets.size
    alpha = cfg.alpha
    need = REFINE_MARGIN * alpha if cfg.midpoint_mode else 0.0
    goal = targets.copy()
    best = targets.copy()
    best_margin = np.full(n, -np.inf)
    compensated = np.zeros(n, bool)
    for _ in range(cfg.refine_iterations + 1):
        image = _materialize(_rebuild_luma(bands, grid_shape, blocks, f, targets), cb, cr)
        seen = _top_singular_values(rgb_to_ycbcr(image)[0], n)
        ok = qim_extract(seen, alpha) == bits
        margin = np.where(ok, _edge_distance(seen, alpha) if cfg.midpoint_mode else 0.0, -np.inf)
        better = margin > best_margin
        best = np.where(better, targets, best)
        best_margin = np.where(better, margin, best_margin)
        bad = best_margin < need
        if not bad.any():
            break
        # first pre-compensate the drift from rounding; if that is not
        # enough (clipping), aim 2 alpha away from the clip, same bit
        jump = bad & compensated
        step = np.where(seen < goal, -2 * alpha, 2 * alpha)
        step = np.where(goal + step < 0, 2 * alpha, step)
        goal = np.where(jump, goal + step, goal)
        targets = np.where(bad & ~compensated, np.maximum(targets + goal - seen, 0.0),
                           np.where(jump, goal, best))
        compensated = np.where(bad, ~compensated, compensated)
    return best


def insert_detailed(carrier: RgbImage, payload: QuantizedPayload, cfg: EmbedConfig) -> tuple[RgbImage, InsertStats]:
    cap = capacity(carrier.width, carrier.height)
    bits = _payload_bits(payload, cfg)
    if bits.size > cap:
        raise PayloadTooLargeError(f"{bits.size} payload bits exceed carrier capacity {cap}")
    y, cb, cr = rgb_to_ycbcr(carrier)
    n = bits.size
    if n == 0:
        return ycbcr_to_rgb(np.clip(round_half_away(y), 0, 255), cb, cr), InsertStats(0, 0, 0)

    bands, grid_shape, blocks = _ll_blocks(y)
    f = svd_4x4(dct2_block(blocks[:n]))
    first = qim_embed(f.z[:, 0], bits, cfg.alpha, cfg.midpoint_mode)
    targets = first
    if cfg.refine_iterations:
        targets = _refine_targets(bands, grid_shape, blocks, f, first, bits, cb, cr, cfg)
    retargeted = np.count_nonzero(targets != first)
    image = _materialize(_rebuild_luma(bands, grid_shape, blocks, f, targets), cb, cr)
    return image, InsertStats(n, _swaps(f, targets), int(retargeted))


def insert(carrier: RgbImage, payload: QuantizedPayload, cfg: EmbedConfig) -> RgbImage:
    return insert_detailed(carrier, payload, cfg)[0]


def extract(hybrid: RgbImage, payload_len: int | None, cfg: EmbedConfig,
            feature_shape: tuple | None = None) -> QuantizedPayload:
    """Read ``payload_len`` bits back out of a (possibly distorted) hybrid image.

    With ``cfg.length_header`` the length is read from the stream itself and
    ``payload_len`` may be None.
    """
    cap = capacity(hybrid.width, hybrid.height)
    y = rgb_to_ycbcr(hybrid)[0]
    if cfg.length_header:
        head = extract_luma(y, LENGTH_HEADER_BITS, cfg)
        n = min(read_length_header(head), cap - LENGTH_HEADER_BITS)
        total = LENGTH_HEADER_BITS + n
        bits = extract_luma(y, total, cfg)[LENGTH_HEADER_BITS:]
    else:
        if payload_len is None:
            raise ValueError("payload_len is required without a length header")
        if payload_len > cap:
            raise PayloadTooLargeError(f"{payload_len} bits exceed carrier capacity {cap}")
        bits = extract_luma(y, payload_len, cfg)
    if feature_shape is None:
        feature_shape = (bits.size // cfg.q,)
    return QuantizedPayload(bits, feature_shape)


def payload_ber(sent: QuantizedPayload | np.ndarray, received: QuantizedPayload | np.ndarray) -> float:
    a = sent.bits if isinstance(sent, QuantizedPayload) else np.asarray(sent)
    b = received.bits if isinstance(received, QuantizedPayload) else np.asarray(received)
    if a.size != b.size:
        raise ValueError(f"payload lengths differ: {a.size} vs {b.size}")
    return float(np.mean(a != b)) if a.size else 0.0


def min_carrier_side(payload_bits: int) -> int:
    """Smallest square carrier side (multiple of 8) that holds ``payload_bits``."""
    return 8 * math.ceil(math.sqrt(payload_bits))
