"""Baseline sequential JPEG (JFIF, 4:4:4, standard Huffman tables).

The decoder is written for damaged streams: the entropy-coded scan is split
at restart markers, each restart interval is decoded independently, and an
interval that fails to decode (or does not consume its segment exactly) is
replaced by mid-gray and listed in the :class:`DamageReport`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..imaging import RgbImage, round_half_away
from ..transforms import dct_matrix
from . import entropy, islow
from .tables import (
    AC_CHROMA,
    AC_LUMA,
    CHROMA_QUANT,
    DC_CHROMA,
    DC_LUMA,
    LUMA_QUANT,
    ZIGZAG,
    decode_tables,
    huffman_codes,
    scaled_quant,
)

SOI, EOI, SOS, SOF0, DHT, DQT, DRI, APP0 = 0xD8, 0xD9, 0xDA, 0xC0, 0xC4, 0xDB, 0xDD, 0xE0
RST0 = 0xD0

_C8 = dct_matrix(8)
_INV_ZIGZAG = np.argsort(ZIGZAG)

# JFIF (full-range BT.601) colour transform; the inverse lives in islow
_RGB_TO_YCC = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
])


class JpegError(ValueError):
    """Stream cannot be decoded."""


class FrameError(JpegError):
    """Fatal header damage: no image can be produced from the stream."""


class HeaderTruncatedError(FrameError):
    """The stream ended before the scan header was complete."""


@dataclass(frozen=True)
class JpegConfig:
    quality: int = 75
    subsampling: str = "4:4:4"
    restart_interval: int = 8

    def __post_init__(self):
        if not 1 <= int(self.quality) <= 100:
            raise ValueError(f"quality must be in [1, 100], got {self.quality}")
        if self.subsampling != "4:4:4":
            raise ValueError(f"only 4:4:4 is supported, got {self.subsampling!r}")
        if self.restart_interval < 0 or self.restart_interval > 0xFFFF:
            raise ValueError(f"restart_interval out of range: {self.restart_interval}")


@dataclass
class DamageReport:
    total_mcus: int
    restart_interval: int
    lost_intervals: list[int] = field(default_factory=list)

    @property
    def lost_mcu_ranges(self) -> list[tuple[int, int]]:
        """Half-open MCU index ranges that were concealed, merged."""
        ri = self.restart_interval or self.total_mcus
        out: list[tuple[int, int]] = []
        for i in self.lost_intervals:
            lo, hi = i * ri, min((i + 1) * ri, self.total_mcus)
            if out and out[-1][1] == lo:
                out[-1] = (out[-1][0], hi)
            else:
                out.append((lo, hi))
        return out

    @property
    def lost_mcus(self) -> int:
        return sum(hi - lo for lo, hi in self.lost_mcu_ranges)

    @property
    def intact(self) -> bool:
        return not self.lost_intervals


# --------------------------------------------------------------------------
# Encoder
# --------------------------------------------------------------------------

def _segment(marker: int, payload: bytes) -> bytes:
    return struct.pack(">BBH", 0xFF, marker, len(payload) + 2) + payload


def _dht_payload(tc_th: int, table) -> bytes:
    bits, values = table
    return bytes([tc_th]) + bytes(bits) + bytes(values)


def _to_blocks(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2).reshape(-1, 8, 8)


def _from_blocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return blocks.reshape(h // 8, w // 8, 8, 8).swapaxes(1, 2).reshape(h, w)


def _entropy_tables():
    dc = [huffman_codes(*DC_LUMA), huffman_codes(*DC_CHROMA)]
    ac = [huffman_codes(*AC_LUMA), huffman_codes(*AC_CHROMA)]
    return (np.stack([c for c, _ in dc]), np.stack([s for _, s in dc]),
            np.stack([c for c, _ in ac]), np.stack([s for _, s in ac]))


_ENC_TABLES = _entropy_tables()


def jpeg_encode(img: RgbImage, cfg: JpegConfig = JpegConfig()) -> bytes:
    """Encode an RGB image as a baseline JFIF stream."""
    h, w = img.height, img.width
    ph, pw = -h % 8, -w % 8
    px = np.pad(img.pixels, ((0, ph), (0, pw), (0, 0)), mode="edge").astype(np.float64)
    ycc = px @ _RGB_TO_YCC.T
    ycc[..., 0] -= 128.0
    quant = [scaled_quant(LUMA_QUANT, cfg.quality), scaled_quant(CHROMA_QUANT, cfg.quality)]
    comp_tab = np.array([0, 1, 1], dtype=np.int64)

    coefs = []
    for c in range(3):
        blocks = _to_blocks(ycc[..., c])
        f = _C8 @ blocks @ _C8.T
        q = round_half_away(f / quant[comp_tab[c]]).astype(np.int64)
        coefs.append(q.reshape(-1, 64)[:, ZIGZAG])
    coefs = np.ascontiguousarray(np.stack(coefs, axis=1))

    n_mcu = coefs.shape[0]
    buf = np.empty(n_mcu * 3 * 64 * 8 + 2 * n_mcu + 16, dtype=np.uint8)
    n = entropy.encode_scan(coefs, comp_tab, *_ENC_TABLES, cfg.restart_interval, buf)

    dqt = b"".join(bytes([i]) + bytes(quant[i].ravel()[ZIGZAG].astype(np.uint8)) for i in range(2))
    sof = struct.pack(">BHHB", 8, h, w, 3) + bytes([1, 0x11, 0, 2, 0x11, 1, 3, 0x11, 1])
    dht = (_dht_payload(0x00, DC_LUMA) + _dht_payload(0x10, AC_LUMA)
           + _dht_payload(0x01, DC_CHROMA) + _dht_payload(0x11, AC_CHROMA))
    sos = bytes([3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0])
    parts = [
        b"\xff\xd8",
        _segment(APP0, b"JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00"),
        _segment(DQT, dqt),
        _segment(SOF0, sof),
        _segment(DHT, dht),
    ]
    if cfg.restart_interval:
        parts.append(_segment(DRI, struct.pack(">H", cfg.restart_interval)))
    parts += [_segment(SOS, sos), buf[:n].tobytes(), b"\xff\xd9"]
    return b"".join(parts)


# --------------------------------------------------------------------------
# Decoder
# --------------------------------------------------------------------------

@dataclass
class _Header:
    height: int = 0
    width: int = 0
    comps: list = field(default_factory=list)  # (id, tq)
    quant: dict = field(default_factory=dict)
    huff: dict = field(default_factory=dict)  # (class, id) -> (bits, values)
    restart_interval: int = 0
    scan_tables: list = field(default_factory=list)  # (dc id, ac id) per component
    scan_start: int = 0


def _parse_header(data: bytes) -> _Header:
    if len(data) >= 2 and (data[0] != 0xFF or data[1] != SOI):
        raise FrameError("missing SOI marker")
    hdr = _Header()
    pos = 2
    seen_sof = False
    while True:
        if pos + 4 > len(data):
            raise HeaderTruncatedError("stream ends inside the header")
        if data[pos] != 0xFF:
            raise FrameError(f"expected a marker at byte {pos}")
        marker = data[pos + 1]
        if marker == 0xFF:  # fill byte
            pos += 1
            continue
        length = struct.unpack_from(">H", data, pos + 2)[0]
        body = data[pos + 4:pos + 2 + length]
        if length < 2:
            raise FrameError(f"bad length in segment 0x{marker:02X}")
        if len(body) != length - 2:
            raise HeaderTruncatedError(f"segment 0x{marker:02X} overruns the stream")
        pos += 2 + length
        if marker == DQT:
            _parse_dqt(body, hdr)
        elif marker == DHT:
            _parse_dht(body, hdr)
        elif marker == DRI:
            if len(body) != 2:
                raise FrameError("bad DRI segment")
            hdr.restart_interval = struct.unpack(">H", body)[0]
        elif marker == SOF0:
            _parse_sof(body, hdr)
            seen_sof = True
        elif marker in (0xC1, 0xC2, 0xC3) or 0xC5 <= marker <= 0xCF and marker != 0xCC:
            raise FrameError(f"unsupported frame type 0x{marker:02X}")
        elif marker == SOS:
            if not seen_sof:
                raise FrameError("scan before frame header")
            _parse_sos(body, hdr)
            hdr.scan_start = pos
            return hdr
        elif marker in (SOI, EOI) or RST0 <= marker <= RST0 + 7:
            raise FrameError(f"unexpected marker 0x{marker:02X} in header")
        # APPn / COM / others are skipped


def _parse_dqt(body: bytes, hdr: _Header) -> None:
    i = 0
    while i < len(body):
        pq, tq = body[i] >> 4, body[i] & 15
        if pq != 0 or tq > 3 or i + 65 > len(body):
            raise FrameError("bad quantisation table")
        zz = np.frombuffer(body, np.uint8, 64, i + 1).astype(np.int64)
        if np.any(zz == 0):
            raise FrameError("zero entry in quantisation table")
        table = np.empty(64, np.int64)
        table[ZIGZAG] = zz
        hdr.quant[tq] = table.reshape(8, 8)
        i += 65


def _parse_dht(body: bytes, hdr: _Header) -> None:
    i = 0
    while i < len(body):
        if i + 17 > len(body):
            raise FrameError("bad Huffman table")
        tc, th = body[i] >> 4, body[i] & 15
        bits = list(body[i + 1:i + 17])
        n = sum(bits)
        if tc > 1 or th > 3 or n > 256 or i + 17 + n > len(body):
            raise FrameError("bad Huffman table")
        # the code space must not overflow at any length
        code = 0
        for count in bits:
            code = (code + count) << 1
            if code > (1 << 17):
                raise FrameError("over-subscribed Huffman table")
        values = list(body[i + 17:i + 17 + n])
        hdr.huff[(tc, th)] = (bits, values)
        i += 17 + n


def _parse_sof(body: bytes, hdr: _Header) -> None:
    if len(body) < 6:
        raise FrameError("short frame header")
    precision, h, w, nf = struct.unpack_from(">BHHB", body)
    if precision != 8 or h == 0 or w == 0 or nf not in (1, 3) or len(body) != 6 + 3 * nf:
        raise FrameError("bad frame header")
    comps = []
    for k in range(nf):
        cid, hv, tq = body[6 + 3 * k:9 + 3 * k]
        if hv != 0x11:
            raise FrameError("only 1x1 sampling (4:4:4) is supported")
        comps.append((cid, tq))
    hdr.height, hdr.width, hdr.comps = h, w, comps


def _parse_sos(body: bytes, hdr: _Header) -> None:
    ns = body[0] if body else 0
    if ns != len(hdr.comps) or len(body) != 4 + 2 * ns:
        raise FrameError("bad or non-interleaved scan header")
    ids = [c for c, _ in hdr.comps]
    tables = []
    for k in range(ns):
        cid, t = body[1 + 2 * k], body[2 + 2 * k]
        if cid != ids[k]:
            raise FrameError("scan component order differs from frame")
        tables.append((t >> 4, t & 15))
    if tuple(body[-3:]) != (0, 63, 0):
        raise FrameError("not a baseline sequential scan")
    for (dc, ac), (_, tq) in zip(tables, hdr.comps):
        if (0, dc) not in hdr.huff or (1, ac) not in hdr.huff or tq not in hdr.quant:
            raise FrameError("scan references an undefined table")
    hdr.scan_tables = tables


def _scan_segments(data: np.ndarray, start: int, end: int):
    """(start, end, rst_number_before) for each restart-delimited segment."""
    d = data[start:end]
    hits = np.nonzero((d[:-1] == 0xFF) & (d[1:] >= RST0) & (d[1:] <= RST0 + 7))[0] if d.size > 1 else []
    segs = []
    lo, before = start, None
    for h in hits:
        segs.append((lo, start + int(h), before))
        before = int(d[h + 1]) - RST0
        lo = start + int(h) + 2
    segs.append((lo, end, before))
    return segs


def _entropy_setup(hdr: _Header):
    # pack the referenced Huffman tables into arrays: 0..k-1 DC, k..2k-1 AC
    dc_ids = sorted({dc for dc, _ in hdr.scan_tables})
    ac_ids = sorted({ac for _, ac in hdr.scan_tables})
    if len(dc_ids) > 2 or len(ac_ids) > 2:
        raise FrameError("more than two Huffman table pairs in scan")
    dec = [decode_tables(*hdr.huff[(0, i)]) for i in dc_ids]
    dec += [decode_tables(*hdr.huff[(0, dc_ids[-1])])] * (2 - len(dc_ids))
    dec += [decode_tables(*hdr.huff[(1, i)]) for i in ac_ids]
    dec += [decode_tables(*hdr.huff[(1, ac_ids[-1])])] * (2 - len(ac_ids))
    mincode = np.stack([t[0] for t in dec])
    maxcode = np.stack([t[1] for t in dec])
    valptr = np.stack([t[2] for t in dec])
    huffval = np.zeros((4, 256), np.int64)
    for i, t in enumerate(dec):
        huffval[i, :t[3].size] = t[3]
    # comp_tab selects DC table; AC table is comp_tab + 2, so DC and AC
    # assignments must agree (true for every standard layout)
    comp_tab = np.array([dc_ids.index(dc) for dc, _ in hdr.scan_tables], np.int64)
    if any(ac_ids.index(ac) != comp_tab[k] for k, (_, ac) in enumerate(hdr.scan_tables)):
        raise FrameError("unsupported DC/AC table pairing")
    return comp_tab, (mincode, maxcode, valptr, huffval)


def read_header(data: bytes) -> tuple[int, int]:
    """Validate the headers of a stream prefix; returns (width, height).

    Raises:
        HeaderTruncatedError: the prefix ends before the scan header.
        FrameError: the headers are corrupt or unsupported.
    """
    hdr = _parse_header(bytes(data))
    _entropy_setup(hdr)
    return hdr.width, hdr.height


def header_length(data: bytes) -> int:
    """Bytes before the entropy-coded data (SOI through the SOS segment)."""
    return _parse_header(bytes(data)).scan_start


def jpeg_decode(data: bytes, unreliable=()) -> tuple[RgbImage, DamageReport]:
    """Decode a baseline JFIF stream, concealing damaged restart intervals.

    Args:
        data: the stream.
        unreliable: half-open byte ranges known to be corrupt (for example
            from failed channel codewords). Restart intervals whose data or
            leading RST marker overlaps one are concealed without decoding.

    Raises:
        FrameError: the headers are missing or corrupt.
    """
    hdr = _parse_header(bytes(data))
    comp_tab, tables = _entropy_setup(hdr)
    mincode, maxcode, valptr, huffval = tables
    nf = len(hdr.comps)
    bh, bw = -(-hdr.height // 8), -(-hdr.width // 8)
    n_mcu = bh * bw
    ri = hdr.restart_interval
    n_int = -(-n_mcu // ri) if ri else 1
    span = ri or n_mcu
    arr = np.frombuffer(bytes(data), np.uint8)
    end = len(arr) - 2 if len(arr) >= 2 and arr[-2] == 0xFF and arr[-1] == EOI else len(arr)
    end = max(end, hdr.scan_start)
    segments = _scan_segments(arr, hdr.scan_start, end)

    # map segments onto restart intervals. With the expected segment count
    # the order is trusted (a damaged RST number then costs nothing);
    # otherwise a marker was lost or forged and the RST numbering decides.
    assigned: dict[int, tuple[int, int]] = {0: segments[0][:2]}
    cur = 0
    if len(segments) == n_int:
        assigned = {i: seg[:2] for i, seg in enumerate(segments)}
        segments = segments[:1]
    for lo, hi, r in segments[1:]:
        nxt = cur + 1
        while (nxt - 1) % 8 != r:
            nxt += 1
        if nxt >= n_int:
            continue
        assigned[nxt] = (lo, hi)
        cur = nxt

    coefs = np.zeros((n_mcu, nf, 64), np.int64)
    lost = []
    for i in range(n_int):
        mcu0 = i * span
        count = min(span, n_mcu - mcu0)
        seg = assigned.get(i)
        ok = False
        if seg is not None and any(a < seg[1] and seg[0] - 2 < b for a, b in unreliable):
            seg = None
        if seg is not None:
            status = entropy.decode_interval(arr, seg[0], seg[1], count, comp_tab,
                                             mincode, maxcode, valptr, huffval, coefs, mcu0)
            ok = status == entropy.OK
        if not ok:
            coefs[mcu0:mcu0 + count] = 0
            lost.append(i)

    planes = []
    for c, (_, tq) in enumerate(hdr.comps):
        blocks = coefs[:, c, _INV_ZIGZAG].reshape(-1, 8, 8) * hdr.quant[tq]
        pix = np.empty(blocks.shape, np.int64)
        islow.idct_blocks(np.ascontiguousarray(blocks), pix)
        planes.append(_from_blocks(pix, bh * 8, bw * 8)[:hdr.height, :hdr.width])
    if nf == 1:
        rgb = np.repeat(planes[0][..., None], 3, axis=2).astype(np.uint8)
    else:
        rgb = islow.ycc_to_rgb(*planes)
    return RgbImage(np.ascontiguousarray(rgb)), DamageReport(n_mcu, ri, lost)
