"""End-to-end hybrid link: semantic payload in the carrier, JPEG, LDPC, QAM, channel.

One :func:`run_link` call executes the transmit chain

    digit -> encoder -> quantise -> insert into carrier -> JPEG -> LDPC -> QAM

sends the symbols through the channel, and runs the receive chain

    equalise -> LLRs -> LDPC decode -> JPEG decode -> extract -> dequantise -> decoder

returning fidelity metrics for both the carrier ("bit") image and the digit
("sem") image. :func:`sweep` averages runs over seeds for a grid of
configurations and :func:`emit_outputs` writes the CSV and SVG artifacts.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import datasets
from .embed import EmbedConfig, QuantizedPayload, dequantize, extract, insert, payload_ber, quantize
from .imaging import GrayImage, RgbImage, load_pgm, psnr, ssim, to_uint8
from .phylink import (
    apply_channel,
    default_code,
    demodulate_llr,
    equalize,
    get_modulation,
    ldpc_decode,
    ldpc_encode,
    modulate,
)
from .phylink.ldpc import LdpcCode
from .phylink.ofdm import N_DATA, transmit_ofdm
from .semcodec import SemanticCodecModel, decode_semantic, default_model, encode_semantic, load_model
from .srccodec import FrameError, HeaderTruncatedError, JpegConfig, header_length, jpeg_decode, jpeg_encode, read_header

log = logging.getLogger(__name__)

HYBRID_EMBED = EmbedConfig(alpha=14.0, q=4, midpoint_mode=True, refine_iterations=3)
DEFAULT_BUDGET_QUALITY = 75
CSV_HEADER = ["scheme", "channel", "snr_db", "psnr_bit", "ssim_bit", "psnr_sem", "ssim_sem",
              "payload_ber", "quality", "frame_status"]
FRAME_STATUSES = ("ok", "partial", "frame-error")


class BudgetInfeasibleError(ValueError):
    """Even quality 1 does not fit the symbol budget."""


@dataclass(frozen=True)
class LinkConfig:
    """One link run. ``seed`` drives every random draw of the run.

    ``jpeg_quality`` is an integer or "auto" (rate-matched against
    ``symbol_budget``). ``symbol_budget`` is a symbol count, "default" (the
    QPSK rate-1/2 size of the carrier's quality-75 stream) or
    "unconstrained" (quality 100 when auto). ``snr_db = inf`` is noiseless.
    ``insertion = False`` runs the plain JPEG-LDPC chain.
    """

    seed: int
    carrier: str = "astronaut"
    digit_index: int = 0
    digit_split: str = "test"
    digit_path: str | None = None
    modulation: str = "QPSK"
    channel: str = "awgn"
    snr_db: float = 20.0
    embed: EmbedConfig = HYBRID_EMBED
    jpeg_quality: int | str = "auto"
    restart_interval: int = 8
    symbol_budget: int | str = "default"
    ofdm: bool = False
    insertion: bool = True
    model_path: str | None = None
    ldpc_max_iterations: int = 50

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("seed is mandatory")
        if self.channel.lower() not in ("awgn", "rayleigh"):
            raise ValueError(f"unknown channel {self.channel!r}")
        get_modulation(self.modulation)
        if isinstance(self.jpeg_quality, str) and self.jpeg_quality != "auto":
            raise ValueError(f"jpeg_quality must be 1-100 or 'auto', got {self.jpeg_quality!r}")
        if isinstance(self.symbol_budget, str) and self.symbol_budget not in ("default", "unconstrained"):
            raise ValueError(f"bad symbol_budget {self.symbol_budget!r}")

    @property
    def scheme(self) -> str:
        return f"{'HybridBSC' if self.insertion else 'JPEG-LDPC'}-{get_modulation(self.modulation).scheme}"


@dataclass
class LinkResult:
    psnr_bit: float
    ssim_bit: float
    psnr_sem: float
    ssim_sem: float
    payload_ber: float
    jpeg_quality_used: int
    frame_status: str
    ldpc_iterations: float  # mean over decoded codewords
    ldpc_failures: int      # decoded codewords that did not converge
    codewords: int
    symbols: int
    stream_bytes: int
    lost_mcus: int = 0
    codewords_decoded: int = 0  # fewer than ``codewords`` when lost headers cut decoding short


# --------------------------------------------------------------------------
# Inputs (cached: a sweep reuses them across SNRs and channels)
# --------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _carrier(name: str) -> RgbImage:
    return datasets.load_carrier(name)


@lru_cache(maxsize=256)
def _digit(split: str, index: int, path: str | None) -> GrayImage:
    if path:
        return load_pgm(Path(path).read_bytes())
    digits = datasets.load_mnist(split)
    return digits[index % len(digits)]


@lru_cache(maxsize=4)
def _model(path: str | None) -> SemanticCodecModel:
    return default_model() if path is None else load_model(Path(path).read_bytes())


@lru_cache(maxsize=256)
def _transmit_image(carrier: str, split: str, index: int, path: str | None, model_path: str | None,
                    embed: EmbedConfig, insertion: bool) -> tuple[RgbImage, QuantizedPayload | None]:
    host = _carrier(carrier)
    if not insertion:
        return host, None
    feat = encode_semantic(_digit(split, index, path), _model(model_path))
    payload = quantize(feat, embed.q)
    return insert(host, payload, embed), payload


@lru_cache(maxsize=512)
def _encoded(image_key: tuple, quality: int, restart_interval: int) -> bytes:
    image, _ = _transmit_image(*image_key)
    return jpeg_encode(image, JpegConfig(quality, restart_interval=restart_interval))


def clear_caches() -> None:
    for fn in (_carrier, _digit, _model, _transmit_image, _encoded, default_symbol_budget):
        fn.cache_clear()


# --------------------------------------------------------------------------
# Rate matching
# --------------------------------------------------------------------------

def coded_bits(stream_bytes: int, code: LdpcCode) -> int:
    """Channel bits for a stream after padding to whole codewords."""
    return -(-stream_bytes * 8 // code.k) * code.n


@lru_cache(maxsize=64)
def default_symbol_budget(carrier: str, restart_interval: int = 8) -> int:
    """Symbols needed to send the carrier's quality-75 JPEG with QPSK, rate 1/2."""
    stream = jpeg_encode(_carrier(carrier), JpegConfig(DEFAULT_BUDGET_QUALITY, restart_interval=restart_interval))
    return coded_bits(len(stream), default_code()) // 2


def rate_match(symbol_budget: int, modulation, code_rate: float, carrier: RgbImage,
               restart_interval: int = 8, encode=None) -> JpegConfig:
    """Largest JPEG quality whose LDPC-padded stream fits the symbol budget.

    Args:
        symbol_budget: channel symbols available.
        modulation: a Modulation or its name.
        code_rate: LDPC rate; the code block is the default 648-bit code.
        carrier: image to compress.
        restart_interval: JPEG restart interval.
        encode: optional ``quality -> bytes`` (used to reuse cached streams).

    Raises:
        BudgetInfeasibleError: quality 1 already exceeds the budget.
    """
    m = get_modulation(modulation) if isinstance(modulation, str) else modulation
    code = default_code()
    bit_budget = int(symbol_budget * m.bits_per_symbol * code_rate)
    encode = encode or (lambda q: jpeg_encode(carrier, JpegConfig(q, restart_interval=restart_interval)))

    def fits(q: int) -> bool:
        info_bits = coded_bits(len(encode(q)), code) * code_rate
        return info_bits <= bit_budget

    if not fits(1):
        raise BudgetInfeasibleError(f"quality 1 needs more than {symbol_budget} symbols")
    lo, hi = 1, 100
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if fits(mid):
            lo = mid
        else:
            hi = mid - 1
    return JpegConfig(lo, restart_interval=restart_interval)


def _select_quality(cfg: LinkConfig, image_key: tuple) -> int:
    if cfg.jpeg_quality != "auto":
        return int(cfg.jpeg_quality)
    if cfg.symbol_budget == "unconstrained":
        return 100
    budget = (default_symbol_budget(cfg.carrier, cfg.restart_interval)
              if cfg.symbol_budget == "default" else int(cfg.symbol_budget))
    return _rate_matched_quality(image_key, budget, get_modulation(cfg.modulation).scheme, cfg.restart_interval)


@lru_cache(maxsize=512)
def _rate_matched_quality(image_key: tuple, budget: int, scheme: str, restart_interval: int) -> int:
    image, _ = _transmit_image(*image_key)
    jc = rate_match(budget, scheme, default_code().rate, image, restart_interval,
                    encode=lambda q: _encoded(image_key, q, restart_interval))
    return jc.quality


# --------------------------------------------------------------------------
# The link
# --------------------------------------------------------------------------

def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, np.uint8))


def bits_to_bytes(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, np.uint8)).tobytes()


def channel_llrs(bits: np.ndarray, cfg: LinkConfig, seed) -> np.ndarray:
    """LDPC-encode, modulate, send and soft-demap a bit stream.

    Returns per-codeword LLRs of shape ``(codewords, n)``; the stream is
    zero-padded to whole codewords.
    """
    code = default_code()
    m = get_modulation(cfg.modulation)
    n_cw = max(1, -(-bits.size // code.k))
    info = np.zeros(n_cw * code.k, np.uint8)
    info[:bits.size] = bits
    cw = ldpc_encode(info.reshape(n_cw, code.k), code)
    x = modulate(cw.ravel(), m)
    if cfg.ofdm:
        pad = -x.size % N_DATA
        x_tx = np.concatenate([x, np.full(pad, m.constellation[0])])
        cs = transmit_ofdm(x_tx, cfg.channel, cfg.snr_db, seed)
    else:
        cs = apply_channel(x, cfg.channel, cfg.snr_db, seed)
    x_hat, var = equalize(cs)
    llr = demodulate_llr(x_hat[:x.size], m, var[:x.size])
    return llr.reshape(n_cw, code.n)


def transmit_bits(bits: np.ndarray, cfg: LinkConfig, seed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Channel-code, send and decode a bit stream.

    Returns the decoded bits (same length as ``bits``), per-codeword
    convergence flags and iteration counts.
    """
    llr = channel_llrs(bits, cfg, seed)
    res = ldpc_decode(llr, default_code(), cfg.ldpc_max_iterations)
    return res.info.ravel()[:bits.size], res.converged, res.iterations


@dataclass
class _Reception:
    stream: bytes | None  # None: headers unusable, rest of the stream skipped
    converged: np.ndarray
    iterations: np.ndarray
    codewords: int


def _receive(stream: bytes, shape: tuple[int, int], cfg: LinkConfig, seed) -> _Reception:
    # Codewords are decoded independently, so the ones carrying the JPEG
    # headers go first. If their bytes already doom the frame, decoding the
    # rest cannot change the outcome and is skipped.
    code = default_code()
    bits = bytes_to_bits(stream)
    llr = channel_llrs(bits, cfg, seed)
    n_head = min(len(llr), -(-header_length(stream) * 8 // code.k))
    head = ldpc_decode(llr[:n_head], code, cfg.ldpc_max_iterations)
    prefix = bits_to_bytes(head.info.ravel()[:min(bits.size, n_head * code.k)])
    try:
        width, height = read_header(prefix)
        doomed = (height, width) != shape
    except HeaderTruncatedError:
        doomed = False
    except FrameError:
        doomed = True
    if doomed:
        return _Reception(None, head.converged, head.iterations, len(llr))
    tail = ldpc_decode(llr[n_head:], code, cfg.ldpc_max_iterations)
    info = np.concatenate([head.info.ravel(), tail.info.ravel()])[:bits.size]
    return _Reception(bits_to_bytes(info), np.concatenate([head.converged, tail.converged]),
                      np.concatenate([head.iterations, tail.iterations]), len(llr))


def _failed_byte_ranges(converged: np.ndarray, k: int) -> list[tuple[int, int]]:
    # byte spans of the information bits of non-converged codewords, merged
    out: list[tuple[int, int]] = []
    for i in np.flatnonzero(~converged):
        lo, hi = int(i) * k // 8, -(-(int(i) + 1) * k // 8)
        if out and out[-1][1] >= lo:
            out[-1] = (out[-1][0], hi)
        else:
            out.append((lo, hi))
    return out


def _metrics_sem(decoded: np.ndarray, digit: GrayImage) -> tuple[float, float]:
    rec = to_uint8(decoded * 255.0)
    return psnr(rec, digit.pixels), ssim(rec, digit.pixels)


def run_link(cfg: LinkConfig) -> LinkResult:
    """Run the full transmit/receive chain once; deterministic in ``cfg``."""
    image_key = (cfg.carrier, cfg.digit_split, cfg.digit_index, cfg.digit_path, cfg.model_path,
                 cfg.embed, cfg.insertion)
    host = _carrier(cfg.carrier)
    image, payload = _transmit_image(*image_key)
    quality = _select_quality(cfg, image_key)
    stream = _encoded(image_key, quality, cfg.restart_interval)

    rx = _receive(stream, image.pixels.shape[:2], cfg, np.random.SeedSequence(cfg.seed))
    converged = rx.converged

    status = "ok"
    lost = 0
    try:
        if rx.stream is None:
            raise FrameError("headers lost")
        received, report = jpeg_decode(rx.stream, _failed_byte_ranges(converged, default_code().k))
        if (received.width, received.height) != (image.width, image.height):
            raise FrameError("decoded frame has the wrong size")
        lost = report.lost_mcus
        if not report.intact or not converged.all():
            status = "partial"
    except FrameError as exc:
        log.debug("frame error: %s", exc)
        status = "frame-error"
        # nothing usable arrived: the receiver shows a mid-gray frame
        received = RgbImage(np.full_like(image.pixels, 128))

    res = LinkResult(
        psnr_bit=psnr(received, host),
        ssim_bit=ssim(received, host),
        psnr_sem=math.nan,
        ssim_sem=math.nan,
        payload_ber=math.nan,
        jpeg_quality_used=quality,
        frame_status=status,
        ldpc_iterations=float(rx.iterations.mean()),
        ldpc_failures=int((~converged).sum()),
        codewords=rx.codewords,
        symbols=int(rx.codewords * default_code().n // get_modulation(cfg.modulation).bits_per_symbol),
        stream_bytes=len(stream),
        lost_mcus=lost,
        codewords_decoded=int(converged.size),
    )
    if payload is not None:
        got = extract(received, len(payload), cfg.embed, payload.feature_shape)
        digit = _digit(cfg.digit_split, cfg.digit_index, cfg.digit_path)
        decoded = decode_semantic(dequantize(got, cfg.embed.q), _model(cfg.model_path))
        res.payload_ber = payload_ber(payload, got)
        res.psnr_sem, res.ssim_sem = _metrics_sem(decoded, digit)
    return res


def semantic_baseline(cfg: LinkConfig) -> tuple[float, float]:
    """Digit PSNR/SSIM of the codec alone (quantised features, no channel)."""
    digit = _digit(cfg.digit_split, cfg.digit_index, cfg.digit_path)
    model = _model(cfg.model_path)
    feat = dequantize(quantize(encode_semantic(digit, model), cfg.embed.q), cfg.embed.q)
    return _metrics_sem(decode_semantic(feat, model), digit)


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------

@dataclass
class SweepRow:
    config: LinkConfig
    runs: list[LinkResult] = field(default_factory=list)

    def mean(self, name: str) -> float:
        vals = np.array([getattr(r, name) for r in self.runs], dtype=float)
        if np.all(np.isnan(vals)):
            return math.nan
        return float(np.nanmean(vals))

    def stderr(self, name: str) -> float:
        vals = np.array([getattr(r, name) for r in self.runs], dtype=float)
        vals = vals[np.isfinite(vals)]
        return float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0

    def status_summary(self) -> str:
        c = Counter(r.frame_status for r in self.runs)
        return " ".join(f"{s}={c.get(s, 0)}" for s in FRAME_STATUSES)

    def quality_summary(self) -> str:
        qs = sorted({r.jpeg_quality_used for r in self.runs})
        return str(qs[0]) if len(qs) == 1 else f"{np.mean([r.jpeg_quality_used for r in self.runs]):.2f}"


@dataclass
class SweepTable:
    rows: list[SweepRow]
    repeats: int
    meta: dict = field(default_factory=dict)


def _repeat_config(cfg: LinkConfig, r: int) -> LinkConfig:
    # repeat r draws seed + r and the next digit; every grid point sees the
    # same seeds and digits so curves compare like with like
    return replace(cfg, seed=cfg.seed + r, digit_index=cfg.digit_index + r)


def _run_point(args) -> list[LinkResult]:
    cfg, repeats = args
    return [run_link(_repeat_config(cfg, r)) for r in range(repeats)]


def sweep(grid: list[LinkConfig], repeats: int = 10, workers: int = 1, progress=None) -> SweepTable:
    """Average ``repeats`` seeded runs for every grid point (order preserved)."""
    if not grid:
        raise ValueError("empty sweep grid")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    jobs = [(cfg, repeats) for cfg in grid]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = []
        for i, job in enumerate(jobs):
            results.append(_run_point(job))
            if progress is not None:
                progress(i + 1, len(jobs))
    return SweepTable([SweepRow(cfg, runs) for cfg, runs in zip(grid, results)], repeats)


def build_grid(base: LinkConfig, modulations, channels, snrs, baseline: bool = True) -> list[LinkConfig]:
    """Cartesian grid; with ``baseline`` every point is also run without insertion."""
    grid = []
    variants = (True, False) if baseline else (base.insertion,)
    for ins in variants:
        for ch in channels:
            for mod in modulations:
                for snr in snrs:
                    grid.append(replace(base, insertion=ins, channel=ch, modulation=mod, snr_db=float(snr)))
    return grid


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6f}"
    return str(v)


def table_csv(table: SweepTable) -> str:
    buf = io.StringIO()
    for key, value in table.meta.items():
        buf.write(f"# {key} = {value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in table.rows:
        cfg = row.config
        w.writerow([
            cfg.scheme, cfg.channel.lower(), _fmt(float(cfg.snr_db)),
            _fmt(row.mean("psnr_bit")), _fmt(row.mean("ssim_bit")),
            _fmt(row.mean("psnr_sem")), _fmt(row.mean("ssim_sem")),
            _fmt(row.mean("payload_ber")), row.quality_summary(), row.status_summary(),
        ])
    return buf.getvalue()


def emit_outputs(table: SweepTable, out_dir) -> list[Path]:
    """Write ``results.csv`` and one SVG per metric and channel."""
    from .plots import line_plot

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "results.csv"]
    written[0].write_text(table_csv(table))
    channels = sorted({r.config.channel.lower() for r in table.rows})
    for metric in ("psnr", "ssim"):
        for ch in channels:
            series: dict[str, list[tuple[float, float]]] = {}
            for row in table.rows:
                cfg = row.config
                if cfg.channel.lower() != ch:
                    continue
                kinds = ("bit", "sem") if cfg.insertion else ("bit",)
                for kind in kinds:
                    label = f"{cfg.scheme}-{kind}" if cfg.insertion else cfg.scheme
                    series.setdefault(label, []).append((float(cfg.snr_db), row.mean(f"{metric}_{kind}")))
            path = out / f"{metric}_{ch}.svg"
            path.write_text(line_plot(series, title=f"{metric.upper()} vs SNR ({ch.upper()})",
                                      xlabel="SNR (dB)", ylabel=metric.upper()))
            written.append(path)
    return written
