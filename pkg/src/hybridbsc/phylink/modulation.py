"""Gray-labelled QPSK / 16QAM / 64QAM mapping and max-log soft demapping.

Each constellation is a product of two Gray-labelled PAM axes: the first
half of a symbol's bits selects the in-phase level, the second half the
quadrature level. Points are scaled to unit average energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# per-axis (label value -> level), label bits read MSB first
_AXIS_LEVELS = {
    1: {0b0: +1, 0b1: -1},
    2: {0b00: -3, 0b01: -1, 0b11: +1, 0b10: +3},
    3: {0b000: -7, 0b001: -5, 0b011: -3, 0b010: -1, 0b110: +1, 0b111: +3, 0b101: +5, 0b100: +7},
}
_SCALE = {2: 1 / math.sqrt(2), 4: 1 / math.sqrt(10), 6: 1 / math.sqrt(42)}
LLR_CLIP = 1e3


class ModulationLengthError(ValueError):
    pass


@dataclass(frozen=True)
class Modulation:
    scheme: str
    bits_per_symbol: int

    @cached_property
    def axis_bits(self) -> int:
        return self.bits_per_symbol // 2

    @cached_property
    def axis_levels(self) -> np.ndarray:
        """Scaled level for every per-axis label value."""
        table = _AXIS_LEVELS[self.axis_bits]
        return np.array([table[v] for v in range(1 << self.axis_bits)], float) * _SCALE[self.bits_per_symbol]

    @cached_property
    def constellation(self) -> np.ndarray:
        """Complex point for every full label (I bits are the high half)."""
        lv = self.axis_levels
        labels = np.arange(1 << self.bits_per_symbol)
        return lv[labels >> self.axis_bits] + 1j * lv[labels & ((1 << self.axis_bits) - 1)]


QPSK = Modulation("QPSK", 2)
QAM16 = Modulation("16QAM", 4)
QAM64 = Modulation("64QAM", 6)
SCHEMES = {m.scheme: m for m in (QPSK, QAM16, QAM64)}


def get_modulation(name: str) -> Modulation:
    key = name.upper().replace("-", "")
    key = {"4QAM": "QPSK", "QAM16": "16QAM", "QAM64": "64QAM"}.get(key, key)
    if key not in SCHEMES:
        raise ValueError(f"unknown modulation {name!r}; choose from {sorted(SCHEMES)}")
    return SCHEMES[key]


def _bits_to_values(bits: np.ndarray, width: int) -> np.ndarray:
    weights = 1 << np.arange(width - 1, -1, -1)
    return bits.reshape(-1, width).astype(np.int64) @ weights


def modulate(bits: np.ndarray, m: Modulation) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size % m.bits_per_symbol:
        raise ModulationLengthError(f"{bits.size} bits is not a multiple of {m.bits_per_symbol}")
    return m.constellation[_bits_to_values(bits, m.bits_per_symbol)]


def demodulate_llr(y: np.ndarray, m: Modulation, noise_var) -> np.ndarray:
    """Max-log LLRs, positive when bit 0 is more likely.

    For every bit, ``(d1^2 - d0^2) / noise_var`` with ``d0``/``d1`` the
    distance to the nearest point whose label has a 0/1 there. The metric
    separates per axis. ``noise_var`` may be scalar or per symbol; an
    infinite variance (erasure) gives LLR 0.
    """
    y = np.asarray(y, dtype=np.complex128).ravel()
    nv = np.broadcast_to(np.asarray(noise_var, dtype=np.float64), y.shape)
    inv = np.where(np.isinf(nv), 0.0, 1.0 / np.maximum(nv, 1e-300))
    ab = m.axis_bits
    levels = m.axis_levels
    labels = np.arange(levels.size)
    out = np.empty((y.size, m.bits_per_symbol))
    for axis, comp in enumerate((y.real, y.imag)):
        d2 = (comp[:, None] - levels[None, :]) ** 2
        for b in range(ab):
            mask = (labels >> (ab - 1 - b)) & 1
            d0 = d2[:, mask == 0].min(axis=1)
            d1 = d2[:, mask == 1].min(axis=1)
            out[:, axis * ab + b] = (d1 - d0) * inv
    return np.clip(out, -LLR_CLIP, LLR_CLIP).ravel()


def hard_decision(y: np.ndarray, m: Modulation) -> np.ndarray:
    return (demodulate_llr(y, m, 1.0) < 0).astype(np.uint8)
