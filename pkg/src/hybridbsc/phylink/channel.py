"""Flat AWGN and Rayleigh channels with zero-forcing equalisation.

``y = h x + n`` per symbol. The noise is circular complex Gaussian with
``E|n|^2 = sigma2 = 10^(-snr_db/10)`` (unit-energy symbols, so ``snr_db`` is
Es/N0). ``snr_db = inf`` is the noiseless mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ERASURE_THRESHOLD = 1e-12


@dataclass
class ChannelSymbols:
    x: np.ndarray
    y: np.ndarray
    h: np.ndarray
    noise_variance: float


def noise_variance(snr_db: float) -> float:
    return 0.0 if math.isinf(snr_db) and snr_db > 0 else 10.0 ** (-snr_db / 10.0)


def _noise(rng: np.random.Generator, size: int, var: float) -> np.ndarray:
    if var == 0.0:
        return np.zeros(size, complex)
    return math.sqrt(var / 2) * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def channel_awgn(x: np.ndarray, snr_db: float, seed) -> ChannelSymbols:
    x = np.asarray(x, dtype=np.complex128)
    rng = np.random.default_rng(seed)
    var = noise_variance(snr_db)
    return ChannelSymbols(x, x + _noise(rng, x.size, var), np.ones(x.size, complex), var)


def rayleigh_gains(rng: np.random.Generator, size: int) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2)


def channel_rayleigh(x: np.ndarray, snr_db: float, seed) -> ChannelSymbols:
    """I.i.d. per-symbol flat fading with E|h|^2 = 1 (perfect CSI kept in ``h``)."""
    x = np.asarray(x, dtype=np.complex128)
    rng = np.random.default_rng(seed)
    h = rayleigh_gains(rng, x.size)
    var = noise_variance(snr_db)
    return ChannelSymbols(x, h * x + _noise(rng, x.size, var), h, var)


def apply_channel(x: np.ndarray, kind: str, snr_db: float, seed) -> ChannelSymbols:
    kind = kind.lower()
    if kind == "awgn":
        return channel_awgn(x, snr_db, seed)
    if kind == "rayleigh":
        return channel_rayleigh(x, snr_db, seed)
    raise ValueError(f"unknown channel {kind!r}")


def equalize(cs: ChannelSymbols) -> tuple[np.ndarray, np.ndarray]:
    """Zero-forcing: ``x_hat = y / h`` and post-equaliser noise ``sigma2 / |h|^2``.

    Symbols with ``|h|`` below 1e-12 are erased: x_hat 0, variance inf.
    """
    h = np.asarray(cs.h, dtype=np.complex128)
    mag2 = np.abs(h) ** 2
    erased = np.abs(h) < ERASURE_THRESHOLD
    safe = np.where(erased, 1.0, h)
    x_hat = np.where(erased, 0.0, cs.y / safe)
    var = np.where(erased, np.inf, cs.noise_variance / np.where(erased, 1.0, mag2))
    return x_hat, var
