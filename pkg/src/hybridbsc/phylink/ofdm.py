"""802.11a-style OFDM framing: 64-point IFFT, 48 data + 4 pilot tones, 16-sample CP."""

from __future__ import annotations

import numpy as np

N_FFT = 64
N_CP = 16
N_DATA = 48
PILOT_TONES = np.array([-21, -7, 7, 21])
PILOT_VALUES = np.array([1.0, 1.0, 1.0, -1.0])
DATA_TONES = np.array([k for k in range(-26, 27) if k != 0 and k not in PILOT_TONES])
SYMBOL_LEN = N_FFT + N_CP


class OfdmLengthError(ValueError):
    pass


def _bins(tones: np.ndarray) -> np.ndarray:
    return tones % N_FFT


def ofdm_frame(x: np.ndarray) -> np.ndarray:
    """Data symbols (multiple of 48) -> time samples, 80 per OFDM symbol.

    The unitary IFFT keeps per-tone energy equal to per-sample energy, so
    time-domain noise of variance s2 shows up as s2 on every tone.
    """
    x = np.asarray(x, dtype=np.complex128).ravel()
    if x.size % N_DATA:
        raise OfdmLengthError(f"{x.size} symbols is not a multiple of {N_DATA}")
    grid = np.zeros((x.size // N_DATA, N_FFT), complex)
    grid[:, _bins(DATA_TONES)] = x.reshape(-1, N_DATA)
    grid[:, _bins(PILOT_TONES)] = PILOT_VALUES
    t = np.fft.ifft(grid, axis=1, norm="ortho")
    return np.concatenate([t[:, -N_CP:], t], axis=1).ravel()


def ofdm_deframe(samples: np.ndarray) -> np.ndarray:
    """Time samples -> data-tone values (drops CP, FFT, discards pilots)."""
    s = np.asarray(samples, dtype=np.complex128).ravel()
    if s.size % SYMBOL_LEN:
        raise OfdmLengthError(f"{s.size} samples is not a multiple of {SYMBOL_LEN}")
    t = s.reshape(-1, SYMBOL_LEN)[:, N_CP:]
    f = np.fft.fft(t, axis=1, norm="ortho")
    return f[:, _bins(DATA_TONES)].ravel()


def occupied_bins(samples: np.ndarray, tol: float = 1e-9) -> int:
    """Number of FFT bins carrying energy in any OFDM symbol."""
    t = np.asarray(samples).reshape(-1, SYMBOL_LEN)[:, N_CP:]
    f = np.fft.fft(t, axis=1, norm="ortho")
    return int(np.count_nonzero(np.abs(f).max(axis=0) > tol))


def transmit_ofdm(x: np.ndarray, kind: str, snr_db: float, seed):
    """Send data symbols through OFDM framing and a time-domain channel.

    AWGN adds noise of variance sigma2 per time sample (sigma2 per tone after
    the unitary FFT). Rayleigh uses block fading: one complex gain per OFDM
    symbol, constant over its 80 samples, so the cyclic prefix keeps the
    tones orthogonal. Returns frequency-domain ``ChannelSymbols`` for the
    data tones; ``x`` must already be padded to a multiple of 48.
    """
    from .channel import ChannelSymbols, _noise, noise_variance, rayleigh_gains

    x = np.asarray(x, dtype=np.complex128).ravel()
    tx = ofdm_frame(x)
    n_sym = x.size // N_DATA
    rng = np.random.default_rng(seed)
    var = noise_variance(snr_db)
    kind = kind.lower()
    if kind == "awgn":
        g = np.ones(n_sym, complex)
    elif kind == "rayleigh":
        g = rayleigh_gains(rng, n_sym)
    else:
        raise ValueError(f"unknown channel {kind!r}")
    rx = (tx.reshape(n_sym, SYMBOL_LEN) * g[:, None]).ravel() + _noise(rng, tx.size, var)
    return ChannelSymbols(x, ofdm_deframe(rx), np.repeat(g, N_DATA), var)
