"""Physical layer: LDPC coding, QAM mapping, channels, equalisation, OFDM."""

from .channel import ChannelSymbols, apply_channel, channel_awgn, channel_rayleigh, equalize, noise_variance
from .ldpc import DecodeResult, LdpcCode, default_code, ldpc_decode, ldpc_encode
from .modulation import QAM16, QAM64, QPSK, Modulation, demodulate_llr, get_modulation, modulate
from .ofdm import ofdm_deframe, ofdm_frame

__all__ = [
    "ChannelSymbols", "apply_channel", "channel_awgn", "channel_rayleigh", "equalize", "noise_variance",
    "DecodeResult", "LdpcCode", "default_code", "ldpc_decode", "ldpc_encode",
    "QAM16", "QAM64", "QPSK", "Modulation", "demodulate_llr", "get_modulation", "modulate",
    "ofdm_deframe", "ofdm_frame",
]
