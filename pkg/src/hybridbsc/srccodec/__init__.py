"""Baseline JPEG source codec with restart-marker error containment."""

from .codec import (
    DamageReport,
    FrameError,
    HeaderTruncatedError,
    JpegConfig,
    JpegError,
    header_length,
    jpeg_decode,
    jpeg_encode,
    read_header,
)

__all__ = ["DamageReport", "FrameError", "HeaderTruncatedError", "JpegConfig", "JpegError", "header_length",
           "jpeg_decode", "jpeg_encode", "read_header"]
