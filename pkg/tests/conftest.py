import numpy as np
import pytest

from hybridbsc import datasets
from hybridbsc.imaging import RgbImage


def _have_data() -> bool:
    try:
        return bool(datasets.carrier_names())
    except OSError:
        return False


requires_data = pytest.mark.skipif(not _have_data(), reason="bundled datasets not found")


@pytest.fixture(scope="session")
def carriers():
    return {name: datasets.load_carrier(name) for name in datasets.carrier_names()}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rgb(rng, h, w) -> RgbImage:
    return RgbImage(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def smooth_rgb(rng, h, w) -> RgbImage:
    """Photo-like test image: smooth gradients plus mild texture."""
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    base = np.stack([
        128 + 90 * np.sin(3 * xx + 1.0) * np.cos(2 * yy),
        128 + 80 * np.cos(4 * yy + xx),
        128 + 70 * np.sin(5 * (xx + yy)),
    ], axis=-1)
    noise = rng.normal(0, 6, size=base.shape)
    return RgbImage(np.clip(np.round(base + noise), 0, 255).astype(np.uint8))


# Acceptance criteria report: one PASS/FAIL line per criterion, printed in
# the terminal summary so it shows whatever pytest's capture mode is.
_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    def record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
