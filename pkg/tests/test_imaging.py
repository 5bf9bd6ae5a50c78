import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from hybridbsc.imaging import (
    BadMagicError,
    DimensionMismatchError,
    GrayImage,
    MalformedHeaderError,
    RgbImage,
    TruncatedPayloadError,
    UnsupportedMaxvalError,
    load_idx,
    load_pgm,
    load_ppm,
    psnr,
    rgb_to_ycbcr,
    save_idx,
    save_pgm,
    save_ppm,
    ssim,
    ycbcr_to_rgb,
)

from conftest import random_rgb, smooth_rgb


def _single(rgb):
    return RgbImage(np.array(rgb, dtype=np.uint8).reshape(1, 1, 3))


def _planes(y, cb, cr):
    return tuple(np.array([[v]], dtype=float) for v in (y, cb, cr))


class TestPnm:
    def test_smallest_ppm(self):
        img = load_ppm(b"P6\n1 1\n255\n\x00\x00\x00")
        assert (img.width, img.height) == (1, 1)
        assert img.pixels.tolist() == [[[0, 0, 0]]]

    def test_truncated_ppm(self):
        with pytest.raises(TruncatedPayloadError):
            load_ppm(b"P6\n2 2\n255\n" + bytes(9))

    @pytest.mark.parametrize("data, err", [
        (b"P5\n1 1\n255\n\x00", MalformedHeaderError),
        (b"P6\n1 1\n", MalformedHeaderError),
        (b"P6\n0 1\n255\n", MalformedHeaderError),
        (b"P6\n1 1\n65535\n" + bytes(6), UnsupportedMaxvalError),
    ])
    def test_bad_headers(self, data, err):
        with pytest.raises(err):
            load_ppm(data)

    def test_header_comments(self):
        img = load_ppm(b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03")
        assert img.pixels.tolist() == [[[1, 2, 3]]]

    def test_ppm_round_trip(self, rng):
        data = save_ppm(random_rgb(rng, 5, 7))
        assert save_ppm(load_ppm(data)) == data

    def test_pgm_round_trip(self, rng):
        g = GrayImage(rng.integers(0, 256, size=(3, 4), dtype=np.uint8))
        assert np.array_equal(load_pgm(save_pgm(g)).pixels, g.pixels)


class TestIdx:
    def test_one_digit(self):
        data = struct.pack(">IIII", 0x803, 1, 28, 28) + bytes(range(256)) * 3 + bytes(16)
        imgs = load_idx(data)
        assert len(imgs) == 1
        assert imgs[0].pixels.shape == (28, 28)
        assert imgs[0].pixels[0, 1] == 1

    def test_label_magic_rejected(self):
        with pytest.raises(BadMagicError):
            load_idx(struct.pack(">IIII", 0x801, 1, 28, 28) + bytes(784))

    def test_truncated(self):
        with pytest.raises(TruncatedPayloadError):
            load_idx(struct.pack(">IIII", 0x803, 2, 28, 28) + bytes(784))

    def test_round_trip(self, rng):
        imgs = [GrayImage(rng.integers(0, 256, (28, 28), dtype=np.uint8)) for _ in range(3)]
        back = load_idx(save_idx(imgs))
        assert all(np.array_equal(a.pixels, b.pixels) for a, b in zip(imgs, back))


class TestColour:
    def test_black(self):
        y, cb, cr = rgb_to_ycbcr(_single((0, 0, 0)))
        assert (y[0, 0], cb[0, 0], cr[0, 0]) == (16, 128, 128)

    def test_white_luma(self):
        assert rgb_to_ycbcr(_single((255, 255, 255)))[0][0, 0] == pytest.approx(235.045, abs=1e-9)

    def test_red(self):
        y, cb, cr = rgb_to_ycbcr(_single((255, 0, 0)))
        assert (y[0, 0], cb[0, 0], cr[0, 0]) == pytest.approx((81.535, 90.26, 239.945), abs=1e-9)

    @pytest.mark.parametrize("ycc, rgb", [
        ((16, 128, 128), (0, 0, 0)),
        ((235.045, 128, 128), (255, 255, 255)),
        ((81.535, 90.26, 239.945), (255, 0, 0)),
    ])
    def test_inverse_points(self, ycc, rgb):
        assert ycbcr_to_rgb(*_planes(*ycc)).pixels[0, 0].tolist() == list(rgb)

    def test_round_trip_random_triples(self, rng):
        img = RgbImage(rng.integers(0, 256, size=(1000, 1000, 3), dtype=np.uint8))
        assert np.array_equal(ycbcr_to_rgb(*rgb_to_ycbcr(img)).pixels, img.pixels)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            ycbcr_to_rgb(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3)))


class TestPsnr:
    def test_identical_is_inf(self, rng):
        img = random_rgb(rng, 4, 4)
        assert psnr(img, img) == math.inf

    def test_off_by_one(self):
        a = np.full((8, 8), 100, np.uint8)
        assert psnr(a, a + 1) == pytest.approx(48.1308, abs=1e-4)

    def test_maximal_error(self):
        assert psnr(np.zeros((4, 4)), np.full((4, 4), 255.0)) == pytest.approx(0.0)

    def test_decreases_with_error(self):
        a = np.full((8, 8), 100.0)
        vals = [psnr(a, a + e) for e in range(1, 20)]
        assert all(x > y for x, y in zip(vals, vals[1:]))

    def test_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            psnr(np.zeros((2, 2)), np.zeros((2, 3)))


class TestSsim:
    def test_identical(self, rng):
        img = smooth_rgb(rng, 32, 32)
        assert ssim(img, img) == pytest.approx(1.0)

    def test_constant_offset(self):
        a = np.full((20, 20), 100.0)
        v = ssim(a, a + 10)
        assert 0 < v < 1
        c1 = (0.01 * 255) ** 2
        assert v == pytest.approx((2 * 100 * 110 + c1) / (100 ** 2 + 110 ** 2 + c1))

    def test_negated(self, rng):
        a = smooth_rgb(rng, 48, 48).pixels[..., 0].astype(float)
        assert ssim(a, 255 - a) < 0.5

    def test_too_small(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_matches_skimage(self, rng):
        a = smooth_rgb(rng, 64, 64).pixels[..., 1].astype(float)
        b = np.clip(a + rng.normal(0, 12, a.shape), 0, 255)
        ref = structural_similarity(a, b, data_range=255, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False)
        assert ssim(a, b) == pytest.approx(ref, abs=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric(self, seed):
        r = np.random.default_rng(seed)
        a = r.integers(0, 256, (16, 16)).astype(float)
        b = r.integers(0, 256, (16, 16)).astype(float)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
        assert psnr(a, b) == psnr(b, a)
        assert -1 <= ssim(a, b) <= 1
