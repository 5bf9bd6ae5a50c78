import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridbsc import cli
from hybridbsc.config import ConfigError, SweepSettings, dumps, load, loads, parse_snrs, resolved_items
from hybridbsc.embed import EmbedConfig
from hybridbsc.harness import HYBRID_EMBED, LinkConfig
from hybridbsc.imaging import GrayImage, RgbImage, load_pgm, save_pgm, save_ppm, ssim

from conftest import requires_data, smooth_rgb


class TestParseSnrs:
    @pytest.mark.parametrize("text,expected", [
        ("0,5,10", (0.0, 5.0, 10.0)),
        ("0:20:5", (0.0, 5.0, 10.0, 15.0, 20.0)),
        ("0:1:0.5", (0.0, 0.5, 1.0)),
        ("3:4:2", (3.0,)),
        ("inf", (math.inf,)),
    ])
    def test_forms(self, text, expected):
        assert parse_snrs(text) == expected

    @pytest.mark.parametrize("text", ["a,b", "0:10", "0:10:0", "0:10:-1"])
    def test_bad(self, text):
        with pytest.raises(ConfigError):
            parse_snrs(text)


class TestConfigFile:
    def test_minimal(self):
        cfg, sw = loads("[link]\nseed = 5\n")
        assert cfg == LinkConfig(seed=5)
        assert sw == SweepSettings()

    def test_full(self):
        text = """
[link]
seed = 7
modulation = 16QAM
snr_db = 12.5
jpeg_quality = 80
symbol_budget = unconstrained
ofdm = yes
digit_path = none

[embed]
alpha = 20
refine_iterations = 0

[sweep]
modulations = QPSK, 64QAM
snrs = 0:10:5
repeats = 3
baseline = false
"""
        cfg, sw = loads(text)
        assert cfg.modulation == "16QAM" and cfg.snr_db == 12.5
        assert cfg.jpeg_quality == 80 and cfg.symbol_budget == "unconstrained"
        assert cfg.ofdm is True and cfg.digit_path is None
        assert cfg.embed == replace(HYBRID_EMBED, alpha=20.0, refine_iterations=0)
        assert sw.modulations == ("QPSK", "64QAM") and sw.snrs == (0.0, 5.0, 10.0)
        assert sw.repeats == 3 and sw.baseline is False

    @pytest.mark.parametrize("text", [
        "[link]\ncarrier = astronaut\n",
        "[link]\nseed = 1\ncolour = red\n",
        "[link]\nseed = 1\n[extra]\na = 1\n",
        "[link]\nseed = x\n",
        "[link]\nseed = 1\nofdm = maybe\n",
        "[link]\nseed = 1\nchannel = rician\n",
        "[link]\nseed = 1\n[sweep]\nrepeats = many\n",
        "[link]\nseed = 1\n[sweep]\nspeed = 3\n",
        "not an ini file",
    ])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            loads(text)

    @settings(max_examples=40, deadline=None)
    @given(
        seed=st.integers(0, 2**31),
        mod=st.sampled_from(["QPSK", "16QAM", "64QAM"]),
        channel=st.sampled_from(["awgn", "rayleigh"]),
        snr=st.floats(-10, 40, allow_nan=False) | st.just(math.inf),
        quality=st.integers(1, 100) | st.just("auto"),
        budget=st.integers(1, 10**6) | st.sampled_from(["default", "unconstrained"]),
        alpha=st.floats(1, 64, allow_nan=False),
        midpoint=st.booleans(),
        repeats=st.integers(1, 20),
    )
    def test_round_trip(self, seed, mod, channel, snr, quality, budget, alpha, midpoint, repeats):
        cfg = LinkConfig(seed=seed, modulation=mod, channel=channel, snr_db=snr, jpeg_quality=quality,
                         symbol_budget=budget, embed=EmbedConfig(alpha=alpha, midpoint_mode=midpoint))
        sw = SweepSettings(repeats=repeats, snrs=(0.0, 2.5))
        assert loads(dumps(cfg, sw)) == (cfg, sw)

    def test_resolved_items_cover_everything(self):
        keys = [k for k, _ in resolved_items(LinkConfig(seed=1), SweepSettings())]
        assert "link.seed" in keys and "embed.alpha" in keys and "sweep.repeats" in keys
        assert len(keys) == len(set(keys))

    def test_load_file(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[link]\nseed = 9\n")
        assert load(path)[0].seed == 9


class TestCliErrors:
    def test_run_requires_seed(self, capsys):
        assert cli.main(["run"]) == cli.EXIT_USAGE
        assert "--seed is required" in capsys.readouterr().err

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["run", "--seed", "1", "--bogus"])
        assert exc.value.code == cli.EXIT_USAGE

    def test_bad_choice(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["run", "--seed", "1", "--modulation", "8PSK"])
        assert exc.value.code == cli.EXIT_USAGE

    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[link]\nseed = 1\nwat = 2\n")
        assert cli.main(["run", "--config", str(path)]) == cli.EXIT_USAGE

    def test_missing_config(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "none.ini")]) == cli.EXIT_USAGE

    def test_bad_quality_word(self):
        assert cli.main(["run", "--seed", "1", "--jpeg-quality", "best"]) == cli.EXIT_USAGE

    def test_metrics_bad_file(self, tmp_path):
        bad = tmp_path / "x.ppm"
        bad.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        assert cli.main(["metrics", str(bad), str(bad)]) == cli.EXIT_USAGE


class TestCliCommands:
    def test_metrics(self, tmp_path, capsys, rng):
        a = smooth_rgb(rng, 32, 32)
        b = RgbImage(np.clip(a.pixels.astype(int) + 3, 0, 255).astype(np.uint8))
        pa, pb = tmp_path / "a.ppm", tmp_path / "b.ppm"
        pa.write_bytes(save_ppm(a))
        pb.write_bytes(save_ppm(b))
        assert cli.main(["metrics", str(pa), str(pa)]) == 0
        out = capsys.readouterr().out
        assert "psnr = inf" in out and "ssim = 1.0" in out
        assert cli.main(["metrics", str(pa), str(pb)]) == 0
        assert "psnr = 3" in capsys.readouterr().out

    def test_metrics_gray(self, tmp_path, capsys):
        g = tmp_path / "g.pgm"
        g.write_bytes(save_pgm(GrayImage(np.arange(256, dtype=np.uint8).reshape(16, 16))))
        assert cli.main(["metrics", str(g), str(g)]) == 0

    @requires_data
    def test_run_ok(self, capsys):
        assert cli.main(["run", "--seed", "1", "--snr-db", "inf", "--jpeg-quality", "90"]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "frame_status = ok" in out and "jpeg_quality_used = 90" in out

    @requires_data
    def test_run_frame_error(self):
        code = cli.main(["run", "--seed", "4", "--modulation", "64QAM", "--snr-db", "0", "--jpeg-quality", "50"])
        assert code == cli.EXIT_FRAME_ERROR

    @requires_data
    def test_config_with_override(self, tmp_path, capsys):
        path = tmp_path / "c.ini"
        path.write_text("[link]\nseed = 2\nsnr_db = 0\nmodulation = 64QAM\njpeg_quality = 50\n")
        assert cli.main(["run", "--config", str(path), "--snr-db", "inf"]) == cli.EXIT_OK
        assert "frame_status = ok" in capsys.readouterr().out

    @requires_data
    def test_embed_extract(self, tmp_path, carriers):
        car = tmp_path / "car.ppm"
        car.write_bytes(save_ppm(carriers["astronaut"]))
        hyb, dig = tmp_path / "hyb.ppm", tmp_path / "dig.pgm"
        assert cli.main(["embed", "--carrier", str(car), "--digit-index", "3", "--out", str(hyb)]) == 0
        assert cli.main(["extract", "--hybrid", str(hyb), "--out", str(dig)]) == 0
        from hybridbsc import datasets

        ref = datasets.load_mnist("test")[3]
        assert ssim(load_pgm(dig.read_bytes()), ref) > 0.8

    @requires_data
    def test_sweep(self, tmp_path):
        out = tmp_path / "sw"
        args = ["sweep", "--seed", "0", "--modulations", "QPSK", "--channels", "awgn", "--snrs", "inf",
                "--repeats", "1", "--no-baseline", "--jpeg-quality", "60", "--out", str(out)]
        assert cli.main(args) == 0
        text = (out / "results.csv").read_text()
        assert "# link.seed = 0" in text and "# sweep.repeats = 1" in text
        assert (out / "psnr_awgn.svg").exists() and (out / "ssim_awgn.svg").exists()
        assert cli.main(args) == 0
        assert (out / "results.csv").read_text() == text
