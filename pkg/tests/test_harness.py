import csv
import io
import math
from dataclasses import replace

import numpy as np
import pytest

from hybridbsc import harness
from hybridbsc.harness import (
    BudgetInfeasibleError,
    LinkConfig,
    SweepRow,
    SweepTable,
    build_grid,
    coded_bits,
    default_symbol_budget,
    emit_outputs,
    rate_match,
    run_link,
    semantic_baseline,
    sweep,
    table_csv,
)
from hybridbsc.phylink import default_code
from hybridbsc.srccodec import JpegConfig, jpeg_encode

from conftest import requires_data, smooth_rgb


def _result(**kw):
    base = dict(psnr_bit=30.0, ssim_bit=0.9, psnr_sem=20.0, ssim_sem=0.95, payload_ber=0.0,
                jpeg_quality_used=75, frame_status="ok", ldpc_iterations=1.0, ldpc_failures=0,
                codewords=10, symbols=3240, stream_bytes=400)
    base.update(kw)
    return harness.LinkResult(**base)


class TestLinkConfig:
    def test_seed_required(self):
        with pytest.raises(ValueError):
            LinkConfig(seed=None)

    @pytest.mark.parametrize("kw", [
        dict(channel="rician"),
        dict(modulation="8PSK"),
        dict(jpeg_quality="best"),
        dict(symbol_budget="lots"),
    ])
    def test_bad_fields(self, kw):
        with pytest.raises(ValueError):
            LinkConfig(seed=1, **kw)

    @pytest.mark.parametrize("insertion,mod,name", [
        (True, "QPSK", "HybridBSC-QPSK"),
        (False, "16QAM", "JPEG-LDPC-16QAM"),
        (True, "64QAM", "HybridBSC-64QAM"),
    ])
    def test_scheme(self, insertion, mod, name):
        assert LinkConfig(seed=0, insertion=insertion, modulation=mod).scheme == name


class TestRateMatch:
    def test_coded_bits_pads_to_codewords(self):
        code = default_code()
        assert coded_bits(0, code) == 0
        assert coded_bits(1, code) == code.n
        assert coded_bits(code.k // 8, code) == code.n
        assert coded_bits(code.k // 8 + 1, code) == 2 * code.n

    def test_bit_budget_arithmetic(self):
        # 10^5 symbols of 16QAM at rate 1/2 carry 2 * 10^5 information bits
        sizes = {}

        def encode(q):
            sizes[q] = q * 100
            return bytes(q * 100)

        jc = rate_match(100_000, "16QAM", 0.5, None, encode=encode)
        info = lambda q: coded_bits(q * 100, default_code()) // 2
        assert info(jc.quality) <= 200_000
        assert jc.quality == 100 or info(jc.quality + 1) > 200_000

    def test_largest_fitting_quality(self, rng):
        img = smooth_rgb(rng, 64, 64)
        budget = 9000
        jc = rate_match(budget, "QPSK", 0.5, img)
        size = lambda q: coded_bits(len(jpeg_encode(img, JpegConfig(q))), default_code())
        assert size(jc.quality) // 2 <= budget
        assert jc.quality == 100 or size(jc.quality + 1) // 2 > budget

    def test_denser_modulation_never_lowers_quality(self, rng):
        img = smooth_rgb(rng, 64, 64)
        qs = [rate_match(9000, m, 0.5, img).quality for m in ("QPSK", "16QAM", "64QAM")]
        assert qs == sorted(qs)

    def test_infeasible(self, rng):
        with pytest.raises(BudgetInfeasibleError):
            rate_match(10, "QPSK", 0.5, smooth_rgb(rng, 64, 64))

    @requires_data
    def test_default_budget_orders_qualities(self):
        budget = default_symbol_budget("astronaut")
        assert budget > 0
        car = harness._carrier("astronaut")
        qs = [rate_match(budget, m, 0.5, car).quality for m in ("QPSK", "16QAM", "64QAM")]
        assert qs[0] >= 75
        assert qs[0] < qs[1] <= qs[2]


@requires_data
class TestRunLink:
    def test_noiseless_unconstrained(self):
        cfg = LinkConfig(seed=3, snr_db=math.inf, symbol_budget="unconstrained")
        res = run_link(cfg)
        assert res.jpeg_quality_used == 100
        assert res.frame_status == "ok"
        assert res.payload_ber == 0.0
        assert res.ldpc_failures == 0
        assert res.codewords_decoded == res.codewords
        sem = semantic_baseline(cfg)
        assert res.psnr_sem == pytest.approx(sem[0], abs=1e-9)
        assert res.ssim_sem == pytest.approx(sem[1], abs=1e-9)

    def test_deterministic(self):
        cfg = LinkConfig(seed=11, snr_db=6.0, modulation="16QAM", jpeg_quality=60)
        a, b = run_link(cfg), run_link(cfg)
        assert a == b

    def test_baseline_has_no_semantic_metrics(self):
        res = run_link(LinkConfig(seed=2, insertion=False, snr_db=math.inf, jpeg_quality=50))
        assert math.isnan(res.psnr_sem) and math.isnan(res.payload_ber)
        assert res.frame_status == "ok"

    def test_frame_error_is_gray(self):
        res = run_link(LinkConfig(seed=4, modulation="64QAM", snr_db=0.0, jpeg_quality=50))
        assert res.frame_status == "frame-error"
        assert np.isfinite(res.psnr_bit)
        assert res.codewords_decoded < res.codewords

    def test_awgn_beats_rayleigh(self):
        base = LinkConfig(seed=0, snr_db=5.0, jpeg_quality=50)
        awgn = [run_link(replace(base, seed=s)).ssim_bit for s in range(10)]
        ray = [run_link(replace(base, seed=s, channel="rayleigh")).ssim_bit for s in range(10)]
        assert np.mean(awgn) >= np.mean(ray)

    def test_ofdm_noiseless(self):
        res = run_link(LinkConfig(seed=1, snr_db=math.inf, ofdm=True, channel="rayleigh", jpeg_quality=95))
        assert res.frame_status == "ok" and res.ldpc_failures == 0
        assert res.payload_ber <= 0.02


@requires_data
class TestSweep:
    def test_single_point_matches_run_link(self):
        cfg = LinkConfig(seed=21, snr_db=8.0, jpeg_quality=50)
        table = sweep([cfg], repeats=2)
        assert table.rows[0].runs == [run_link(cfg), run_link(replace(cfg, seed=22, digit_index=1))]

    def test_grid_shape(self):
        grid = build_grid(LinkConfig(seed=0), ["QPSK", "16QAM"], ["awgn", "rayleigh"], [0, 10, 20])
        assert len(grid) == 2 * 2 * 2 * 3
        assert sum(c.insertion for c in grid) == 12
        assert len(build_grid(LinkConfig(seed=0), ["QPSK"], ["awgn"], [0], baseline=False)) == 1

    def test_errors(self):
        with pytest.raises(ValueError):
            sweep([])
        with pytest.raises(ValueError):
            sweep([LinkConfig(seed=0)], repeats=0)


class TestOutputs:
    def _table(self):
        rows = [
            SweepRow(LinkConfig(seed=0, snr_db=math.inf), [_result(), _result(psnr_bit=32.0)]),
            SweepRow(LinkConfig(seed=0, snr_db=0.0, insertion=False),
                     [_result(psnr_sem=math.nan, ssim_sem=math.nan, payload_ber=math.nan,
                              frame_status="frame-error")] * 2),
        ]
        return SweepTable(rows, repeats=2, meta={"link.seed": 0})

    def test_csv(self):
        text = table_csv(self._table())
        lines = text.splitlines()
        assert lines[0] == "# link.seed = 0"
        rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
        assert rows[0] == harness.CSV_HEADER
        assert len(rows) == 3
        assert rows[1][2] == "inf"
        assert float(rows[1][3]) == pytest.approx(31.0)
        assert rows[2][5] == "nan"
        assert rows[2][-1] == "ok=0 partial=0 frame-error=2"

    def test_csv_deterministic(self):
        assert table_csv(self._table()) == table_csv(self._table())

    def test_emit_outputs(self, tmp_path):
        paths = emit_outputs(self._table(), tmp_path / "out")
        names = sorted(p.name for p in paths)
        assert names == ["psnr_awgn.svg", "results.csv", "ssim_awgn.svg"]
        assert all(p.stat().st_size > 0 for p in paths)

    def test_row_stats(self):
        row = SweepRow(LinkConfig(seed=0), [_result(psnr_bit=v) for v in (1.0, 3.0)])
        assert row.mean("psnr_bit") == 2.0
        assert row.stderr("psnr_bit") == pytest.approx(1.0)
        assert row.quality_summary() == "75"
        assert math.isnan(SweepRow(LinkConfig(seed=0), [_result(psnr_sem=math.nan)]).mean("psnr_sem"))


@pytest.mark.parametrize("flags,expected", [
    ([True, True], []),
    ([False, True, True], [(0, 41)]),
    ([True, False, False, True, False], [(40, 122), (162, 203)]),
])
def test_failed_byte_ranges(flags, expected):
    assert harness._failed_byte_ranges(np.array(flags), 324) == expected
