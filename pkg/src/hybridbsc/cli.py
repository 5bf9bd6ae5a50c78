"""Command line interface: ``hbsc {train,run,sweep,embed,extract,metrics}``.

Exit status is 0 on success, 2 when a run ends in a frame error and 1 for
usage, configuration or input errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

from . import config as cfgmod
from . import datasets
from .embed import EmbedConfig, dequantize, extract, insert, quantize
from .harness import HYBRID_EMBED, LinkConfig, build_grid, emit_outputs, run_link, sweep
from .imaging import GrayImage, ImageFormatError, load_pgm, load_ppm, psnr, save_pgm, save_ppm, ssim, to_uint8
from .semcodec import (
    DEFAULT_CHECKPOINT,
    SIDE,
    TrainConfig,
    decode_semantic,
    default_model,
    encode_semantic,
    load_model,
    save_model,
    train,
)

EXIT_OK, EXIT_USAGE, EXIT_FRAME_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _link_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("link")
    g.add_argument("--config", type=Path, help="INI file; flags override its values")
    g.add_argument("--carrier")
    g.add_argument("--digit-index", type=int)
    g.add_argument("--digit-split", choices=["train", "test"])
    g.add_argument("--digit-path")
    g.add_argument("--modulation", choices=["QPSK", "16QAM", "64QAM"])
    g.add_argument("--channel", choices=["awgn", "rayleigh"])
    g.add_argument("--snr-db", type=float)
    g.add_argument("--jpeg-quality", help="1-100 or auto")
    g.add_argument("--symbol-budget", help="symbol count, default or unconstrained")
    g.add_argument("--restart-interval", type=int)
    g.add_argument("--ofdm", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--insertion", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--model-path")
    g.add_argument("--ldpc-max-iterations", type=int)
    _embed_flags(p)


def _embed_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("embedding")
    g.add_argument("--alpha", type=float)
    g.add_argument("--q", type=int)
    g.add_argument("--midpoint-mode", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--refine-iterations", type=int)


def _int_or_word(v):
    return int(v) if v is not None and v.lstrip("-").isdigit() else v


def _embed_config(args, base: EmbedConfig) -> EmbedConfig:
    over = {k: getattr(args, k) for k in ("alpha", "q", "midpoint_mode", "refine_iterations")
            if getattr(args, k, None) is not None}
    return dataclasses.replace(base, **over)


def _resolve(args):
    if args.config is not None:
        try:
            cfg, sweep_settings = cfgmod.load(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
    else:
        cfg, sweep_settings = None, cfgmod.SweepSettings()
    over = {}
    for name in ("carrier", "digit_index", "digit_split", "digit_path", "modulation", "channel", "snr_db",
                 "restart_interval", "ofdm", "insertion", "model_path", "ldpc_max_iterations"):
        v = getattr(args, name)
        if v is not None:
            over[name] = v
    for name in ("jpeg_quality", "symbol_budget"):
        v = getattr(args, name)
        if v is not None:
            over[name] = _int_or_word(v)
    if args.seed is not None:
        over["seed"] = args.seed
    if cfg is None:
        if "seed" not in over:
            raise UsageError("--seed is required")
        cfg = LinkConfig(**over)
    else:
        cfg = dataclasses.replace(cfg, **over)
    return dataclasses.replace(cfg, embed=_embed_config(args, cfg.embed)), sweep_settings


def _cmd_run(args) -> int:
    cfg, _ = _resolve(args)
    res = run_link(cfg)
    for f in dataclasses.fields(res):
        print(f"{f.name} = {getattr(res, f.name)}")
    return EXIT_FRAME_ERROR if res.frame_status == "frame-error" else EXIT_OK


def _cmd_sweep(args) -> int:
    cfg, st = _resolve(args)
    over = {}
    if args.modulations:
        over["modulations"] = tuple(args.modulations.split(","))
    if args.channels:
        over["channels"] = tuple(args.channels.split(","))
    if args.snrs:
        over["snrs"] = cfgmod.parse_snrs(args.snrs)
    for name in ("repeats", "workers", "baseline"):
        if getattr(args, name) is not None:
            over[name] = getattr(args, name)
    st = dataclasses.replace(st, **over)
    grid = build_grid(cfg, st.modulations, st.channels, st.snrs, baseline=st.baseline)

    def progress(i, n):
        logging.getLogger("hybridbsc").info("grid point %d/%d", i, n)

    table = sweep(grid, repeats=st.repeats, workers=st.workers, progress=progress)
    table.meta = dict(cfgmod.resolved_items(cfg, st))
    for path in emit_outputs(table, args.out):
        print(path)
    return EXIT_OK


def _cmd_train(args) -> int:
    tc = TrainConfig(batch_size=args.batch_size, epochs=args.epochs, learning_rate=args.lr,
                     seed=args.seed, train_count=args.count)
    res = train(datasets.load_mnist("train"), tc, progress=lambda e, l: print(f"epoch {e} loss {l:.6f}"))
    args.out.write_bytes(save_model(res.model))
    print(f"trained in {res.seconds:.1f} s -> {args.out}")
    return EXIT_OK


def _model(path):
    return default_model() if path is None else load_model(Path(path).read_bytes())


def _digit(args) -> GrayImage:
    if args.digit is not None:
        return load_pgm(Path(args.digit).read_bytes())
    return datasets.load_mnist(args.digit_split)[args.digit_index]


def _cmd_embed(args) -> int:
    ecfg = _embed_config(args, HYBRID_EMBED)
    carrier = load_ppm(Path(args.carrier).read_bytes())
    payload = quantize(encode_semantic(_digit(args), _model(args.model_path)), ecfg.q)
    hybrid = insert(carrier, payload, ecfg)
    args.out.write_bytes(save_ppm(hybrid))
    print(f"embedded {len(payload)} bits; carrier PSNR {psnr(hybrid, carrier):.2f} dB -> {args.out}")
    return EXIT_OK


def _cmd_extract(args) -> int:
    ecfg = _embed_config(args, HYBRID_EMBED)
    hybrid = load_ppm(Path(args.hybrid).read_bytes())
    shape = (SIDE, SIDE, 1)
    got = extract(hybrid, math.prod(shape) * ecfg.q, ecfg, shape)
    rec = decode_semantic(dequantize(got, ecfg.q), _model(args.model_path))
    args.out.write_bytes(save_pgm(GrayImage(to_uint8(rec * 255.0))))
    print(f"decoded digit -> {args.out}")
    return EXIT_OK


def _load_any(path: str):
    data = Path(path).read_bytes()
    return load_ppm(data) if data.startswith(b"P6") else load_pgm(data)


def _cmd_metrics(args) -> int:
    a, b = _load_any(args.reference), _load_any(args.test)
    print(f"psnr = {psnr(a, b)}")
    print(f"ssim = {ssim(a, b)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hbsc", description="Hybrid bit and semantic image link simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train the digit autoencoder")
    t.add_argument("--out", type=Path, default=Path(DEFAULT_CHECKPOINT))
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--batch-size", type=int, default=256)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--count", type=int, default=10000, help="training digits")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=_cmd_train)

    r = sub.add_parser("run", help="one end-to-end link run")
    r.add_argument("--seed", type=int)
    _link_flags(r)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="SNR sweep; writes results.csv and SVG plots")
    s.add_argument("--seed", type=int)
    _link_flags(s)
    s.add_argument("--modulations", help="comma separated")
    s.add_argument("--channels", help="comma separated")
    s.add_argument("--snrs", help="list 0,5,10 or range 0:20:2")
    s.add_argument("--repeats", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--baseline", action=argparse.BooleanOptionalAction, default=None)
    s.add_argument("--out", type=Path, default=Path("sweep_out"))
    s.set_defaults(func=_cmd_sweep)

    for name, fn, helptext in (("embed", _cmd_embed, "hide a digit's features in a carrier"),
                               ("extract", _cmd_extract, "recover the digit from a hybrid image")):
        e = sub.add_parser(name, help=helptext)
        if name == "embed":
            e.add_argument("--carrier", required=True, help="P6 carrier image")
            e.add_argument("--digit", help="P5 28x28 digit (default: an MNIST digit)")
            e.add_argument("--digit-index", type=int, default=0)
            e.add_argument("--digit-split", choices=["train", "test"], default="test")
        else:
            e.add_argument("--hybrid", required=True, help="P6 hybrid image")
        e.add_argument("--out", type=Path, required=True)
        e.add_argument("--model-path")
        _embed_flags(e)
        e.set_defaults(func=fn)

    m = sub.add_parser("metrics", help="PSNR and SSIM between two PPM/PGM files")
    m.add_argument("reference")
    m.add_argument("test")
    m.set_defaults(func=_cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, cfgmod.ConfigError, ImageFormatError, datasets.DataNotFoundError,
            FileNotFoundError, ValueError) as exc:
        print(f"hbsc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
