"""INI-style configuration files for link runs and sweeps.

A file has up to three sections::

    [link]
    seed = 7
    carrier = astronaut
    modulation = 16QAM
    snr_db = 12

    [embed]
    alpha = 14
    q = 4

    [sweep]
    modulations = QPSK, 16QAM, 64QAM
    channels = awgn, rayleigh
    snrs = 0:20:2
    repeats = 10
    baseline = true

Keys mirror :class:`LinkConfig`, :class:`EmbedConfig` and :class:`SweepSettings`.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass

from .embed import EmbedConfig
from .harness import HYBRID_EMBED, LinkConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSettings:
    modulations: tuple = ("QPSK", "16QAM", "64QAM")
    channels: tuple = ("awgn", "rayleigh")
    snrs: tuple = tuple(float(s) for s in range(0, 21, 2))
    repeats: int = 10
    baseline: bool = True
    workers: int = 1


def parse_snrs(text: str) -> tuple[float, ...]:
    """``"0,5,10"`` or ``"start:stop:step"`` (stop inclusive); ``inf`` allowed."""
    text = text.strip()
    if ":" in text:
        try:
            start, stop, step = (float(p) for p in text.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad SNR range {text!r}") from exc
        if step <= 0:
            raise ConfigError("SNR step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"bad SNR list {text!r}") from exc


def _split(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _convert(field: dataclasses.Field, raw: str):
    kind = field.type if isinstance(field.type, str) else getattr(field.type, "__name__", "")
    raw = raw.strip()
    if field.name in ("jpeg_quality", "symbol_budget"):
        return int(raw) if raw.lstrip("-").isdigit() else raw
    if kind.startswith("str") and "None" in kind:
        return None if raw.lower() in ("", "none") else raw
    if kind == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{field.name}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def _section(parser, name: str, cls) -> dict:
    if not parser.has_section(name):
        return {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, raw in parser.items(name):
        if key not in fields:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        try:
            out[key] = _convert(fields[key], raw)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from exc
    return out


def loads(text: str) -> tuple[LinkConfig, SweepSettings]:
    """Parse config text. ``[link] seed`` is mandatory."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    unknown = set(parser.sections()) - {"link", "embed", "sweep"}
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    link = _section(parser, "link", LinkConfig)
    link.pop("embed", None)
    if "seed" not in link:
        raise ConfigError("[link] seed is required")
    try:
        embed = dataclasses.replace(HYBRID_EMBED, **_section(parser, "embed", EmbedConfig))
        cfg = LinkConfig(embed=embed, **link)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    sweep = {}
    if parser.has_section("sweep"):
        sec = parser["sweep"]
        for key in sec:
            if key not in {f.name for f in dataclasses.fields(SweepSettings)}:
                raise ConfigError(f"[sweep] unknown key {key!r}")
        if "modulations" in sec:
            sweep["modulations"] = _split(sec["modulations"])
        if "channels" in sec:
            sweep["channels"] = _split(sec["channels"])
        if "snrs" in sec:
            sweep["snrs"] = parse_snrs(sec["snrs"])
        try:
            if "repeats" in sec:
                sweep["repeats"] = sec.getint("repeats")
            if "workers" in sec:
                sweep["workers"] = sec.getint("workers")
            if "baseline" in sec:
                sweep["baseline"] = sec.getboolean("baseline")
        except ValueError as exc:
            raise ConfigError(f"[sweep] {exc}") from exc
    return cfg, SweepSettings(**sweep)


def load(path) -> tuple[LinkConfig, SweepSettings]:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_value(x) for x in v)
    if v is None:
        return "none"
    return str(v)


def resolved_items(cfg: LinkConfig, sweep: SweepSettings | None = None) -> list[tuple[str, str]]:
    """Flat ``section.key`` pairs of every setting, used for CSV provenance."""
    items = [(f"link.{f.name}", _value(getattr(cfg, f.name)))
             for f in dataclasses.fields(cfg) if f.name != "embed"]
    items += [(f"embed.{f.name}", _value(getattr(cfg.embed, f.name))) for f in dataclasses.fields(cfg.embed)]
    if sweep is not None:
        items += [(f"sweep.{f.name}", _value(getattr(sweep, f.name))) for f in dataclasses.fields(sweep)]
    return items


def dumps(cfg: LinkConfig, sweep: SweepSettings | None = None) -> str:
    """Serialise to config text that :func:`loads` reads back to equal objects."""
    out = []
    current = None
    for key, value in resolved_items(cfg, sweep):
        section, name = key.split(".", 1)
        if section != current:
            out.append(f"{'' if current is None else chr(10)}[{section}]")
            current = section
        out.append(f"{name} = {value}")
    return "\n".join(out) + "\n"
