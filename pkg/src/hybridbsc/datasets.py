"""Locating and loading the bundled MNIST subset and carrier photographs.

The data root is ``$HBSC_DATA_DIR`` when set, otherwise the first ``data/``
directory found walking up from the package (which covers editable installs
and source checkouts), otherwise ``./data``.
"""

from __future__ import annotations

import gzip
import os
from functools import lru_cache
from pathlib import Path

from .imaging import GrayImage, RgbImage, load_idx, load_ppm

ENV_VAR = "HBSC_DATA_DIR"
MNIST_FILES = {
    "train": "train-images-idx3-ubyte",
    "test": "t10k-images-idx3-ubyte",
}


class DataNotFoundError(FileNotFoundError):
    pass


def data_root() -> Path:
    env = os.environ.get(ENV_VAR)
    if env:
        return Path(env)
    for parent in Path(__file__).resolve().parents:
        cand = parent / "data"
        if (cand / "mnist").is_dir() or (cand / "carriers").is_dir():
            return cand
    return Path.cwd() / "data"


def _read_maybe_gz(path: Path) -> bytes:
    for cand in (path, path.with_name(path.name + ".gz")):
        if cand.is_file():
            raw = cand.read_bytes()
            return gzip.decompress(raw) if cand.suffix == ".gz" else raw
    raise DataNotFoundError(f"{path}[.gz] not found (set {ENV_VAR} to the dataset root)")


@lru_cache(maxsize=4)
def _mnist(split: str, root: str) -> tuple[GrayImage, ...]:
    return tuple(load_idx(_read_maybe_gz(Path(root) / "mnist" / MNIST_FILES[split])))


def load_mnist(split: str = "train", count: int | None = None) -> list[GrayImage]:
    """Digits from ``<root>/mnist``; ``split`` is "train" or "test"."""
    if split not in MNIST_FILES:
        raise ValueError(f"unknown MNIST split {split!r}")
    digits = _mnist(split, str(data_root()))
    return list(digits if count is None else digits[:count])


def carrier_names() -> list[str]:
    folder = data_root() / "carriers"
    return sorted(p.stem for p in folder.glob("*.ppm"))


def carrier_path(name: str) -> Path:
    """Resolve a carrier name (stem under ``<root>/carriers``) or a file path."""
    p = Path(name)
    if p.suffix and p.is_file():
        return p
    cand = data_root() / "carriers" / f"{name}.ppm"
    if not cand.is_file():
        raise DataNotFoundError(f"carrier {name!r} not found under {cand.parent}")
    return cand


def load_carrier(name: str) -> RgbImage:
    return load_ppm(carrier_path(name).read_bytes())
