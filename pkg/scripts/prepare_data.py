"""Build the vendored dataset subset under data/.

MNIST: the raw IDX files are taken from the ``mnist-data`` npm package (the
public mirror reachable from the build sandbox). Only the first 10,000
training digits and the first 2,000 test digits are kept, gzip-compressed.

Carriers: USC-SIPI is not redistributable here, so 512x512 stand-ins are
cut from the public-domain / CC0 photographs bundled with scikit-image and
written as binary PPM.

Usage:
    python scripts/prepare_data.py --mnist-dir /path/to/mnist-data/package/data
"""

import argparse
import gzip
import struct
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parents[1] / "data"

CARRIERS = {
    "astronaut": "astronaut",
    "coffee": "coffee",
    "chelsea": "chelsea",
    "rocket": "rocket",
    "ihc": "immunohistochemistry",
    "retina": "retina",
}


def _subset_idx(src: Path, dst: Path, count: int) -> None:
    raw = src.read_bytes()
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    assert magic == 0x803 and n >= count
    body = raw[16:16 + count * rows * cols]
    out = struct.pack(">IIII", magic, count, rows, cols) + body
    with gzip.GzipFile(dst, "wb", mtime=0) as fh:
        fh.write(out)


def _square_512(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[:2]
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    img = Image.fromarray(arr[top:top + side, left:left + side, :3])
    if side != 512:
        img = img.resize((512, 512), Image.LANCZOS)
    return np.asarray(img, dtype=np.uint8)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--mnist-dir", type=Path, required=True)
    args = ap.parse_args()

    (ROOT / "mnist").mkdir(parents=True, exist_ok=True)
    _subset_idx(args.mnist_dir / "train-images-idx3-ubyte",
                ROOT / "mnist" / "train-images-idx3-ubyte.gz", 10_000)
    _subset_idx(args.mnist_dir / "t10k-images-idx3-ubyte",
                ROOT / "mnist" / "t10k-images-idx3-ubyte.gz", 2_000)

    import skimage.data

    (ROOT / "carriers").mkdir(parents=True, exist_ok=True)
    for name, attr in CARRIERS.items():
        arr = _square_512(getattr(skimage.data, attr)())
        header = b"P6\n512 512\n255\n"
        (ROOT / "carriers" / f"{name}.ppm").write_bytes(header + arr.tobytes())


if __name__ == "__main__":
    main()
