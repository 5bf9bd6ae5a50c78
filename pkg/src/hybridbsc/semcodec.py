"""Convolutional autoencoder for 28x28 digits with hand-written backprop.

Encoder and decoder are each four 3x3 convolutions (stride 1, zero "same"
padding) with 32, 16, 16 and 1 output channels. The encoder applies ReLU
after every layer and clamps its output to [0, 1] so it can be quantised;
the decoder uses ReLU on the first three layers and a sigmoid on the last.

Activations are ``(batch, height, width, channels)`` arrays. Training runs in
float32; :func:`grad_check` runs the same code in float64.
"""

from __future__ import annotations

import logging
import struct
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from numba import njit

from .imaging import GrayImage

log = logging.getLogger(__name__)

WIDTHS = (32, 16, 16, 1)
KERNEL = 3
SIDE = 28
MAGIC = b"HBSC"
FORMAT_VERSION = 1
DEFAULT_CHECKPOINT = "mnist_ae.hbsc"


class ShapeMismatchError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class ConvLayer:
    w: np.ndarray  # (3, 3, cin, cout)
    b: np.ndarray  # (cout,)

    @property
    def cin(self) -> int:
        return self.w.shape[2]

    @property
    def cout(self) -> int:
        return self.w.shape[3]


@dataclass
class SemanticCodecModel:
    encoder: list[ConvLayer]
    decoder: list[ConvLayer]

    def __post_init__(self):
        for stack in (self.encoder, self.decoder):
            if len(stack) != len(WIDTHS):
                raise ValueError(f"expected {len(WIDTHS)} layers per stack, got {len(stack)}")
            cin = 1
            for layer in stack:
                if layer.w.shape[:3] != (KERNEL, KERNEL, cin) or layer.b.shape != (layer.cout,):
                    raise ValueError(f"inconsistent layer shapes {layer.w.shape}, {layer.b.shape}")
                cin = layer.cout
            if cin != 1:
                raise ValueError("each stack must end with one channel")

    @property
    def layers(self) -> list[ConvLayer]:
        return self.encoder + self.decoder

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in declaration order (w, b per layer, encoder first)."""
        out = []
        for layer in self.layers:
            out += [layer.w, layer.b]
        return out

    def astype(self, dtype) -> "SemanticCodecModel":
        cast = lambda s: [ConvLayer(l.w.astype(dtype), l.b.astype(dtype)) for l in s]
        return SemanticCodecModel(cast(self.encoder), cast(self.decoder))


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    epochs: int = 20
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    train_count: int | None = 10000  # None trains on the whole dataset

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("batch_size and epochs must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrainResult:
    model: SemanticCodecModel
    losses: list[float] = field(default_factory=list)
    seconds: float = 0.0


def init_model(seed: int = 0, dtype=np.float64) -> SemanticCodecModel:
    """He-uniform weights (fan-in scaled), zero biases."""
    rng = np.random.default_rng(seed)

    def stack():
        layers, cin = [], 1
        for cout in WIDTHS:
            limit = np.sqrt(6.0 / (KERNEL * KERNEL * cin))
            w = rng.uniform(-limit, limit, size=(KERNEL, KERNEL, cin, cout))
            layers.append(ConvLayer(w.astype(dtype), np.zeros(cout, dtype)))
            cin = cout
        return layers

    return SemanticCodecModel(stack(), stack())


# --------------------------------------------------------------------------
# Convolution
# --------------------------------------------------------------------------

@njit(cache=True)
def _im2col_kernel(x, cols):
    bsz, h, w, c = x.shape
    for b in range(bsz):
        for i in range(h):
            for j in range(w):
                row = (b * h + i) * w + j
                for ky in range(KERNEL):
                    yi = i + ky - 1
                    for kx in range(KERNEL):
                        xj = j + kx - 1
                        base = (ky * KERNEL + kx) * c
                        if 0 <= yi < h and 0 <= xj < w:
                            for ch in range(c):
                                cols[row, base + ch] = x[b, yi, xj, ch]
                        else:
                            for ch in range(c):
                                cols[row, base + ch] = 0.0


@njit(cache=True)
def _col2im_kernel(dcols, dx):
    bsz, h, w, c = dx.shape
    for b in range(bsz):
        for i in range(h):
            for j in range(w):
                row = (b * h + i) * w + j
                for ky in range(KERNEL):
                    yi = i + ky - 1
                    if yi < 0 or yi >= h:
                        continue
                    for kx in range(KERNEL):
                        xj = j + kx - 1
                        if xj < 0 or xj >= w:
                            continue
                        base = (ky * KERNEL + kx) * c
                        for ch in range(c):
                            dx[b, yi, xj, ch] += dcols[row, base + ch]


def _im2col(x: np.ndarray) -> np.ndarray:
    # (B, H, W, C) -> (B*H*W, 9*C), columns ordered (ky, kx, c), zero padded
    bsz, h, w, c = x.shape
    cols = np.empty((bsz * h * w, KERNEL * KERNEL * c), x.dtype)
    _im2col_kernel(np.ascontiguousarray(x), cols)
    return cols


def _col2im(dcols: np.ndarray, shape) -> np.ndarray:
    dx = np.zeros(shape, dcols.dtype)
    _col2im_kernel(np.ascontiguousarray(dcols), dx)
    return dx


def conv2d(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    bsz, h, w, _ = x.shape
    out = _im2col(x) @ layer.w.reshape(-1, layer.cout) + layer.b
    return out.reshape(bsz, h, w, layer.cout)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check_batch(x: np.ndarray) -> np.ndarray:
    if x.ndim != 4 or x.shape[1:] != (SIDE, SIDE, 1):
        raise ShapeMismatchError(f"expected (N, {SIDE}, {SIDE}, 1), got {x.shape}")
    return x


def _forward(model: SemanticCodecModel, x: np.ndarray, keep: bool):
    """Run both stacks; with ``keep`` also return what backprop needs."""
    tape = []
    h = x
    for i, layer in enumerate(model.encoder):
        cols = _im2col(h)
        z = (cols @ layer.w.reshape(-1, layer.cout) + layer.b).reshape(h.shape[:3] + (layer.cout,))
        last = i == len(model.encoder) - 1
        # ReLU, and for the last layer ReLU followed by the [0, 1] clamp
        a = np.clip(z, 0, 1) if last else np.maximum(z, 0)
        mask = ((z > 0) & (z < 1)) if last else (z > 0)
        if keep:
            tape.append((cols, h.shape, mask))
        h = a
    feat = h
    for i, layer in enumerate(model.decoder):
        cols = _im2col(h)
        z = (cols @ layer.w.reshape(-1, layer.cout) + layer.b).reshape(h.shape[:3] + (layer.cout,))
        last = i == len(model.decoder) - 1
        if last:
            a = _sigmoid(z)
            mask = a * (1 - a)
        else:
            a = np.maximum(z, 0)
            mask = z > 0
        if keep:
            tape.append((cols, h.shape, mask))
        h = a
    return feat, h, tape


def _backward(model: SemanticCodecModel, tape, dout: np.ndarray) -> list[np.ndarray]:
    grads = []
    g = dout
    for idx in range(len(tape) - 1, -1, -1):
        layer = model.layers[idx]
        cols, in_shape, mask = tape[idx]
        dz = (g * mask).reshape(-1, layer.cout)
        grads.append(dz.sum(axis=0))
        grads.append((cols.T @ dz).reshape(layer.w.shape))
        if idx:
            g = _col2im(dz @ layer.w.reshape(-1, layer.cout).T, in_shape)
    return grads[::-1]  # (w, b) pairs in declaration order


def loss_and_grads(model: SemanticCodecModel, x: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """MSE reconstruction loss of a batch and its gradient w.r.t. every parameter."""
    _, out, tape = _forward(model, _check_batch(x), keep=True)
    diff = out - x
    loss = float(np.mean(diff * diff))
    grads = _backward(model, tape, (2.0 / diff.size) * diff)
    return loss, grads


# --------------------------------------------------------------------------
# Inference
# --------------------------------------------------------------------------

def _as_unit_plane(img) -> np.ndarray:
    if isinstance(img, GrayImage):
        return img.pixels.astype(np.float64) / 255.0
    return np.asarray(img, dtype=np.float64)


def encode_semantic(img, model: SemanticCodecModel) -> np.ndarray:
    """Feature tensor (28, 28, 1) in [0, 1] for a digit (GrayImage or [0, 1] plane)."""
    x = _as_unit_plane(img)
    if x.shape not in ((SIDE, SIDE), (SIDE, SIDE, 1)):
        raise ShapeMismatchError(f"expected a {SIDE}x{SIDE} digit, got {x.shape}")
    feat, _, _ = _forward_encoder(model, x.reshape(1, SIDE, SIDE, 1))
    return feat[0]


def _forward_encoder(model, x):
    h = x
    for i, layer in enumerate(model.encoder):
        z = conv2d(h, layer)
        h = np.clip(z, 0, 1) if i == len(model.encoder) - 1 else np.maximum(z, 0)
    return h, None, None


def decode_semantic(s: np.ndarray, model: SemanticCodecModel) -> np.ndarray:
    """Reconstructed digit plane (28, 28) with values in (0, 1)."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape not in ((SIDE, SIDE), (SIDE, SIDE, 1)):
        raise ShapeMismatchError(f"expected a {SIDE}x{SIDE}x1 feature tensor, got {s.shape}")
    h = s.reshape(1, SIDE, SIDE, 1)
    for i, layer in enumerate(model.decoder):
        z = conv2d(h, layer)
        h = _sigmoid(z) if i == len(model.decoder) - 1 else np.maximum(z, 0)
    return h[0, :, :, 0]


def reconstruct(img, model: SemanticCodecModel) -> np.ndarray:
    return decode_semantic(encode_semantic(img, model), model)


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

def stack_digits(dataset) -> np.ndarray:
    """List of GrayImage (or a uint8 array) -> float (N, 28, 28, 1) in [0, 1]."""
    if isinstance(dataset, np.ndarray):
        arr = dataset
    else:
        arr = np.stack([d.pixels for d in dataset]) if len(dataset) else np.zeros((0, SIDE, SIDE))
    if arr.size and arr.shape[1:3] != (SIDE, SIDE):
        raise ShapeMismatchError(f"digits must be {SIDE}x{SIDE}, got {arr.shape[1:]}")
    return (arr.astype(np.float32) / 255.0).reshape(-1, SIDE, SIDE, 1)


def train(dataset, cfg: TrainConfig = TrainConfig(), progress=None) -> TrainResult:
    """Minimise per-pixel MSE with Adam; returns the model and per-epoch losses.

    Args:
        dataset: GrayImage digits or a (N, 28, 28) uint8 array.
        cfg: optimiser settings; ``cfg.train_count`` truncates the dataset.
        progress: optional callable ``(epoch, loss)`` invoked after each epoch.
    """
    x = stack_digits(dataset)
    if cfg.train_count is not None:
        x = x[:cfg.train_count]
    if len(x) == 0:
        raise EmptyDatasetError("training needs at least one digit")

    rng = np.random.default_rng(cfg.seed)
    model = init_model(cfg.seed).astype(np.float32)
    params = model.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    losses = []
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for lo in range(0, len(x), cfg.batch_size):
            batch = x[order[lo:lo + cfg.batch_size]]
            loss, grads = loss_and_grads(model, batch)
            total += loss * len(batch)
            step += 1
            c1 = 1 - cfg.beta1 ** step
            c2 = 1 - cfg.beta2 ** step
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= cfg.beta1
                mi += (1 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1 - cfg.beta2) * g * g
                p -= (cfg.learning_rate * (mi / c1) / (np.sqrt(vi / c2) + cfg.eps)).astype(p.dtype)
        losses.append(total / len(x))
        log.info("epoch %d/%d loss %.6f", epoch + 1, cfg.epochs, losses[-1])
        if progress is not None:
            progress(epoch + 1, losses[-1])
    return TrainResult(model.astype(np.float64), losses, time.perf_counter() - start)


# --------------------------------------------------------------------------
# Gradient verification
# --------------------------------------------------------------------------

def grad_check(model: SemanticCodecModel, probe_count: int, x: np.ndarray | None = None,
               h: float = 1e-4, seed: int = 0) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Probes ``probe_count`` random parameters. Runs in float64. Probes whose
    +/- h perturbation moves any ReLU (or clamp) input across its kink are
    redrawn, because the central difference is not a derivative there.
    """
    model = model.astype(np.float64)
    rng = np.random.default_rng(seed)
    if x is None:
        x = rng.uniform(0, 1, size=(2, SIDE, SIDE, 1))
    x = _check_batch(np.asarray(x, np.float64))
    _, analytic = loss_and_grads(model, x)
    params = model.params()
    sizes = np.array([p.size for p in params])
    worst = 0.0
    done = attempts = 0
    while done < probe_count:
        attempts += 1
        if attempts > 50 * probe_count:
            raise RuntimeError("could not find enough probes away from activation kinks")
        k = int(rng.choice(len(params), p=sizes / sizes.sum()))
        flat = params[k].reshape(-1)
        j = int(rng.integers(flat.size))
        orig = flat[j]
        flat[j] = orig + h
        lp, zp = _loss_and_preacts(model, x)
        flat[j] = orig - h
        lm, zm = _loss_and_preacts(model, x)
        flat[j] = orig
        if _crosses_kink(zp, zm):
            continue
        numeric = (lp - lm) / (2 * h)
        a = analytic[k].reshape(-1)[j]
        denom = max(abs(a), abs(numeric), 1e-12)
        worst = max(worst, abs(a - numeric) / denom)
        done += 1
    return worst


def _loss_and_preacts(model, x):
    pre = []
    h = x
    stacks = [(model.encoder, "clamp"), (model.decoder, "sigmoid")]
    for layers, final in stacks:
        for i, layer in enumerate(layers):
            z = conv2d(h, layer)
            last = i == len(layers) - 1
            if not last:
                pre.append(z)
                h = np.maximum(z, 0)
            elif final == "clamp":
                pre.append(z)
                pre.append(z - 1)
                h = np.clip(z, 0, 1)
            else:
                h = _sigmoid(z)
    diff = h - x
    return float(np.mean(diff * diff)), pre


def _crosses_kink(zp, zm):
    return any(np.any((a > 0) != (b > 0)) for a, b in zip(zp, zm))


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

def save_model(model: SemanticCodecModel) -> bytes:
    """Magic, version, layer count, per-layer (kh, kw, cin, cout), float64 LE params."""
    layers = model.layers
    head = MAGIC + struct.pack("<II", FORMAT_VERSION, len(layers))
    dims = b"".join(struct.pack("<IIII", *l.w.shape) for l in layers)
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.params())
    return head + dims + body


def load_model(data: bytes) -> SemanticCodecModel:
    if data[:4] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        dims = [struct.unpack_from("<IIII", data, 12 + 16 * i) for i in range(count)]
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint header") from exc
    off = 12 + 16 * count
    layers = []
    for shape in dims:
        nw = int(np.prod(shape))
        need = 8 * (nw + shape[3])
        if len(data) < off + need:
            raise CheckpointError("truncated checkpoint parameters")
        w = np.frombuffer(data, "<f8", nw, off).reshape(shape).astype(np.float64)
        b = np.frombuffer(data, "<f8", shape[3], off + 8 * nw).astype(np.float64)
        layers.append(ConvLayer(w, b))
        off += need
    if off != len(data):
        raise CheckpointError(f"{len(data) - off} trailing bytes in checkpoint")
    half = len(layers) // 2
    try:
        model = SemanticCodecModel(layers[:half], layers[half:])
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc
    if not all(np.isfinite(p).all() for p in model.params()):
        raise CheckpointError("non-finite parameters in checkpoint")
    return model


def default_model() -> SemanticCodecModel:
    """The bundled model trained with the default TrainConfig."""
    ref = resources.files("hybridbsc") / "models" / DEFAULT_CHECKPOINT
    return load_model(ref.read_bytes())
