"""Orthonormal Haar DWT, block DCT-II and a batched 4x4 Jacobi SVD.

Everything here is linear algebra on float64 arrays. Block routines accept
a single ``(N, N)`` block or any stack ``(..., N, N)`` and operate on the last
two axes, so a whole LF subband can be processed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Subbands:
    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    def __post_init__(self):
        shapes = {self.ll.shape, self.lh.shape, self.hl.shape, self.hh.shape}
        if len(shapes) != 1:
            raise ValueError(f"subband shapes differ: {sorted(shapes)}")


@dataclass
class BlockSvd:
    """Factors of ``b = u @ diag(z) @ v.T`` (possibly batched on leading axes)."""

    u: np.ndarray
    z: np.ndarray
    v: np.ndarray


# --------------------------------------------------------------------------
# Haar
# --------------------------------------------------------------------------

def dwt2_haar(x: np.ndarray) -> Subbands:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D plane, got {x.shape}")
    if x.shape[0] % 2 or x.shape[1] % 2:
        raise ValueError(f"odd dimension {x.shape}; Haar analysis needs even sizes")
    a = x[0::2, 0::2]
    b = x[0::2, 1::2]
    c = x[1::2, 0::2]
    d = x[1::2, 1::2]
    return Subbands(
        ll=(a + b + c + d) / 2,
        lh=(a - b + c - d) / 2,
        hl=(a + b - c - d) / 2,
        hh=(a - b - c + d) / 2,
    )


def idwt2_haar(s: Subbands) -> np.ndarray:
    ll, lh, hl, hh = s.ll, s.lh, s.hl, s.hh
    if not (ll.shape == lh.shape == hl.shape == hh.shape):
        raise ValueError("subband dimensions disagree")
    h, w = ll.shape
    out = np.empty((2 * h, 2 * w))
    out[0::2, 0::2] = (ll + lh + hl + hh) / 2
    out[0::2, 1::2] = (ll - lh + hl - hh) / 2
    out[1::2, 0::2] = (ll + lh - hl - hh) / 2
    out[1::2, 1::2] = (ll - lh - hl + hh) / 2
    return out


# --------------------------------------------------------------------------
# DCT
# --------------------------------------------------------------------------

def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis; row k is the k-th cosine."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    c[0] /= np.sqrt(2.0)
    return c


_DCT = {n: dct_matrix(n) for n in (4, 8)}


def _basis(b: np.ndarray) -> np.ndarray:
    n = b.shape[-1]
    if b.ndim < 2 or b.shape[-2] != n or n not in _DCT:
        raise ValueError(f"unsupported block shape {b.shape}; need (..., N, N) with N in (4, 8)")
    return _DCT[n]


def dct2_block(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    c = _basis(b)
    return c @ b @ c.T


def idct2_block(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    c = _basis(b)
    return c.T @ b @ c


def blockify(x: np.ndarray, n: int) -> np.ndarray:
    """Split an ``(H, W)`` array into ``(H/n, W/n, n, n)`` tiles (row-major grid)."""
    h, w = x.shape
    if h % n or w % n:
        raise ValueError(f"{x.shape} not divisible into {n}x{n} blocks")
    return x.reshape(h // n, n, w // n, n).swapaxes(1, 2)


def unblockify(blocks: np.ndarray) -> np.ndarray:
    gh, gw, n, _ = blocks.shape
    return blocks.swapaxes(1, 2).reshape(gh * n, gw * n)


# --------------------------------------------------------------------------
# SVD
# --------------------------------------------------------------------------

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def svd_4x4(b: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> BlockSvd:
    """SVD of 4x4 blocks by one-sided (Hestenes) Jacobi rotations.

    Rotating column pairs of ``b`` until they are mutually orthogonal is the
    implicit Jacobi eigen-iteration on ``b.T @ b``; working on ``b`` directly
    keeps small singular values accurate. Singular values come back sorted
    descending; each right singular vector has its first nonzero component
    made non-negative.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape[-2:] != (4, 4):
        raise ValueError(f"expected (..., 4, 4) blocks, got {b.shape}")
    lead = b.shape[:-2]
    a = b.reshape(-1, 4, 4).copy()
    m = a.shape[0]
    v = np.broadcast_to(np.eye(4), (m, 4, 4)).copy()

    pairs = [(p, q) for p in range(3) for q in range(p + 1, 4)]
    for _ in range(max_sweeps):
        rotated = False
        for p, q in pairs:
            ap, aq = a[:, :, p], a[:, :, q]
            alpha = np.einsum("ij,ij->i", ap, ap)
            beta = np.einsum("ij,ij->i", aq, aq)
            gamma = np.einsum("ij,ij->i", ap, aq)
            need = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not need.any():
                continue
            rotated = True
            g = np.where(need, gamma, 1.0)
            with np.errstate(over="ignore"):
                # an infinite zeta gives t = 0, the correct limit
                zeta = (beta - alpha) / (2.0 * g)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            c = np.where(need, c, 1.0)[:, None]
            s = np.where(need, s, 0.0)[:, None]
            new_p = c * ap - s * aq
            new_q = s * ap + c * aq
            a[:, :, p], a[:, :, q] = new_p, new_q
            vp, vq = v[:, :, p].copy(), v[:, :, q]
            v[:, :, p] = c * vp - s * vq
            v[:, :, q] = s * vp + c * vq
        if not rotated:
            break

    z = np.linalg.norm(a, axis=1)
    order = np.argsort(-z, axis=1, kind="stable")
    z = np.take_along_axis(z, order, axis=1)
    a = np.take_along_axis(a, order[:, None, :], axis=2)
    v = np.take_along_axis(v, order[:, None, :], axis=2)

    # negligible singular values: their left vectors are completed to an
    # orthonormal basis below instead of normalising round-off
    floor = 1e-13 * np.maximum(z[:, :1], np.finfo(float).tiny)
    small = z <= floor
    u = a / np.where(small, 1.0, z)[:, None, :]
    if small.any():
        _complete_basis(u, small)

    # sign convention on V
    idx = np.argmax(np.abs(v) > 1e-12, axis=1)
    lead_comp = np.take_along_axis(v, idx[:, None, :], axis=1)[:, 0, :]
    flip = np.where(lead_comp < 0, -1.0, 1.0)[:, None, :]
    v *= flip
    u *= flip
    return BlockSvd(u=u.reshape(lead + (4, 4)), z=z.reshape(lead + (4,)), v=v.reshape(lead + (4, 4)))


def _complete_basis(u: np.ndarray, small: np.ndarray) -> None:
    # columns are sorted by singular value, so small columns form a suffix
    eye = np.eye(4)
    for i in range(4):
        rows = np.nonzero(small[:, i])[0]
        if rows.size == 0:
            continue
        prev = u[rows, :, :i]
        proj = eye - prev @ prev.swapaxes(1, 2)
        norms = np.linalg.norm(proj, axis=1)
        best = np.argmax(norms, axis=1)
        col = np.take_along_axis(proj, best[:, None, None], axis=2)[:, :, 0]
        u[rows, :, i] = col / np.linalg.norm(col, axis=1, keepdims=True)


def reconstruct_svd(f: BlockSvd) -> np.ndarray:
    return (f.u * f.z[..., None, :]) @ f.v.swapaxes(-1, -2)
