"""Quasi-cyclic LDPC code (802.11n, n=648, rate 1/2) with sum-product decoding.

LLR convention: positive means bit 0 is more likely.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from numba import njit

DEFAULT_PROTOTYPE = "ieee80211n_648_r12.txt"
DEFAULT_MAX_ITERATIONS = 50


class CodeLengthError(ValueError):
    pass


def load_prototype(text: str) -> np.ndarray:
    rows = [line.split() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    proto = np.array(rows, dtype=np.int64)
    if proto.ndim != 2:
        raise ValueError("prototype rows have different lengths")
    return proto


def expand_prototype(proto: np.ndarray, z: int) -> np.ndarray:
    """Replace each entry s >= 0 by the z x z identity rolled s columns."""
    if proto.max() >= z or proto.min() < -1:
        raise ValueError(f"prototype shifts must lie in [-1, {z - 1}]")
    rows, cols = proto.shape
    h = np.zeros((rows * z, cols * z), dtype=np.uint8)
    eye = np.eye(z, dtype=np.uint8)
    for r in range(rows):
        for c in range(cols):
            if proto[r, c] >= 0:
                h[r * z:(r + 1) * z, c * z:(c + 1) * z] = np.roll(eye, proto[r, c], axis=1)
    return h


def gf2_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of a square GF(2) matrix by Gauss-Jordan elimination."""
    n = a.shape[0]
    aug = np.concatenate([a.astype(bool), np.eye(n, dtype=bool)], axis=1)
    for col in range(n):
        pivots = np.nonzero(aug[col:, col])[0]
        if pivots.size == 0:
            raise np.linalg.LinAlgError("matrix is singular over GF(2)")
        p = col + pivots[0]
        if p != col:
            aug[[col, p]] = aug[[p, col]]
        rows = np.nonzero(aug[:, col])[0]
        rows = rows[rows != col]
        aug[rows] ^= aug[col]
    return aug[:, n:].astype(np.uint8)


@dataclass
class LdpcCode:
    """Parity-check matrix ``h = [h_info | h_parity]`` plus derived tables."""

    h: np.ndarray
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.uint8)
        m, n = self.h.shape
        self.n, self.k = n, n - m
        # systematic encoder: parity = inv(h_parity) h_info info
        hp_inv = gf2_inverse(self.h[:, self.k:])
        self.parity_gen = ((hp_inv.astype(np.int64) @ self.h[:, :self.k]) % 2).astype(np.uint8)
        # edge lists grouped by check node
        checks, variables = np.nonzero(self.h)
        self.check_ptr = np.searchsorted(checks, np.arange(m + 1)).astype(np.int64)
        self.edge_var = variables.astype(np.int64)

    @property
    def rate(self) -> float:
        return self.k / self.n


@lru_cache(maxsize=1)
def default_code() -> LdpcCode:
    text = (resources.files("hybridbsc.phylink") / "data" / DEFAULT_PROTOTYPE).read_text()
    return LdpcCode(expand_prototype(load_prototype(text), 27))


def ldpc_encode(info: np.ndarray, code: LdpcCode | None = None) -> np.ndarray:
    """Systematic codewords ``[info | parity]`` for one (k,) or many (N, k) blocks."""
    code = code or default_code()
    info = np.asarray(info, dtype=np.uint8)
    if info.shape[-1] != code.k:
        raise CodeLengthError(f"expected {code.k} info bits per block, got {info.shape[-1]}")
    # float32 BLAS product is exact here: each sum counts at most k ones
    parity = np.remainder(info.astype(np.float32) @ code.parity_gen.T.astype(np.float32), 2)
    return np.concatenate([info, parity.astype(np.uint8)], axis=-1)


def syndrome(word: np.ndarray, code: LdpcCode | None = None) -> np.ndarray:
    code = code or default_code()
    return (np.asarray(word, dtype=np.int64) @ code.h.T.astype(np.int64)) % 2


# --------------------------------------------------------------------------
# Sum-product decoder
# --------------------------------------------------------------------------
# phi(x) = -log(tanh(x / 2)) is its own inverse on x > 0, so the check-node
# update is sign * phi(sum phi(|q|)). phi is tabulated: a fine table on
# [0, 0.5) where it is steep and a coarse one up to 30 where it is ~0.

_FINE_STEP = 2.0 ** -13
_COARSE_STEP = 1.0 / 128
_PHI_MAX_ARG = 30.0


def _phi_tables():
    xf = np.arange(int(0.5 / _FINE_STEP) + 2) * _FINE_STEP
    xf[0] = _FINE_STEP
    xc = np.arange(int(_PHI_MAX_ARG / _COARSE_STEP) + 2) * _COARSE_STEP
    xc[0] = _COARSE_STEP
    fine = -np.log(np.tanh(xf / 2))
    coarse = -np.log(np.tanh(xc / 2))
    coarse[-2:] = 0.0
    return fine, coarse


PHI_FINE, PHI_COARSE = _phi_tables()


@njit(cache=True)
def _decode_kernel(llr, cptr, evar, max_iter, fine, coarse, hard, iters, converged):
    ncw, n = llr.shape
    m = cptr.shape[0] - 1
    n_edges = evar.shape[0]
    r = np.zeros(n_edges)
    q = np.zeros(n_edges)
    f = np.zeros(n_edges)
    tot = np.zeros(n)
    for w in range(ncw):
        r[:] = 0.0
        for v in range(n):
            tot[v] = llr[w, v]
        it = 0
        # a codeword that is already consistent needs no iteration
        ok = True
        for c in range(m):
            par = 0
            for e in range(cptr[c], cptr[c + 1]):
                par ^= tot[evar[e]] < 0
            if par:
                ok = False
                break
        while not ok and it < max_iter:
            it += 1
            for c in range(m):
                a = cptr[c]
                b = cptr[c + 1]
                s = 0.0
                neg = 0
                for e in range(a, b):
                    x = tot[evar[e]] - r[e]
                    q[e] = x
                    ax = abs(x)
                    # inline phi lookup (a helper call here is much slower)
                    if ax < 0.5:
                        u = ax * 8192.0
                        i = int(u)
                        fe = fine[i] + (u - i) * (fine[i + 1] - fine[i])
                    else:
                        u = min(ax, 29.99) * 128.0
                        i = int(u)
                        fe = coarse[i] + (u - i) * (coarse[i + 1] - coarse[i])
                    f[e] = fe
                    s += fe
                    neg ^= x < 0
                for e in range(a, b):
                    ax = s - f[e]
                    if ax < 0.5:
                        u = max(ax, 0.0) * 8192.0
                        i = int(u)
                        g = fine[i] + (u - i) * (fine[i + 1] - fine[i])
                    else:
                        u = min(ax, 29.99) * 128.0
                        i = int(u)
                        g = coarse[i] + (u - i) * (coarse[i + 1] - coarse[i])
                    r[e] = -g if (neg ^ (q[e] < 0)) else g
            for v in range(n):
                tot[v] = llr[w, v]
            for e in range(n_edges):
                tot[evar[e]] += r[e]
            ok = True
            for c in range(m):
                par = 0
                for e in range(cptr[c], cptr[c + 1]):
                    par ^= tot[evar[e]] < 0
                if par:
                    ok = False
                    break
        iters[w] = it
        converged[w] = ok
        for v in range(n):
            hard[w, v] = 1 if tot[v] < 0 else 0


@dataclass
class DecodeResult:
    info: np.ndarray        # (N, k) or (k,)
    converged: np.ndarray   # bool per codeword
    iterations: np.ndarray  # iterations used per codeword


def ldpc_decode(llrs: np.ndarray, code: LdpcCode | None = None, max_iterations: int | None = None) -> DecodeResult:
    """Sum-product decoding with early exit on a zero syndrome.

    Args:
        llrs: (n,) or (N, n) channel LLRs, positive favouring bit 0.
        code: the code; defaults to the 648-bit rate-1/2 code.
        max_iterations: overrides ``code.max_iterations``.

    Returns:
        Hard-decision information bits plus per-codeword convergence flags
        and iteration counts. Non-convergence is reported, never raised.
    """
    code = code or default_code()
    arr = np.asarray(llrs, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != code.n:
        raise CodeLengthError(f"expected {code.n} LLRs per codeword, got {arr.shape[-1]}")
    arr = np.nan_to_num(np.ascontiguousarray(arr), nan=0.0, posinf=1e3, neginf=-1e3)
    ncw = arr.shape[0]
    hard = np.zeros((ncw, code.n), np.uint8)
    iters = np.zeros(ncw, np.int64)
    conv = np.zeros(ncw, np.bool_)
    limit = code.max_iterations if max_iterations is None else int(max_iterations)
    _decode_kernel(arr, code.check_ptr, code.edge_var, limit,
                   PHI_FINE, PHI_COARSE, hard, iters, conv)
    info = hard[:, :code.k]
    if single:
        return DecodeResult(info[0], conv[:1], iters[:1])
    return DecodeResult(info, conv, iters)
