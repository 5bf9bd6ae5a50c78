"""Huffman entropy coding of quantised 8x8 blocks (numba kernels).

Coefficients are int64 arrays ``(n_mcu, n_comp, 64)`` in zigzag order. Table
arrays are stacked so that index 0 is luma and 1 is chroma.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# decode status codes
OK = 0
ERR_BAD_CODE = -1
ERR_OVERRUN = -2
ERR_COEF_INDEX = -3
ERR_BAD_BYTE = -4


@njit(cache=True)
def _category(v):
    v = abs(v)
    n = 0
    while v:
        n += 1
        v >>= 1
    return n


@njit(cache=True)
def encode_scan(coefs, comp_tab, dc_code, dc_size, ac_code, ac_size, restart_interval, out):
    """Write the entropy-coded segment (with RST markers) into ``out``.

    Returns the number of bytes written.
    """
    n_mcu, n_comp, _ = coefs.shape
    pos = 0
    acc = 0
    nbits = 0
    pred = np.zeros(n_comp, np.int64)
    for m in range(n_mcu):
        if restart_interval > 0 and m > 0 and m % restart_interval == 0:
            # pad to a byte boundary with ones, then RSTn
            if nbits % 8:
                pad = 8 - nbits % 8
                acc = (acc << pad) | ((1 << pad) - 1)
                nbits += pad
            while nbits >= 8:
                byte = (acc >> (nbits - 8)) & 0xFF
                nbits -= 8
                out[pos] = byte
                pos += 1
                if byte == 0xFF:
                    out[pos] = 0
                    pos += 1
            acc = 0
            out[pos] = 0xFF
            out[pos + 1] = 0xD0 + ((m // restart_interval - 1) % 8)
            pos += 2
            pred[:] = 0
        for c in range(n_comp):
            t = comp_tab[c]
            blk = coefs[m, c]
            # DC
            diff = blk[0] - pred[c]
            pred[c] = blk[0]
            s = _category(diff)
            acc = (acc << dc_size[t, s]) | dc_code[t, s]
            nbits += dc_size[t, s]
            if s:
                v = diff if diff >= 0 else diff + (1 << s) - 1
                acc = (acc << s) | (v & ((1 << s) - 1))
                nbits += s
            # AC
            run = 0
            for k in range(1, 64):
                v = blk[k]
                if v == 0:
                    run += 1
                    continue
                while run > 15:
                    acc = (acc << ac_size[t, 0xF0]) | ac_code[t, 0xF0]
                    nbits += ac_size[t, 0xF0]
                    run -= 16
                    while nbits >= 8:
                        byte = (acc >> (nbits - 8)) & 0xFF
                        nbits -= 8
                        out[pos] = byte
                        pos += 1
                        if byte == 0xFF:
                            out[pos] = 0
                            pos += 1
                s = _category(v)
                sym = (run << 4) | s
                acc = (acc << ac_size[t, sym]) | ac_code[t, sym]
                nbits += ac_size[t, sym]
                vv = v if v >= 0 else v + (1 << s) - 1
                acc = (acc << s) | (vv & ((1 << s) - 1))
                nbits += s
                run = 0
                while nbits >= 8:
                    byte = (acc >> (nbits - 8)) & 0xFF
                    nbits -= 8
                    out[pos] = byte
                    pos += 1
                    if byte == 0xFF:
                        out[pos] = 0
                        pos += 1
            if run:
                acc = (acc << ac_size[t, 0]) | ac_code[t, 0]
                nbits += ac_size[t, 0]
            while nbits >= 8:
                byte = (acc >> (nbits - 8)) & 0xFF
                nbits -= 8
                out[pos] = byte
                pos += 1
                if byte == 0xFF:
                    out[pos] = 0
                    pos += 1
            acc &= (1 << nbits) - 1
    if nbits % 8:
        pad = 8 - nbits % 8
        acc = (acc << pad) | ((1 << pad) - 1)
        nbits += pad
    while nbits >= 8:
        byte = (acc >> (nbits - 8)) & 0xFF
        nbits -= 8
        out[pos] = byte
        pos += 1
        if byte == 0xFF:
            out[pos] = 0
            pos += 1
    return pos


@njit(cache=True)
def decode_interval(data, start, end, n_mcus, comp_tab, mincode, maxcode, valptr, huffval, out, mcu0):
    """Decode ``n_mcus`` MCUs from ``data[start:end]`` into ``out[mcu0:...]``.

    ``mincode``/``maxcode``/``valptr``/``huffval`` are indexed [table] with
    tables 0, 1 = DC luma/chroma and 2, 3 = AC luma/chroma. The segment must
    be consumed exactly (only one-bit padding may remain); anything else is
    reported as an error so that undetected desynchronisation is rare.
    """
    n_comp = out.shape[1]
    pos = start
    acc = 0
    nbits = 0
    pred = np.zeros(n_comp, np.int64)
    for m in range(mcu0, mcu0 + n_mcus):
        for c in range(n_comp):
            for k in range(64):
                out[m, c, k] = 0
            k = 0
            while k < 64:
                t = comp_tab[c] + (0 if k == 0 else 2)
                # Huffman symbol, one bit at a time
                code = 0
                length = 0
                sym = -1
                while length < 16:
                    if nbits == 0:
                        if pos >= end:
                            return ERR_OVERRUN
                        byte = data[pos]
                        pos += 1
                        if byte == 0xFF:
                            if pos >= end or data[pos] != 0:
                                return ERR_BAD_BYTE
                            pos += 1
                        acc = byte
                        nbits = 8
                    nbits -= 1
                    code = (code << 1) | ((acc >> nbits) & 1)
                    length += 1
                    if code <= maxcode[t, length]:
                        sym = huffval[t, valptr[t, length] + code - mincode[t, length]]
                        break
                if sym < 0:
                    return ERR_BAD_CODE
                if k == 0:
                    s = sym
                    if s > 11:
                        return ERR_BAD_CODE
                else:
                    run = sym >> 4
                    s = sym & 15
                    if s == 0:
                        if run == 15:
                            k += 16
                            if k > 64:
                                return ERR_COEF_INDEX
                            continue
                        break  # EOB
                    k += run
                    if k >= 64:
                        return ERR_COEF_INDEX
                v = 0
                for _ in range(s):
                    if nbits == 0:
                        if pos >= end:
                            return ERR_OVERRUN
                        byte = data[pos]
                        pos += 1
                        if byte == 0xFF:
                            if pos >= end or data[pos] != 0:
                                return ERR_BAD_BYTE
                            pos += 1
                        acc = byte
                        nbits = 8
                    nbits -= 1
                    v = (v << 1) | ((acc >> nbits) & 1)
                if s and v < (1 << (s - 1)):
                    v -= (1 << s) - 1
                if k == 0:
                    pred[c] += v
                    out[m, c, 0] = pred[c]
                else:
                    out[m, c, k] = v
                k += 1
    # only all-ones padding may remain
    if nbits and (acc & ((1 << nbits) - 1)) != (1 << nbits) - 1:
        return ERR_BAD_BYTE
    if pos != end:
        return ERR_OVERRUN
    return OK
