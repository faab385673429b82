"""Canonical Huffman code construction and a vectorized baseline entropy coder."""

from __future__ import annotations

import numpy as np

from .tables import ZIGZAG


def canonical_codes(bits, values):
    """Return (code, length) lookup arrays indexed by symbol, per T.81 Annex C."""
    code_of = np.zeros(256, dtype=np.int64)
    len_of = np.zeros(256, dtype=np.int64)
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            sym = values[k]
            code_of[sym] = code
            len_of[sym] = length
            code += 1
            k += 1
        code <<= 1
    return code_of, len_of


def decode_lut(bits, values):
    """Build a 16-bit lookahead table mapping a window to (symbol, length).

    Windows that start with no valid code map to length 0.
    """
    sym = np.zeros(1 << 16, dtype=np.int64)
    length_arr = np.zeros(1 << 16, dtype=np.int64)
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            lo = code << (16 - length)
            hi = (code + 1) << (16 - length)
            sym[lo:hi] = values[k]
            length_arr[lo:hi] = length
            code += 1
            k += 1
        code <<= 1
    return (sym * 32 + length_arr).tolist()


def magnitude_category(v):
    """Number of bits needed for |v| (0 for v == 0)."""
    a = np.abs(np.asarray(v, dtype=np.int64))
    return np.where(a == 0, 0, np.frexp(a.astype(np.float64))[1]).astype(np.int64)


def _extra_bits(v, size):
    return np.where(v >= 0, v, v + (np.int64(1) << size) - 1)


def entropy_encode(blocks, component, dc_tables, ac_tables):
    """Encode quantized blocks into a byte-stuffed entropy-coded segment.

    `blocks` is an (N, 8, 8) integer array in MCU scan order and
    `component[i]` the component index of block i. `dc_tables[c]` and
    `ac_tables[c]` are the (codes, lengths) lookups from `canonical_codes`
    used for component c. DC prediction runs separately per component.
    """
    selector = np.asarray(component, dtype=np.intp)
    dc_list, ac_list = dc_tables, ac_tables
    n = blocks.shape[0]
    zz = blocks.reshape(n, 64)[:, ZIGZAG].astype(np.int64)

    dc = zz[:, 0]
    diff = np.empty_like(dc)
    for comp in np.unique(selector):
        idx = np.flatnonzero(selector == comp)
        d = dc[idx]
        diff[idx] = np.diff(d, prepend=0)

    dc_codes = np.stack([t[0] for t in dc_list])
    dc_lens = np.stack([t[1] for t in dc_list])
    ac_codes = np.stack([t[0] for t in ac_list])
    ac_lens = np.stack([t[1] for t in ac_list])

    keys, vals, lens = [], [], []

    # DC items
    s = magnitude_category(diff)
    if np.any(s > 11):
        raise ValueError("DC difference out of baseline range")
    lens_dc = dc_lens[selector, s]
    vals.append((dc_codes[selector, s] << s) | (_extra_bits(diff, s) & ((np.int64(1) << s) - 1)))
    lens.append(lens_dc + s)
    keys.append(np.arange(n, dtype=np.int64) * 4096)

    # AC items
    ac = zz[:, 1:]
    b_idx, pos = np.nonzero(ac)
    k = pos.astype(np.int64) + 1
    if k.size:
        v = ac[b_idx, pos]
        size = magnitude_category(v)
        if np.any(size > 10):
            raise ValueError("AC coefficient out of baseline range")
        prev = np.zeros_like(k)
        same = np.zeros(k.size, dtype=bool)
        same[1:] = b_idx[1:] == b_idx[:-1]
        prev[1:] = np.where(same[1:], k[:-1], 0)
        run = k - prev - 1
        n_zrl = run // 16
        rem = run % 16
        sel = selector[b_idx]
        symbol = (rem << 4) | size
        vals.append((ac_codes[sel, symbol] << size) | (_extra_bits(v, size) & ((np.int64(1) << size) - 1)))
        lens.append(ac_lens[sel, symbol] + size)
        keys.append(b_idx.astype(np.int64) * 4096 + k * 32 + 4)

        # zero-run-length items, up to three per nonzero coefficient
        for j in range(3):
            m = n_zrl > j
            if np.any(m):
                sz = sel[m]
                vals.append(ac_codes[sz, 0xF0])
                lens.append(ac_lens[sz, 0xF0])
                keys.append(b_idx[m].astype(np.int64) * 4096 + k[m] * 32 + j)

    # EOB for blocks whose last coefficient is zero
    last_nz = np.zeros(n, dtype=np.int64)
    if k.size:
        np.maximum.at(last_nz, b_idx, k)
    eob = np.flatnonzero(last_nz < 63)
    sel = selector[eob]
    vals.append(ac_codes[sel, 0x00])
    lens.append(ac_lens[sel, 0x00])
    keys.append(eob.astype(np.int64) * 4096 + 64 * 32)

    lens = np.concatenate(lens)
    keys = np.concatenate(keys)
    order = np.argsort(keys, kind="stable")
    vals = np.concatenate(vals)[order]
    lens = lens[order]
    return pack_bits(vals, lens)


def pack_bits(vals, lens) -> bytes:
    """Concatenate variable-length codes MSB-first, pad with 1s, stuff 0xFF."""
    lens = np.asarray(lens, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.int64)
    total = int(lens.sum())
    pad = (-total) % 8
    starts = np.cumsum(lens) - lens
    item = np.repeat(np.arange(lens.size), lens)
    j = np.arange(total, dtype=np.int64) - starts[item]
    bits = (vals[item] >> (lens[item] - 1 - j)) & 1
    if pad:
        bits = np.concatenate([bits, np.ones(pad, dtype=np.int64)])
    data = np.packbits(bits.astype(np.uint8))
    ff = np.flatnonzero(data == 0xFF)
    if ff.size:
        data = np.insert(data, ff + 1, 0)
    return data.tobytes()
