"""Baseline sequential JPEG encoder and decoder.

The encoder writes JFIF streams with the Annex K Huffman tables, no chroma
subsampling, and a floating-point DCT. The decoder accepts any baseline or
extended-sequential Huffman stream (8-bit samples), keeps the full
marker-level structure, and reconstructs pixels with the accurate integer
IDCT used by libjpeg so that output matches reference decoders exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import tables as T
from .huffman import canonical_codes, decode_lut, entropy_encode


class JpegError(ValueError):
    """Base class for stream errors."""


class JpegFormatError(JpegError):
    """Malformed marker structure or missing mandatory segment."""


class JpegTruncatedError(JpegError):
    """Stream ends before EOI or before the entropy-coded data is complete."""


class JpegUnsupportedError(JpegError):
    """Valid JPEG using a mode this codec does not implement."""


class JpegCorruptError(JpegError):
    """Invalid Huffman code or coefficient index inside the scan data."""


MARKER_NAMES = {
    0xD8: "SOI", 0xD9: "EOI", 0xDA: "SOS", 0xDB: "DQT", 0xC4: "DHT",
    0xDD: "DRI", 0xFE: "COM", 0xC0: "SOF0", 0xC1: "SOF1", 0xC2: "SOF2",
    0xC3: "SOF3", 0xCC: "DAC", 0xDC: "DNL",
}
for _n in range(16):
    MARKER_NAMES.setdefault(0xE0 + _n, f"APP{_n}")
for _n in range(8):
    MARKER_NAMES[0xD0 + _n] = f"RST{_n}"
for _code in (0xC5, 0xC6, 0xC7, 0xC9, 0xCA, 0xCB, 0xCD, 0xCE, 0xCF):
    MARKER_NAMES[_code] = f"SOF{_code - 0xC0}"

_UNSUPPORTED_SOF = {
    0xC2: "progressive", 0xC3: "lossless", 0xC5: "differential sequential",
    0xC6: "differential progressive", 0xC7: "differential lossless",
    0xC9: "arithmetic sequential", 0xCA: "arithmetic progressive",
    0xCB: "arithmetic lossless", 0xCD: "arithmetic differential sequential",
    0xCE: "arithmetic differential progressive",
    0xCF: "arithmetic differential lossless",
}


@dataclass
class FrameComponent:
    id: int
    h: int
    v: int
    table: int


@dataclass
class Marker:
    name: str
    offset: int
    length: int


@dataclass
class Scan:
    components: list[int]          # indices into frame components
    dc_tables: list[int]
    ac_tables: list[int]
    data: bytes                    # raw entropy-coded bytes, still stuffed


@dataclass
class JpegStructure:
    """Marker-level view of a JPEG stream."""

    width: int
    height: int
    precision: int
    sof: str
    components: list[FrameComponent]
    dqt: dict[int, np.ndarray]                   # destination -> natural-order table
    dqt_precision: dict[int, int]
    huffman_tables: dict[tuple[int, int], tuple[list[int], list[int]]]
    scans: list[Scan]
    markers: list[Marker]
    restart_interval: int = 0
    jfif: bool = False
    adobe_transform: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def quant_tables(self) -> list[np.ndarray]:
        """Quantization table of each frame component (Y, Cb, Cr order)."""
        return [self.dqt[c.table] for c in self.components]

    @property
    def subsampling(self) -> list[tuple[int, int]]:
        return [(c.h, c.v) for c in self.components]

    @property
    def scan_data(self) -> bytes:
        return b"".join(s.data for s in self.scans)


# ---------------------------------------------------------------------------
# transforms

def _dct_matrix() -> np.ndarray:
    k = np.arange(8)
    c = np.cos((2 * k[None, :] + 1) * k[:, None] * np.pi / 16) * 0.5
    c[0, :] = np.sqrt(0.125)
    return c


DCT_MATRIX = _dct_matrix()


def forward_dct(blocks):
    """Orthonormal 8x8 DCT-II of (..., 8, 8) level-shifted samples."""
    return DCT_MATRIX @ blocks @ DCT_MATRIX.T


def inverse_dct(coefs):
    """Exact floating-point inverse of `forward_dct`."""
    return DCT_MATRIX.T @ coefs @ DCT_MATRIX


_CONST_BITS = 13
_PASS1_BITS = 2
_F0_298 = 2446
_F0_390 = 3196
_F0_541 = 4433
_F0_765 = 6270
_F0_899 = 7373
_F1_175 = 9633
_F1_501 = 12299
_F1_847 = 15137
_F1_961 = 16069
_F2_053 = 16819
_F2_562 = 20995
_F3_072 = 25172


def _idct_1d(x, first_pass):
    """One 8-point pass of the accurate integer IDCT; x is a list of 8 arrays."""
    z2, z3 = x[2], x[6]
    z1 = (z2 + z3) * _F0_541
    tmp2 = z1 - z3 * _F1_847
    tmp3 = z1 + z2 * _F0_765
    tmp0 = (x[0] + x[4]) << _CONST_BITS
    tmp1 = (x[0] - x[4]) << _CONST_BITS
    tmp10, tmp13 = tmp0 + tmp3, tmp0 - tmp3
    tmp11, tmp12 = tmp1 + tmp2, tmp1 - tmp2

    t0, t1, t2, t3 = x[7], x[5], x[3], x[1]
    z1 = t0 + t3
    z2 = t1 + t2
    z3 = t0 + t2
    z4 = t1 + t3
    z5 = (z3 + z4) * _F1_175
    t0 = t0 * _F0_298
    t1 = t1 * _F2_053
    t2 = t2 * _F3_072
    t3 = t3 * _F1_501
    z1 = z1 * -_F0_899
    z2 = z2 * -_F2_562
    z3 = z3 * -_F1_961 + z5
    z4 = z4 * -_F0_390 + z5
    t0 += z1 + z3
    t1 += z2 + z4
    t2 += z2 + z3
    t3 += z1 + z4

    out = [tmp10 + t3, tmp11 + t2, tmp12 + t1, tmp13 + t0,
           tmp13 - t0, tmp12 - t1, tmp11 - t2, tmp10 - t3]
    if first_pass:
        n = _CONST_BITS - _PASS1_BITS
        return [(o + (1 << (n - 1))) >> n for o in out]
    return out


def idct_islow_prescale(dequantized):
    """Integer IDCT up to (but excluding) the final descale.

    Returns int64 values in units of 2**-18 of a sample, not level-shifted.
    """
    d = np.asarray(dequantized, dtype=np.int64)
    cols = _idct_1d([d[..., u, :] for u in range(8)], first_pass=True)
    ws = np.stack(cols, axis=-2)
    rows = _idct_1d([ws[..., :, u] for u in range(8)], first_pass=False)
    return np.stack(rows, axis=-1)


_FINAL_SHIFT = _CONST_BITS + _PASS1_BITS + 3


def idct_islow(dequantized):
    """Accurate integer IDCT (libjpeg JDCT_ISLOW), level-shifted and clamped."""
    pre = idct_islow_prescale(dequantized)
    out = ((pre + (1 << (_FINAL_SHIFT - 1))) >> _FINAL_SHIFT) + 128
    return np.clip(out, 0, 255)


# ---------------------------------------------------------------------------
# colour

def rgb_to_ycbcr(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168735892 * r - 0.331264108 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418687589 * g - 0.081312411 * b + 128.0
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(y, cb, cr):
    """Fixed-point YCbCr -> RGB exactly as in libjpeg's jdcolor.c."""
    scalebits = 16
    half = 1 << (scalebits - 1)

    def fix(x):
        return int(x * (1 << scalebits) + 0.5)

    y = y.astype(np.int64)
    cbx = cb.astype(np.int64) - 128
    crx = cr.astype(np.int64) - 128
    r = y + ((fix(1.40200) * crx + half) >> scalebits)
    g = y + ((-fix(0.34414) * cbx - fix(0.71414) * crx + half) >> scalebits)
    b = y + ((fix(1.77200) * cbx + half) >> scalebits)
    return np.clip(np.stack([r, g, b], axis=-1), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# encoder

def _as_table_list(quality, tables, n_components):
    if tables is None:
        T.check_quality(quality)
        luma = T.std_quant_matrix(quality)
        if n_components == 1:
            return [luma]
        return [luma, T.std_quant_matrix(quality, chroma=True)]
    if isinstance(tables, np.ndarray) and tables.ndim == 2:
        tables = [tables]
    tables = [T.check_quant_matrix(t) for t in tables]
    if not 1 <= len(tables) <= 4:
        raise ValueError("between 1 and 4 quantization tables are allowed")
    return tables


def _component_tables(n_components, n_tables):
    if n_components == 1:
        return [0]
    if n_tables == 1:
        return [0, 0, 0]
    if n_tables == 2:
        return [0, 1, 1]
    return [0, 1, 2]


def _check_image(image):
    img = np.asarray(image)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")
    if img.dtype != np.uint8:
        if img.min() < 0 or img.max() > 255 or not np.all(img == np.round(img)):
            raise ValueError("samples must be integers in [0, 255]")
    h, w = img.shape[:2]
    if h == 0 or w == 0 or h % 8 or w % 8:
        raise ValueError(f"dimensions must be positive multiples of 8, got {w}x{h}")
    return img


def quantize_image(image, quality: int = 75, tables=None):
    """Level shift, DCT and quantize; returns (coefs, qtables, assign).

    coefs[c] is the (H/8, W/8, 8, 8) quantized block grid of component c.
    """
    img = _check_image(image)
    h, w = img.shape[:2]
    if img.ndim == 2:
        planes = [img.astype(np.float64)]
    else:
        ycc = rgb_to_ycbcr(img)
        planes = [ycc[..., c] for c in range(3)]

    qlist = _as_table_list(quality, tables, len(planes))
    assign = _component_tables(len(planes), len(qlist))
    coefs = []
    for plane, t in zip(planes, assign):
        blocks = plane.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3) - 128.0
        coefs.append(T.round_half_away(forward_dct(blocks) / qlist[t]).astype(np.int64))
    return coefs, qlist, assign


def encode_jpeg(image, quality: int = 75, tables=None) -> bytes:
    """Encode an 8-bit grey (H, W) or RGB (H, W, 3) image as baseline JFIF.

    Either `quality` selects the standard tables or `tables` gives explicit
    quantization matrices: one for grey, or (luma, chroma) / (Y, Cb, Cr)
    for colour. Width and height must be multiples of 8.
    """
    coefs, qlist, assign = quantize_image(image, quality, tables)
    h, w = np.asarray(image).shape[:2]
    return encode_coefficients(coefs, qlist, assign, w, h)


def encode_tiles(image, grid: int = 4, quality: int = 75, tables=None) -> list[bytes]:
    """Encode the grid x grid row-major tiles of `image` as separate streams.

    Every tile is block aligned, so this gives the same bytes as calling
    `encode_jpeg` on each tile while transforming the image only once.
    """
    img = _check_image(image)
    h, w = img.shape[:2]
    if h % (8 * grid) or w % (8 * grid):
        raise ValueError(f"{w}x{h} image does not split into {grid}x{grid} block-aligned tiles")
    coefs, qlist, assign = quantize_image(img, quality, tables)
    by, bx = h // 8 // grid, w // 8 // grid
    out = []
    for r in range(grid):
        for c in range(grid):
            part = [k[r * by:(r + 1) * by, c * bx:(c + 1) * bx] for k in coefs]
            out.append(encode_coefficients(part, qlist, assign, w // grid, h // grid))
    return out


def encode_coefficients(coefs, qtables, assign, width, height) -> bytes:
    """Emit a baseline JFIF stream for already-quantized 4:4:4 coefficients.

    `coefs[c]` is a (blocks_y, blocks_x, 8, 8) natural-order array for
    component c, `assign[c]` its quantization table index into `qtables`.
    """
    n = len(coefs)
    if n not in (1, 3):
        raise ValueError("only 1 or 3 components are supported")
    by, bx = coefs[0].shape[:2]
    if any(c.shape[:2] != (by, bx) for c in coefs):
        raise ValueError("all components must share the block grid (4:4:4)")
    if by != -(-height // 8) or bx != -(-width // 8):
        raise ValueError("coefficient grid does not match the image size")

    out = bytearray(b"\xff\xd8")
    out += _segment(0xE0, b"JFIF\x00\x01\x01\x00\x00\x01\x00\x01\x00\x00")

    dqt = bytearray()
    for i, q in enumerate(qtables):
        q = np.asarray(q, dtype=np.int64)
        zz = q.reshape(64)[T.ZIGZAG]
        if zz.max() > 255:
            dqt.append(0x10 | i)
            dqt += struct.pack(">64H", *zz.tolist())
        else:
            dqt.append(i)
            dqt += bytes(zz.tolist())
    out += _segment(0xDB, bytes(dqt))

    sof = struct.pack(">BHHB", 8, height, width, n)
    for c in range(n):
        sof += struct.pack(">BBB", c + 1, 0x11, assign[c])
    out += _segment(0xC0, sof)

    specs = [(0, 0, T.DC_LUMA), (1, 0, T.AC_LUMA)]
    if n == 3:
        specs += [(0, 1, T.DC_CHROMA), (1, 1, T.AC_CHROMA)]
    dht = bytearray()
    for cls, dest, (bits, vals) in specs:
        dht.append(cls << 4 | dest)
        dht += bytes(bits) + bytes(vals)
    out += _segment(0xC4, bytes(dht))

    sos = bytes([n])
    for c in range(n):
        sel = 0 if c == 0 else 1
        sos += bytes([c + 1, sel << 4 | sel])
    sos += b"\x00\x3f\x00"
    out += _segment(0xDA, sos)

    stacked = np.stack([np.asarray(c, dtype=np.int64) for c in coefs], axis=2)
    blocks = stacked.reshape(-1, 8, 8)
    component = np.tile(np.arange(n), by * bx)
    dc_luma = canonical_codes(*T.DC_LUMA)
    ac_luma = canonical_codes(*T.AC_LUMA)
    if n == 1:
        dc_t, ac_t = [dc_luma], [ac_luma]
    else:
        dc_chroma = canonical_codes(*T.DC_CHROMA)
        ac_chroma = canonical_codes(*T.AC_CHROMA)
        dc_t = [dc_luma, dc_chroma, dc_chroma]
        ac_t = [ac_luma, ac_chroma, ac_chroma]
    out += entropy_encode(blocks, component, dc_t, ac_t)
    out += b"\xff\xd9"
    return bytes(out)


def _segment(marker, payload) -> bytes:
    return bytes([0xFF, marker]) + struct.pack(">H", len(payload) + 2) + payload


# ---------------------------------------------------------------------------
# parser

def parse_jpeg(blob: bytes) -> JpegStructure:
    """Parse markers and tables without entropy decoding."""
    data = bytes(blob)
    if len(data) < 2 or data[0] != 0xFF or data[1] != 0xD8:
        raise JpegFormatError("missing SOI marker")
    markers = [Marker("SOI", 0, 0)]
    dqt, dqt_prec, huff = {}, {}, {}
    frame = None
    scans = []
    restart = 0
    jfif = False
    adobe = None
    pos = 2
    n = len(data)
    saw_eoi = False
    while pos < n:
        if data[pos] != 0xFF:
            raise JpegFormatError(f"expected marker at offset {pos}")
        while pos < n and data[pos] == 0xFF:
            pos += 1
        if pos >= n:
            break
        code = data[pos]
        start = pos - 1
        pos += 1
        name = MARKER_NAMES.get(code, f"0x{code:02X}")
        if code == 0xD9:
            markers.append(Marker("EOI", start, 0))
            saw_eoi = True
            break
        if 0xD0 <= code <= 0xD7 or code == 0x01:
            markers.append(Marker(name, start, 0))
            continue
        if pos + 2 > n:
            raise JpegTruncatedError(f"{name} segment header truncated")
        (length,) = struct.unpack(">H", data[pos:pos + 2])
        if length < 2:
            raise JpegFormatError(f"{name} segment has invalid length {length}")
        if pos + length > n:
            raise JpegTruncatedError(f"{name} segment truncated")
        payload = data[pos + 2:pos + length]
        markers.append(Marker(name, start, length))
        pos += length

        if code == 0xDB:
            _parse_dqt(payload, dqt, dqt_prec)
        elif code == 0xC4:
            _parse_dht(payload, huff)
        elif code in (0xC0, 0xC1):
            frame = _parse_sof(payload, name)
        elif code in _UNSUPPORTED_SOF:
            raise JpegUnsupportedError(f"{_UNSUPPORTED_SOF[code]} JPEG ({name}) is not supported")
        elif code == 0xDD:
            if len(payload) < 2:
                raise JpegFormatError("DRI segment too short")
            (restart,) = struct.unpack(">H", payload[:2])
        elif code == 0xE0 and payload[:5] == b"JFIF\x00":
            jfif = True
        elif code == 0xEE and payload[:5] == b"Adobe" and len(payload) >= 12:
            adobe = payload[11]
        elif code == 0xCC:
            raise JpegUnsupportedError("arithmetic coding conditioning (DAC) is not supported")
        elif code == 0xDA:
            if frame is None:
                raise JpegFormatError("SOS before SOF")
            scan_hdr = _parse_sos(payload, frame)
            end = _scan_end(data, pos)
            scans.append(Scan(*scan_hdr, data=data[pos:end]))
            pos = end
    if not saw_eoi:
        raise JpegTruncatedError("stream ends without EOI marker")
    if frame is None:
        raise JpegFormatError("no SOF segment")
    if not dqt:
        raise JpegFormatError("no DQT segment")
    if not scans:
        raise JpegFormatError("no SOS segment")
    width, height, precision, sof, comps = frame
    for c in comps:
        if c.table not in dqt:
            raise JpegFormatError(f"component {c.id} references undefined table {c.table}")
    return JpegStructure(
        width=width, height=height, precision=precision, sof=sof,
        components=comps, dqt=dqt, dqt_precision=dqt_prec,
        huffman_tables=huff, scans=scans, markers=markers,
        restart_interval=restart, jfif=jfif, adobe_transform=adobe,
    )


def _parse_dqt(p, dqt, prec):
    i = 0
    while i < len(p):
        pq, tq = p[i] >> 4, p[i] & 15
        i += 1
        if pq not in (0, 1) or tq > 3:
            raise JpegFormatError(f"bad DQT table spec 0x{p[i - 1]:02X}")
        size = 64 * (pq + 1)
        if i + size > len(p):
            raise JpegFormatError("DQT segment too short")
        if pq == 0:
            zz = np.frombuffer(p[i:i + 64], dtype=np.uint8).astype(np.int64)
        else:
            zz = np.frombuffer(p[i:i + 128], dtype=">u2").astype(np.int64)
        i += size
        nat = np.empty(64, dtype=np.int64)
        nat[T.ZIGZAG] = zz
        dqt[tq] = nat.reshape(8, 8)
        prec[tq] = 16 if pq else 8


def _parse_dht(p, huff):
    i = 0
    while i < len(p):
        if i + 17 > len(p):
            raise JpegFormatError("DHT segment too short")
        tc, th = p[i] >> 4, p[i] & 15
        if tc > 1 or th > 3:
            raise JpegFormatError(f"bad DHT table spec 0x{p[i]:02X}")
        bits = list(p[i + 1:i + 17])
        total = sum(bits)
        if i + 17 + total > len(p):
            raise JpegFormatError("DHT segment too short")
        vals = list(p[i + 17:i + 17 + total])
        huff[(tc, th)] = (bits, vals)
        i += 17 + total


def _parse_sof(p, name):
    if len(p) < 6:
        raise JpegFormatError("SOF segment too short")
    precision, height, width, nc = struct.unpack(">BHHB", p[:6])
    if precision != 8:
        raise JpegUnsupportedError(f"{precision}-bit sample precision is not supported")
    if len(p) < 6 + 3 * nc:
        raise JpegFormatError("SOF segment too short")
    if nc not in (1, 3):
        raise JpegUnsupportedError(f"{nc}-component images are not supported")
    if width == 0 or height == 0:
        raise JpegUnsupportedError("DNL-defined image height is not supported")
    comps = []
    for k in range(nc):
        cid, hv, tq = p[6 + 3 * k:9 + 3 * k]
        h, v = hv >> 4, hv & 15
        if not (1 <= h <= 4 and 1 <= v <= 4):
            raise JpegFormatError(f"bad sampling factors for component {cid}")
        comps.append(FrameComponent(cid, h, v, tq))
    return width, height, precision, name, comps


def _parse_sos(p, frame):
    comps = frame[4]
    ns = p[0] if p else 0
    if ns < 1 or len(p) < 1 + 2 * ns + 3:
        raise JpegFormatError("SOS segment too short")
    idx, dc, ac = [], [], []
    ids = [c.id for c in comps]
    for k in range(ns):
        cid, tables = p[1 + 2 * k], p[2 + 2 * k]
        if cid not in ids:
            raise JpegFormatError(f"scan references unknown component {cid}")
        idx.append(ids.index(cid))
        dc.append(tables >> 4)
        ac.append(tables & 15)
    ss, se, a = p[1 + 2 * ns:4 + 2 * ns]
    if ss != 0 or se != 63 or a != 0:
        raise JpegUnsupportedError("scan is not a sequential full-spectrum scan")
    return idx, dc, ac


def _scan_end(data, pos):
    """Offset of the first non-RST marker after entropy-coded data at `pos`."""
    n = len(data)
    while True:
        j = data.find(b"\xff", pos)
        if j < 0 or j + 1 >= n:
            return n
        nxt = data[j + 1]
        if nxt == 0x00 or 0xD0 <= nxt <= 0xD7 or nxt == 0xFF:
            pos = j + 1
            continue
        return j


# ---------------------------------------------------------------------------
# entropy decoding

def _split_restart(data: bytes):
    """Split scan bytes on RST markers and remove byte stuffing."""
    pieces = []
    cur = bytearray()
    i = 0
    n = len(data)
    while i < n:
        j = data.find(b"\xff", i)
        if j < 0:
            cur += data[i:]
            break
        cur += data[i:j]
        k = j + 1
        while k < n and data[k] == 0xFF:
            k += 1
        if k >= n:
            break
        nxt = data[k]
        if nxt == 0x00:
            cur.append(0xFF)
        elif 0xD0 <= nxt <= 0xD7:
            pieces.append(bytes(cur))
            cur = bytearray()
        i = k + 1
    pieces.append(bytes(cur))
    return pieces


def _windows(piece: bytes):
    b = np.frombuffer(piece + b"\x00\x00\x00", dtype=np.uint8).astype(np.int64)
    return ((b[:-2] << 16) | (b[1:-1] << 8) | b[2:]).tolist()


def _block_grid(st: JpegStructure):
    hmax = max(c.h for c in st.components)
    vmax = max(c.v for c in st.components)
    mcux = -(-st.width // (8 * hmax))
    mcuy = -(-st.height // (8 * vmax))
    grids = []
    for c in st.components:
        if len(st.components) == 1:
            grids.append((-(-st.height // 8), -(-st.width // 8)))
        else:
            grids.append((mcuy * c.v, mcux * c.h))
    return hmax, vmax, mcux, mcuy, grids


def read_coefficients(blob: bytes):
    """Entropy-decode a stream into quantized DCT coefficients.

    Returns (structure, coefs) where coefs[c] is an int32 array of shape
    (blocks_y, blocks_x, 8, 8) in natural order for frame component c.
    """
    st = parse_jpeg(blob)
    hmax, vmax, mcux, mcuy, grids = _block_grid(st)
    store = [np.zeros((gy * gx, 64), dtype=np.int64) for gy, gx in grids]
    luts = {}

    def lut(cls, dest):
        key = (cls, dest)
        if key not in luts:
            if key not in st.huffman_tables:
                raise JpegFormatError(f"scan uses undefined Huffman table {key}")
            luts[key] = decode_lut(*st.huffman_tables[key])
        return luts[key]

    zig = T.ZIGZAG.tolist()
    for scan in st.scans:
        comps = scan.components
        dcl = [lut(0, t) for t in scan.dc_tables]
        acl = [lut(1, t) for t in scan.ac_tables]
        if len(comps) == 1:
            c = comps[0]
            fc = st.components[c]
            cw = -(-(-(-st.width * fc.h // hmax)) // 8)
            ch = -(-(-(-st.height * fc.v // vmax)) // 8)
            gx = grids[c][1]
            units = [[(0, r * gx + q)] for r in range(ch) for q in range(cw)]
        else:
            units = []
            for my in range(mcuy):
                for mx in range(mcux):
                    u = []
                    for s, c in enumerate(comps):
                        fc = st.components[c]
                        gx = grids[c][1]
                        for v in range(fc.v):
                            for h in range(fc.h):
                                u.append((s, (my * fc.v + v) * gx + mx * fc.h + h))
                    units.append(u)
        interval = st.restart_interval or len(units)
        pieces = _split_restart(scan.data)
        n_intervals = -(-len(units) // interval)
        if len(pieces) < n_intervals:
            raise JpegTruncatedError("scan data ends before all MCUs were decoded")
        blocks_out = [[] for _ in comps]
        for iv in range(n_intervals):
            seg_units = units[iv * interval:(iv + 1) * interval]
            decoded = _decode_interval(pieces[iv], seg_units, len(comps), dcl, acl, zig)
            for s, blk_index, vals in decoded:
                blocks_out[s].append((blk_index, vals))
        for s, c in enumerate(comps):
            arr = store[c]
            for blk_index, vals in blocks_out[s]:
                arr[blk_index] = vals
    coefs = []
    for (gy, gx), arr in zip(grids, store):
        coefs.append(arr.reshape(gy, gx, 8, 8).astype(np.int32))
    return st, coefs


def _decode_interval(piece, units, n_comp, dcl, acl, zig):
    win = _windows(piece)
    nbits = 8 * len(piece)
    pos = 0
    pred = [0] * n_comp
    out = []
    for unit in units:
        for s, blk_index in unit:
            blk = [0] * 64
            dct = dcl[s]
            act = acl[s]
            e = dct[(win[pos >> 3] >> (8 - (pos & 7))) & 0xFFFF]
            ln = e & 31
            if ln == 0:
                _bad_code(pos, nbits)
            pos += ln
            size = e >> 5
            if size:
                if size > 11:
                    raise JpegCorruptError("DC magnitude category out of range")
                bits = ((win[pos >> 3] >> (8 - (pos & 7))) & 0xFFFF) >> (16 - size)
                pos += size
                if bits < (1 << (size - 1)):
                    bits -= (1 << size) - 1
                pred[s] += bits
            blk[0] = pred[s]
            k = 1
            while k < 64:
                e = act[(win[pos >> 3] >> (8 - (pos & 7))) & 0xFFFF]
                ln = e & 31
                if ln == 0:
                    _bad_code(pos, nbits)
                pos += ln
                rs = e >> 5
                size = rs & 15
                run = rs >> 4
                if size == 0:
                    if run == 15:
                        k += 16
                        continue
                    break
                k += run
                if k > 63:
                    raise JpegCorruptError("AC coefficient index beyond 63")
                bits = ((win[pos >> 3] >> (8 - (pos & 7))) & 0xFFFF) >> (16 - size)
                pos += size
                if bits < (1 << (size - 1)):
                    bits -= (1 << size) - 1
                blk[zig[k]] = bits
                k += 1
            if k > 64:
                raise JpegCorruptError("zero run overflows the block")
            if pos > nbits:
                raise JpegTruncatedError("scan data ends inside a block")
            out.append((s, blk_index, blk))
    return out


def _bad_code(pos, nbits):
    if pos >= nbits:
        raise JpegTruncatedError("scan data ends before all MCUs were decoded")
    raise JpegCorruptError(f"invalid Huffman code at bit {pos}")


# ---------------------------------------------------------------------------
# reconstruction

def _component_planes(st, coefs, idct):
    hmax = max(c.h for c in st.components)
    vmax = max(c.v for c in st.components)
    planes = []
    for fc, coef in zip(st.components, coefs):
        q = st.dqt[fc.table]
        blocks = idct(coef.astype(np.int64) * q)
        gy, gx = coef.shape[:2]
        plane = blocks.transpose(0, 2, 1, 3).reshape(gy * 8, gx * 8)
        fy, fx = vmax // fc.v, hmax // fc.h
        if fy > 1 or fx > 1:
            plane = np.repeat(np.repeat(plane, fy, axis=0), fx, axis=1)
        planes.append(plane[:st.height, :st.width])
    return planes


def decode_jpeg(blob: bytes):
    """Decode a baseline stream to 8-bit pixels.

    Returns (image, structure); image is (H, W) for one component or
    (H, W, 3) RGB for three. Subsampled chroma is upsampled by replication.
    """
    st, coefs = read_coefficients(blob)
    planes = _component_planes(st, coefs, idct_islow)
    if len(planes) == 1:
        return planes[0].astype(np.uint8), st
    if st.adobe_transform == 0:
        img = np.stack(planes, axis=-1).astype(np.uint8)
    else:
        img = ycbcr_to_rgb(*planes)
    return img, st


def decode_unrounded(blob: bytes) -> np.ndarray:
    """Decode a grey stream to real-valued samples without rounding or clamping.

    The values are those of the decoder's IDCT before its final rounding
    step, so rounding half up and clamping to [0, 255] gives exactly the
    pixels of `decode_jpeg`.
    """
    st, coefs = read_coefficients(blob)
    if len(st.components) != 1:
        raise JpegUnsupportedError("unrounded decoding is defined for grey streams only")

    def idct_real(d):
        return idct_islow_prescale(d) / float(1 << _FINAL_SHIFT) + 128.0

    return _component_planes(st, coefs, idct_real)[0]
