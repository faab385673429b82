import io
import struct
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image
from scipy.fft import idctn

from rawdev.jpeg import (
    JpegCorruptError,
    JpegFormatError,
    JpegTruncatedError,
    JpegUnsupportedError,
    decode_jpeg,
    decode_unrounded,
    encode_jpeg,
    encode_tiles,
    estimate_qf,
    extract_quant_tables,
    nonstandard_target,
    parse_jpeg,
    read_coefficients,
    recompress,
    std_quant_matrix,
)
from rawdev.jpeg.tables import ZIGZAG

# Annex K example tables, typed in independently of the package
K_LUMA = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56, 14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99,
]
K_CHROMA = [17, 18, 24, 47] + [99] * 4 + [18, 21, 26, 66] + [99] * 4 + \
    [24, 26, 56] + [99] * 5 + [47, 66] + [99] * 6 + [99] * 32


def oracle_table(quality, chroma=False):
    out = []
    for b in (K_CHROMA if chroma else K_LUMA):
        if quality > 50:
            v = Fraction(2) * (1 - Fraction(quality, 100)) * b
        else:
            v = Fraction(50, quality) * b
        r = int(v + Fraction(1, 2))     # positive values: floor(v + 1/2)
        out.append(max(1, r) if quality > 50 else min(255, r))
    return np.array(out).reshape(8, 8)


def oracle_distance(q, s):
    return sum(Fraction(abs(int(a) - int(b)), int(b)) for a, b in zip(q.ravel(), s.ravel())) / 64


def oracle_qf(q, chroma=False):
    best = None
    for quality in range(1, 101):
        d = oracle_distance(q, oracle_table(quality, chroma))
        if best is None or d <= best[1]:
            best = (quality, d)
    return best


def pil_decode(blob):
    return np.asarray(Image.open(io.BytesIO(blob)))


def pil_encode(img, **kw):
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="JPEG", **kw)
    return buf.getvalue()


def psnr(a, b):
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    return 10 * np.log10(255.0 ** 2 / mse)


def with_dqt16(blob):
    """Replace the DQT segments of a stream by one holding 16-bit tables."""
    st = parse_jpeg(blob)
    segs = [m for m in st.markers if m.name == "DQT"]
    payload = b"".join(bytes([0x10 | dest]) + t.ravel()[ZIGZAG].astype(">u2").tobytes()
                       for dest, t in sorted(st.dqt.items()))
    seg = b"\xff\xdb" + struct.pack(">H", len(payload) + 2) + payload
    out = bytes(blob[:segs[0].offset]) + seg
    for m, nxt in zip(segs, segs[1:] + [None]):
        end = m.offset + 2 + m.length
        out += bytes(blob[end:nxt.offset if nxt else None])
    return out


# ---------------------------------------------------------------- tables

@pytest.mark.parametrize("quality", range(1, 101))
def test_std_tables_match_oracle(quality):
    assert np.array_equal(std_quant_matrix(quality), oracle_table(quality))
    assert np.array_equal(std_quant_matrix(quality, chroma=True), oracle_table(quality, True))


def test_table_examples():
    assert std_quant_matrix(75)[0, 0] == 8
    assert std_quant_matrix(25)[0, 0] == 32
    assert np.array_equal(std_quant_matrix(50), np.array(K_LUMA).reshape(8, 8))
    assert np.all(std_quant_matrix(100) == 1)
    assert np.all(std_quant_matrix(100, chroma=True) == 1)


def test_tables_monotone_and_in_range():
    for chroma in (False, True):
        stack = np.stack([std_quant_matrix(q, chroma) for q in range(1, 101)])
        assert stack.min() >= 1 and stack.max() <= 255
        assert np.all(np.diff(stack, axis=0) <= 0)


@pytest.mark.parametrize("bad", [0, 101, -5, 75.5, True])
def test_bad_quality(bad):
    with pytest.raises(ValueError):
        std_quant_matrix(bad)


# ---------------------------------------------------------------- encode / decode

def test_constant_128_roundtrip():
    img = np.full((64, 64), 128, dtype=np.uint8)
    blob = encode_jpeg(img, 75)
    out, st = decode_jpeg(blob)
    assert np.all(out == 128)
    assert np.all(decode_unrounded(blob) == 128.0)
    assert np.all(read_coefficients(blob)[1][0] == 0)


def test_tile_tables_and_psnr(grey_tile):
    blob = encode_jpeg(grey_tile, 75)
    assert np.array_equal(extract_quant_tables(blob)[0], std_quant_matrix(75))
    out, st = decode_jpeg(blob)
    assert out.shape == (256, 256) and len(st.components) == 1
    assert st.jfif and st.sof == "SOF0"
    assert psnr(out, grey_tile) > 30


def test_colour_structure(colour_tile):
    blob = encode_jpeg(colour_tile, 75)
    out, st = decode_jpeg(blob)
    assert out.shape == (256, 256, 3)
    assert st.subsampling == [(1, 1)] * 3
    tabs = extract_quant_tables(blob)
    assert np.array_equal(tabs[0], std_quant_matrix(75))
    assert np.array_equal(tabs[1], std_quant_matrix(75, chroma=True))
    assert np.array_equal(tabs[2], tabs[1])
    assert psnr(out, colour_tile) > 30


def test_pillow_decodes_identically(grey_tile, colour_tile):
    for img in (grey_tile, colour_tile):
        for q in (30, 75, 95):
            blob = encode_jpeg(img, q)
            assert np.array_equal(pil_decode(blob), decode_jpeg(blob)[0])


def test_decode_foreign_streams(grey_tile, colour_tile):
    # Pillow-written baseline streams, 4:4:4 so no upsampling is involved
    blob = pil_encode(grey_tile, quality=80)
    assert np.array_equal(decode_jpeg(blob)[0], pil_decode(blob))
    blob = pil_encode(colour_tile, quality=80, subsampling=0)
    assert np.array_equal(decode_jpeg(blob)[0], pil_decode(blob))


def test_decode_subsampled_foreign_stream(colour_tile):
    blob = pil_encode(colour_tile, quality=90, subsampling=2)
    out, st = decode_jpeg(blob)
    assert st.subsampling[0] == (2, 2)
    # replication instead of libjpeg's smoothing upsampler: close, not exact
    assert psnr(out, pil_decode(blob)) > 30


def test_restart_markers(colour_tile):
    blob = pil_encode(colour_tile, quality=85, subsampling=0, restart_marker_blocks=3)
    st = parse_jpeg(blob)
    assert st.restart_interval > 0
    assert np.array_equal(decode_jpeg(blob)[0], pil_decode(blob))


def test_two_dqt_segments(colour_tile):
    blob = pil_encode(colour_tile, quality=75, subsampling=0)
    st = parse_jpeg(blob)
    assert sum(m.name == "DQT" for m in st.markers) >= 1
    tabs = extract_quant_tables(blob)
    assert len(st.dqt) == 2
    assert not np.array_equal(tabs[0], tabs[1])
    assert np.array_equal(tabs[0], std_quant_matrix(75))
    assert np.array_equal(tabs[1], std_quant_matrix(75, chroma=True))
    assert [c.table for c in st.components] == [0, 1, 1]


def test_sixteen_bit_dqt(grey_tile):
    blob = encode_jpeg(grey_tile, 75)
    wide = with_dqt16(blob)
    st = parse_jpeg(wide)
    assert st.dqt_precision[0] == 16
    assert np.array_equal(extract_quant_tables(wide)[0], std_quant_matrix(75))
    assert np.array_equal(decode_jpeg(wide)[0], decode_jpeg(blob)[0])
    assert np.array_equal(pil_decode(wide), decode_jpeg(wide)[0])


def test_missing_eoi(grey_tile):
    blob = encode_jpeg(grey_tile, 75)
    with pytest.raises(JpegTruncatedError):
        decode_jpeg(blob[:-2])
    with pytest.raises(JpegTruncatedError):
        decode_jpeg(blob[:200])


def test_progressive_rejected(grey_tile):
    with pytest.raises(JpegUnsupportedError):
        decode_jpeg(pil_encode(grey_tile, quality=75, progressive=True))


def test_corrupt_huffman():
    blob = encode_jpeg(np.zeros((16, 16), dtype=np.uint8), 75)
    st = parse_jpeg(blob)
    sos = [m for m in st.markers if m.name == "SOS"][0]
    start = sos.offset + 2 + sos.length
    bad = blob[:start] + b"\xff\x00" * 8 + b"\xff\xd9"
    with pytest.raises(JpegCorruptError):
        decode_jpeg(bad)


@pytest.mark.parametrize("data", [b"", b"GIF89a", b"\xff\xd8\xff\xd9"])
def test_not_jpeg(data):
    with pytest.raises(JpegFormatError):
        decode_jpeg(data)


@pytest.mark.parametrize("shape", [(10, 16), (16, 12), (0, 8), (8, 8, 4)])
def test_bad_dimensions(shape):
    with pytest.raises(ValueError):
        encode_jpeg(np.zeros(shape, dtype=np.uint8))


def test_bad_explicit_table():
    t = std_quant_matrix(75).copy()
    t[0, 0] = 0
    with pytest.raises(ValueError):
        encode_jpeg(np.zeros((8, 8), dtype=np.uint8), tables=[t])
    with pytest.raises(ValueError):
        encode_jpeg(np.zeros((8, 8), dtype=np.uint8), tables=[np.ones((4, 4), int)])


@given(table=arrays(np.int64, (8, 8), elements=st.integers(1, 255)),
       img=arrays(np.uint8, (16, 24)))
def test_writer_parser_consistency(table, img):
    blob = encode_jpeg(img, tables=[table])
    assert np.array_equal(extract_quant_tables(blob)[0], table)
    assert np.array_equal(pil_decode(blob), decode_jpeg(blob)[0])


@given(img=arrays(np.uint8, (16, 16, 3)), q=st.integers(1, 100))
def test_colour_interop_property(img, q):
    blob = encode_jpeg(img, q)
    assert np.array_equal(pil_decode(blob), decode_jpeg(blob)[0])


def test_encode_tiles_matches_per_tile(developed):
    img = developed.grey.tiles[0]
    parts = encode_tiles(img, grid=2)
    for k, blob in enumerate(parts):
        r, c = divmod(k, 2)
        assert blob == encode_jpeg(img[r * 128:(r + 1) * 128, c * 128:(c + 1) * 128])


# ---------------------------------------------------------------- unrounded

def test_unrounded_consistency(grey_tile, developed):
    for img in (grey_tile, developed.grey.tiles[0], developed.grey.tiles[15]):
        for q in (10, 75, 100):
            blob = encode_jpeg(img, q)
            real = decode_unrounded(blob)
            pix = decode_jpeg(blob)[0]
            assert np.array_equal(np.clip(np.floor(real + 0.5), 0, 255), pix)


def test_unrounded_statistics(grey_tile):
    blob = encode_jpeg(grey_tile, 75)
    real = decode_unrounded(blob)
    assert real.dtype == np.float64
    assert np.abs(real - decode_jpeg(blob)[0]).mean() <= 0.5
    # float IDCT oracle: the fixed-point transform is accurate to a fraction of a level
    st, coefs = read_coefficients(blob)
    deq = coefs[0].astype(np.float64) * std_quant_matrix(75)
    ref = idctn(deq, axes=(2, 3), norm="ortho").transpose(0, 2, 1, 3).reshape(256, 256) + 128
    assert np.abs(real - ref).max() < 0.5
    assert np.abs(real - ref).mean() < 0.05


def test_unrounded_rejects_colour(colour_tile):
    with pytest.raises(JpegUnsupportedError):
        decode_unrounded(encode_jpeg(colour_tile, 75))


# ---------------------------------------------------------------- forensics

@pytest.mark.parametrize("chroma", [False, True])
def test_estimate_all_standard(chroma):
    for quality in range(1, 101):
        q = std_quant_matrix(quality, chroma)
        est = estimate_qf(q, chroma)
        assert est.is_standard and est.distance == 0
        assert np.array_equal(std_quant_matrix(est.q_estimated, chroma), q)
        assert est.q_estimated >= quality      # ties go to the larger Q


def test_estimate_examples():
    est = estimate_qf(std_quant_matrix(75))
    assert (est.q_estimated, est.is_standard, est.distance) == (75, True, 0.0)
    q = std_quant_matrix(75).copy()
    q[7, 7] += 1
    est = estimate_qf(q)
    assert est.q_estimated == 75 and not est.is_standard and est.distance > 0
    assert estimate_qf(np.ones((8, 8), int)).q_estimated == 100


@pytest.mark.parametrize("quality", [50, 75, 95])
def test_single_entry_perturbations(quality):
    base = std_quant_matrix(quality)
    for i in range(64):
        for delta in (-1, 1):
            q = base.copy().ravel()
            if not 1 <= q[i] + delta <= 255:
                continue
            q[i] += delta
            q = q.reshape(8, 8)
            est = estimate_qf(q)
            assert not est.is_standard
            assert est.q_estimated == quality


def test_estimate_against_oracle(rng):
    for _ in range(15):
        q = np.clip(std_quant_matrix(int(rng.integers(1, 101))) + rng.integers(-3, 4, (8, 8)), 1, 255)
        want_q, want_d = oracle_qf(q)
        est = estimate_qf(q)
        assert est.q_estimated == want_q
        assert abs(est.distance - float(want_d)) < 1e-12


def oracle_target(q, target, chroma=False):
    est = oracle_qf(q, chroma)[0]
    s50, se = oracle_table(50, chroma), oracle_table(target, chroma)
    s_est = oracle_table(est, chroma)
    out = np.empty((8, 8), dtype=np.int64)
    for i in range(8):
        for j in range(8):
            q50 = Fraction(int(q[i, j]) * int(s50[i, j]), int(s_est[i, j]))
            scale = 2 * (1 - Fraction(target, 100)) if target > 50 else Fraction(50, target)
            out[i, j] = min(255, max(1, int(q50 * scale + Fraction(1, 2))))
    return out


def test_nonstandard_target_examples():
    assert np.array_equal(nonstandard_target(std_quant_matrix(90), 75), std_quant_matrix(75))
    q = std_quant_matrix(60)
    assert np.array_equal(nonstandard_target(q, 60), q)
    # twice the base table is exactly the Q=25 table, so it is standard and
    # the composition lands on the Q=50 table rather than returning q
    q = np.clip(2 * std_quant_matrix(50), 1, 255)
    assert np.array_equal(q, std_quant_matrix(25))
    assert np.array_equal(nonstandard_target(q, 50), std_quant_matrix(50))


@given(q=arrays(np.int64, (8, 8), elements=st.integers(1, 255)), target=st.integers(1, 100),
       chroma=st.booleans())
def test_nonstandard_target_oracle(q, target, chroma):
    out = nonstandard_target(q, target, chroma)
    assert out.min() >= 1 and out.max() <= 255
    assert np.array_equal(out, oracle_target(q, target, chroma))


@given(src=st.integers(1, 100), target=st.integers(1, 100))
def test_standard_inputs_map_to_standard(src, target):
    # a standard input is carried to std(50) exactly, then scaled
    assert np.array_equal(nonstandard_target(std_quant_matrix(src), target), oracle_table(target))


def test_recompress_examples(grey_tile, colour_tile):
    blob = encode_jpeg(grey_tile, 95)
    out = recompress(blob, 75)
    assert np.array_equal(extract_quant_tables(out)[0], std_quant_matrix(75))
    again = recompress(out, 75)
    assert np.array_equal(extract_quant_tables(again)[0], std_quant_matrix(75))
    a, b = decode_jpeg(out)[0].astype(int), decode_jpeg(again)[0].astype(int)
    assert np.mean(np.abs(a - b) <= 1) >= 0.99

    const = encode_jpeg(np.full((32, 32), 77, np.uint8), 95)
    c1 = recompress(const, 75)
    assert recompress(c1, 75) == c1

    cblob = encode_jpeg(colour_tile, 90)
    out = recompress(cblob, 75)
    tabs = extract_quant_tables(out)
    assert np.array_equal(tabs[1], std_quant_matrix(75, chroma=True))


def test_recompress_preserve_nonstandard(grey_tile, colour_tile):
    q = std_quant_matrix(85).copy()
    q[2, 3] += 4
    blob = encode_jpeg(grey_tile, tables=[q])
    out = recompress(blob, 75, preserve_nonstandard=True)
    assert np.array_equal(extract_quant_tables(out)[0], nonstandard_target(q, 75))
    assert not np.array_equal(extract_quant_tables(out)[0], std_quant_matrix(75))

    qc = std_quant_matrix(85, chroma=True).copy()
    qc[0, 0] += 2
    blob = encode_jpeg(colour_tile, tables=[q, qc])
    tabs = extract_quant_tables(recompress(blob, 75, preserve_nonstandard=True))
    assert np.array_equal(tabs[0], nonstandard_target(q, 75))
    assert np.array_equal(tabs[1], nonstandard_target(qc, 75, chroma=True))
