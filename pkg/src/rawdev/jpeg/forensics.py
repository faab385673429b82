"""Quantization-table forensics and re-compression toward a target quality."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tables as T
from .codec import decode_jpeg, encode_jpeg, parse_jpeg


@dataclass(frozen=True)
class QfEstimate:
    q_estimated: int
    is_standard: bool
    distance: float


def extract_quant_tables(blob: bytes) -> list[np.ndarray]:
    """Quantization tables of each frame component, natural order."""
    return [t.copy() for t in parse_jpeg(blob).quant_tables]


def table_distance(q, s) -> float:
    """Mean relative absolute deviation of table `q` from reference `s`."""
    q = np.asarray(q, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    return float(np.mean(np.abs(q - s) / s))


def estimate_qf(q, chroma: bool = False) -> QfEstimate:
    """Nearest standard quality factor of a table; ties go to the larger Q."""
    q = T.check_quant_matrix(q)
    best_q, best_d = None, np.inf
    for quality in range(100, 0, -1):
        d = table_distance(q, T.std_quant_matrix(quality, chroma))
        if d < best_d:
            best_q, best_d = quality, d
    return QfEstimate(best_q, best_d == 0.0, best_d)


def nonstandard_target(q, target_quality: int, chroma: bool = False) -> np.ndarray:
    """Map a (possibly non-standard) table to the analogous table at `target_quality`.

    The table is first carried to quality 50 by the elementwise ratio
    std(50) / std(Q_est), then scaled with the usual quality rule. All
    arithmetic is exact rational with round-half-up, so a standard input
    lands exactly on std(target_quality).
    """
    q = T.check_quant_matrix(q)
    T.check_quality(target_quality)
    est = estimate_qf(q, chroma).q_estimated
    s50 = T.std_quant_matrix(50, chroma)
    s_est = T.std_quant_matrix(est, chroma)
    t = int(target_quality)
    if t > 50:
        num = q * s50 * 2 * (100 - t)
        den = s_est * 100
    else:
        num = q * s50 * 50
        den = s_est * t
    out = (2 * num + den) // (2 * den)
    return np.clip(out, 1, 255).astype(np.int64)


def recompress(blob: bytes, target_quality: int = 75, preserve_nonstandard: bool = False) -> bytes:
    """Decode and re-encode a stream at `target_quality`.

    With `preserve_nonstandard` the source tables are mapped through
    `nonstandard_target` instead of being replaced by the standard ones.
    Colour output is always 4:4:4.
    """
    T.check_quality(target_quality)
    img, st = decode_jpeg(blob)
    if not preserve_nonstandard:
        return encode_jpeg(img, quality=target_quality)
    mapped = [
        nonstandard_target(t, target_quality, chroma=i > 0)
        for i, t in enumerate(st.quant_tables)
    ]
    if len(mapped) == 3 and np.array_equal(mapped[1], mapped[2]):
        mapped = mapped[:2]
    return encode_jpeg(img, tables=mapped)
