"""Portable Bayer mosaic storage and RGB <-> CFA helpers.

A mosaic is stored as a binary 16-bit PGM (``P5``, maxval 65535, big-endian)
next to a sidecar ``<name>.cfa`` text file holding ``pattern=`` and
``white_level=`` lines. RGB images travel as numpy arrays: (H, W, 3) uint16
for linear data, (H, W, 3) / (H, W) uint8 for developed output.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class RawIOError(ValueError):
    pass


class CfaFormatError(RawIOError):
    """File is not a readable binary PGM."""


class CfaInvariantError(RawIOError):
    """Mosaic violates a structural invariant (odd size, sample > white level)."""


class CfaMetadataError(RawIOError):
    """Sidecar file missing or incomplete."""


class BayerPattern(str, enum.Enum):
    RGGB = "RGGB"
    BGGR = "BGGR"
    GRBG = "GRBG"
    GBRG = "GBRG"

    def channels(self) -> np.ndarray:
        """2x2 array of channel indices (0=R, 1=G, 2=B) for one Bayer cell."""
        lut = {"R": 0, "G": 1, "B": 2}
        return np.array([lut[c] for c in self.value]).reshape(2, 2)


def channel_map(pattern, height: int, width: int) -> np.ndarray:
    """Channel index of every site of a height x width mosaic."""
    cell = BayerPattern(pattern).channels()
    return np.tile(cell, (height // 2, width // 2))


@dataclass(frozen=True, eq=False)
class CfaImage:
    samples: np.ndarray
    pattern: BayerPattern
    white_level: int = 65535

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise CfaInvariantError(f"mosaic must be 2-D, got shape {s.shape}")
        h, w = s.shape
        if h < 2 or w < 2 or h % 2 or w % 2:
            raise CfaInvariantError(f"mosaic dimensions must be even and >= 2, got {w}x{h}")
        if not 0 < int(self.white_level) <= 65535:
            raise CfaInvariantError(f"white level {self.white_level} outside (0, 65535]")
        if s.dtype != np.uint16:
            if s.size and (s.min() < 0 or s.max() > 65535 or not np.all(s == np.round(s))):
                raise CfaInvariantError("samples must be integers in [0, 65535]")
            s = s.astype(np.uint16)
        if s.size and int(s.max()) > int(self.white_level):
            raise CfaInvariantError(
                f"sample {int(s.max())} exceeds white level {self.white_level}")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "pattern", BayerPattern(self.pattern))
        object.__setattr__(self, "white_level", int(self.white_level))

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    def channel_map(self) -> np.ndarray:
        return channel_map(self.pattern, self.height, self.width)

    def __eq__(self, other):
        if not isinstance(other, CfaImage):
            return NotImplemented
        return (self.pattern == other.pattern and self.white_level == other.white_level
                and np.array_equal(self.samples, other.samples))

    __hash__ = None


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".cfa")


def _read_pnm_header(data: bytes, magic: bytes):
    if not data.startswith(magic):
        raise CfaFormatError(f"expected {magic.decode()} magic")
    # header: magic, width, height, maxval separated by whitespace/comments
    fields = []
    i = 2
    n = len(data)
    while len(fields) < 3:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        m = re.match(rb"\d+", data[i:i + 12])
        if not m:
            raise CfaFormatError("malformed header")
        fields.append(int(m.group()))
        i += m.end()
    if i >= n or not data[i:i + 1].isspace():
        raise CfaFormatError("malformed header")
    return fields, i + 1


def read_pnm(path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6), 8- or 16-bit."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise CfaFormatError(f"{path}: not a binary PGM/PPM file")
    (w, h, maxval), off = _read_pnm_header(data, magic)
    if not 0 < maxval <= 65535 or w == 0 or h == 0:
        raise CfaFormatError(f"{path}: invalid header values")
    ch = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    count = w * h * ch
    if len(data) - off < count * dtype.itemsize:
        raise CfaFormatError(f"{path}: pixel data truncated")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
    arr = arr.astype(np.uint16 if maxval > 255 else np.uint8)
    return arr.reshape(h, w) if ch == 1 else arr.reshape(h, w, 3)


def write_pnm(img, path, maxval: int | None = None) -> None:
    """Write (H, W) as P5 or (H, W, 3) as P6; 16-bit when maxval > 255."""
    img = np.asarray(img)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot write image of shape {img.shape} as PNM")
    if maxval is None:
        maxval = 255 if img.dtype == np.uint8 else 65535
    h, w = img.shape[:2]
    dtype = ">u2" if maxval > 255 else np.uint8
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    Path(path).write_bytes(header + np.ascontiguousarray(img).astype(dtype).tobytes())


def read_cfa(path) -> CfaImage:
    path = Path(path)
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise CfaMetadataError(f"{path}: missing sidecar {meta_path.name}")
    meta = {}
    for line in meta_path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CfaMetadataError(f"{meta_path}: malformed line {line!r}")
        meta[key.strip()] = value.strip()
    for key in ("pattern", "white_level"):
        if key not in meta:
            raise CfaMetadataError(f"{meta_path}: missing key {key!r}")
    try:
        pattern = BayerPattern(meta["pattern"].upper())
        white = int(meta["white_level"])
    except ValueError as exc:
        raise CfaMetadataError(f"{meta_path}: {exc}") from None

    samples = read_pnm(path)
    if samples.ndim != 2:
        raise CfaFormatError(f"{path}: mosaic must be a single-channel PGM")
    return CfaImage(samples.astype(np.uint16), pattern, white)


def write_cfa(img: CfaImage, path) -> None:
    path = Path(path)
    write_pnm(img.samples.astype(np.uint16), path, maxval=65535)
    sidecar_path(path).write_text(
        f"pattern={img.pattern.value}\nwhite_level={img.white_level}\n")


def simulate_cfa(rgb, pattern=BayerPattern.RGGB) -> CfaImage:
    """Sample an (H, W, 3) 16-bit image through a Bayer filter."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {rgb.shape}")
    h, w = rgb.shape[:2]
    if h % 2 or w % 2:
        raise CfaInvariantError(f"dimensions must be even, got {w}x{h}")
    cmap = channel_map(pattern, h, w)
    mosaic = np.take_along_axis(rgb, cmap[..., None], axis=2)[..., 0]
    return CfaImage(mosaic.astype(np.uint16), BayerPattern(pattern), 65535)
