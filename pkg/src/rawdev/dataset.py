"""Source catalogs, train/test planning, toy cover/stego pairing and exports.

Sizes are counted in source images; each source image later yields 16
tiles, and a stego tile doubles the storage of its cover.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .jpeg import JpegUnsupportedError, decode_unrounded, encode_coefficients, read_coefficients
from .paramsample import keyed_rng


class CatalogError(ValueError):
    pass


class Source(str, enum.Enum):
    ALASKA2 = "ALASKA2"
    BOSS = "BOSS"
    STEGOAPP = "StegoAppDB"
    WESATURATE = "Wesaturate"
    RAISE = "RAISE"
    DRESDEN = "Dresden"

    @classmethod
    def parse(cls, name) -> Source:
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        for s in cls:
            if key in (s.value.lower(), s.name.lower()):
                return s
        raise CatalogError(f"unknown source {name!r}")


# image counts of the full RAW collection, per source
SOURCE_COUNTS = {
    Source.ALASKA2: 80_005,
    Source.BOSS: 10_000,
    Source.STEGOAPP: 24_120,
    Source.WESATURATE: 3_648,
    Source.RAISE: 8_156,
    Source.DRESDEN: 1_491,
}

TILE_SIDE = 256
MAT_TILE_BYTES = TILE_SIDE * TILE_SIDE * 8


@dataclass(frozen=True)
class CatalogEntry:
    image_id: str
    source: Source
    cfa_path: str = ""


@dataclass(frozen=True)
class SourceCatalog:
    entries: tuple

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=lambda e: e.image_id))
        ids = [e.image_id for e in entries]
        dup = [k for k, n in Counter(ids).items() if n > 1]
        if dup:
            raise CatalogError(f"duplicate image ids: {', '.join(sorted(dup)[:5])}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_by_id", {e.image_id: e for e in entries})

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, image_id):
        return image_id in self._by_id

    def __getitem__(self, image_id) -> CatalogEntry:
        return self._by_id[image_id]

    @property
    def ids(self) -> list[str]:
        return [e.image_id for e in self.entries]

    @property
    def counts(self) -> dict:
        c = Counter(e.source for e in self.entries)
        return {s: c.get(s, 0) for s in Source}

    def by_source(self) -> dict:
        out = {s: [] for s in Source}
        for e in self.entries:
            out[e.source].append(e.image_id)
        return out

    def subset(self, ids) -> SourceCatalog:
        ids = set(ids)
        return SourceCatalog(tuple(e for e in self.entries if e.image_id in ids))

    @classmethod
    def synthetic(cls, counts: dict) -> SourceCatalog:
        """Catalog with the given per-source counts and generated ids."""
        entries = []
        for src, n in counts.items():
            src = Source.parse(src)
            entries += [CatalogEntry(f"{src.value}-{i:06d}", src) for i in range(int(n))]
        return cls(tuple(entries))

    def to_json(self) -> str:
        rows = [{"image_id": e.image_id, "source": e.source.value, "cfa_path": e.cfa_path}
                for e in self.entries]
        return json.dumps(rows, indent=0)


def build_catalog(root, source_map: dict | None = None) -> SourceCatalog:
    """Enumerate `<root>/<source dir>/**/*.pgm` mosaics.

    `source_map` maps directory names to sources; by default a directory
    is matched against the source names. Image ids are file stems, so the
    same stem in two places is a catalog error.
    """
    root = Path(root)
    if not root.is_dir():
        raise CatalogError(f"{root}: not a directory")
    entries = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if source_map is not None:
            if sub.name not in source_map:
                continue
            src = Source.parse(source_map[sub.name])
        else:
            try:
                src = Source.parse(sub.name)
            except CatalogError:
                continue
        for f in sorted(sub.rglob("*.pgm")):
            entries.append(CatalogEntry(f.stem, src, str(f.relative_to(root))))
    return SourceCatalog(tuple(entries))


# ---------------------------------------------------------------------------
# apportionment and splits

def largest_remainder(weights: dict, total: int, caps: dict | None = None) -> dict:
    """Split `total` seats proportionally to `weights` (Hamilton's method).

    Remainder ties go to the earlier key. `caps` bounds each key's seats;
    this only matters when a tiny source cannot fill its quota.
    """
    keys = list(weights)
    if total < 0:
        raise ValueError("total must be non-negative")
    wi = [int(weights[k]) for k in keys]
    s = sum(wi)
    if total == 0 or s == 0:
        return {k: 0 for k in keys}
    seats = [total * x // s for x in wi]
    rem = [total * x % s for x in wi]
    left = total - sum(seats)
    order = sorted(range(len(keys)), key=lambda i: (-rem[i], i))
    for i in order[:left]:
        seats[i] += 1
    out = dict(zip(keys, seats))
    if caps:
        out = _respect_caps(out, weights, caps)
    return out


def _respect_caps(seats, weights, caps):
    over = sum(max(0, seats[k] - caps[k]) for k in seats)
    if not over:
        return seats
    seats = {k: min(seats[k], caps[k]) for k in seats}
    while over:
        room = [k for k in seats if seats[k] < caps[k] and weights[k] > 0]
        if not room:
            raise ValueError("not enough items to fill the requested size")
        k = max(room, key=lambda k: weights[k] - seats[k])
        seats[k] += 1
        over -= 1
    return seats


def _shuffled(ids, seed, *tag) -> list:
    ids = sorted(ids)
    perm = keyed_rng(b"rawdev-split", seed, *tag).permutation(len(ids))
    return [ids[i] for i in perm]


def partition_test(catalog: SourceCatalog, n_test: int, excluded=(), seed: int = 0):
    """Isolate `n_test` images from the non-excluded sources.

    Per-source counts follow the non-excluded shares by largest remainder.
    Images of excluded sources all stay in the training pool.
    Returns (train_pool, test_set) as catalogs.
    """
    excluded = {Source.parse(s) for s in excluded}
    groups = catalog.by_source()
    eligible = {s: len(v) for s, v in groups.items() if s not in excluded and v}
    available = sum(eligible.values())
    if n_test < 0 or n_test > available:
        raise ValueError(f"n_test={n_test} exceeds the {available} images of non-excluded sources")
    quota = largest_remainder(eligible, n_test, caps=eligible)
    test = []
    for src, k in quota.items():
        test += _shuffled(groups[src], seed, "test", src.value)[:k]
    test = set(test)
    pool = catalog.subset(i for i in catalog.ids if i not in test)
    return pool, catalog.subset(test)


def size_label(n: int) -> str:
    for div, suffix in ((1_000_000, "M"), (1_000, "k")):
        if n >= div and n % div == 0:
            return f"{n // div}{suffix}"
    return str(n)


@dataclass(frozen=True)
class SplitPlan:
    test_ids: frozenset
    train_subsets: tuple  # ((label, frozenset of ids), ...) ascending
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "test_ids", frozenset(self.test_ids))
        object.__setattr__(self, "train_subsets",
                           tuple((lab, frozenset(ids)) for lab, ids in self.train_subsets))
        self.validate()

    def validate(self):
        prev = frozenset()
        for label, ids in self.train_subsets:
            if ids & self.test_ids:
                raise ValueError(f"subset {label} overlaps the test set")
            if not prev <= ids:
                raise ValueError(f"subset {label} does not contain the previous subset")
            prev = ids

    def role_of(self, image_id: str) -> str:
        if image_id in self.test_ids:
            return "test"
        for label, ids in self.train_subsets:
            if image_id in ids:
                return f"train-{label}"
        return "unused"

    def to_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "test_ids": sorted(self.test_ids),
            "train_subsets": [{"label": lab, "ids": sorted(ids)} for lab, ids in self.train_subsets],
        }

    @classmethod
    def from_dict(cls, d) -> SplitPlan:
        return cls(frozenset(d["test_ids"]),
                   tuple((s["label"], frozenset(s["ids"])) for s in d["train_subsets"]),
                   d.get("master_seed", 0))


def nested_quotas(counts: dict, sizes) -> list[dict]:
    """Per-source quotas for every size, each dominating the previous one.

    Each size starts from its largest-remainder quotas. Should the
    apportionment paradox make a source shrink as the size grows, the
    quotas are rebuilt from the previous ones, giving each extra seat to
    the source furthest below its exact share.
    """
    total = sum(counts.values())
    prev = {k: 0 for k in counts}
    out = []
    for n in sizes:
        q = largest_remainder(counts, n, caps=counts)
        if any(q[k] < prev[k] for k in counts):
            q = dict(prev)
            for _ in range(n - sum(prev.values())):
                room = [k for k in counts if q[k] < counts[k]]
                k = max(room, key=lambda k: (n * counts[k] / total - q[k], -list(counts).index(k)))
                q[k] += 1
        out.append(q)
        prev = q
    return out


def nested_subsets(pool: SourceCatalog, sizes, seed: int = 0, test_ids=()) -> SplitPlan:
    """Ratio-preserving training subsets, each contained in the next.

    Every source is shuffled once under the seed and each subset takes a
    prefix of every source's order, so nesting holds by construction.
    """
    sizes = [int(s) for s in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])) or (sizes and sizes[0] <= 0):
        raise ValueError("sizes must be positive and strictly ascending")
    if sizes and sizes[-1] > len(pool):
        raise ValueError(f"size {sizes[-1]} exceeds the pool of {len(pool)} images")
    groups = {s: v for s, v in pool.by_source().items() if v}
    counts = {s: len(v) for s, v in groups.items()}
    orders = {s: _shuffled(v, seed, "train", s.value) for s, v in groups.items()}
    subsets = []
    for n, q in zip(sizes, nested_quotas(counts, sizes)):
        ids = frozenset(i for s, k in q.items() for i in orders[s][:k])
        subsets.append((size_label(n), ids))
    return SplitPlan(frozenset(test_ids), tuple(subsets), seed)


@dataclass(frozen=True)
class RatioReport:
    sources: tuple
    reference_share: dict
    rows: tuple  # ((label, size, {source: deviation in percentage points}), ...)

    def max_abs_deviation(self) -> float:
        return max((abs(d) for _, _, dev in self.rows for d in dev.values()), default=0.0)

    @staticmethod
    def cell(dev: float) -> str:
        if abs(dev) < 0.005:
            return "="
        return f"{dev:+.2f}%"

    def to_text(self) -> str:
        names = [s.value for s in self.sources]
        width = max(10, *(len(n) for n in names))
        lines = ["size".ljust(8) + "".join(n.rjust(width + 1) for n in names)]
        lines.append("ref".ljust(8) + "".join(
            f"{100 * self.reference_share[s]:.2f}%".rjust(width + 1) for s in self.sources))
        for label, _, dev in self.rows:
            lines.append(label.ljust(8) + "".join(self.cell(dev[s]).rjust(width + 1)
                                                  for s in self.sources))
        return "\n".join(lines)


def ratio_report(plan: SplitPlan, catalog: SourceCatalog) -> RatioReport:
    """Signed share deviations (percentage points) of every subset vs `catalog`."""
    counts = catalog.counts
    total = sum(counts.values())
    sources = tuple(s for s in Source if counts[s])
    ref = {s: counts[s] / total for s in sources}
    rows = []
    for label, ids in plan.train_subsets:
        c = Counter(catalog[i].source for i in ids)
        n = len(ids)
        rows.append((label, n, {s: 100 * (c.get(s, 0) / n - ref[s]) for s in sources}))
    return RatioReport(sources, ref, tuple(rows))


# ---------------------------------------------------------------------------
# toy embedding

def toy_embed(cover: bytes, rate: float, seed: int = 0, key: str = "") -> bytes:
    """Flip +-1 on a seeded fraction `rate` of the nonzero AC coefficients.

    Plumbing only, so cover/stego pairs exist; it hides nothing securely.
    The stream is re-emitted with the cover's quantization tables.
    """
    if not 0 <= rate <= 1:
        raise ValueError("rate must be in [0, 1]")
    st, coefs = read_coefficients(cover)
    if len(st.components) != 1:
        raise JpegUnsupportedError("toy embedding works on grey streams only")
    c = coefs[0].astype(np.int64)
    flat = c.reshape(-1, 64)
    ac = flat[:, 1:]
    nz = np.flatnonzero(ac)
    k = int(np.floor(rate * nz.size + 0.5))
    if k:
        rng = keyed_rng(b"rawdev-embed", seed, key)
        pick = nz[rng.permutation(nz.size)[:k]]
        step = rng.choice(np.array([-1, 1]), size=k)
        vals = ac.flat[pick]
        # keep values inside the baseline AC range
        step[np.abs(vals + step) > 1023] *= -1
        ac.flat[pick] = vals + step
    q = st.dqt[st.components[0].table]
    return encode_coefficients([c], [q], [0], st.width, st.height)


# ---------------------------------------------------------------------------
# MAT export

_MI_INT8, _MI_INT32, _MI_UINT32, _MI_DOUBLE, _MI_MATRIX = 1, 5, 6, 9, 14
_MX_DOUBLE_CLASS = 6


def _mat_element(dtype: int, payload: bytes) -> bytes:
    n = len(payload)
    if n <= 4:
        return struct.pack("<HH", dtype, n) + payload.ljust(4, b"\0")
    return struct.pack("<II", dtype, n) + payload + b"\0" * (-n % 8)


def mat5_bytes(arr, name: str = "im") -> bytes:
    """Level-5 MAT file holding one real 2-D double array."""
    a = np.asarray(arr, dtype="<f8")
    if a.ndim != 2:
        raise ValueError("only 2-D arrays are supported")
    text = b"MATLAB 5.0 MAT-file, written by rawdev"
    header = text.ljust(116, b" ") + b"\0" * 8 + struct.pack("<H", 0x0100) + b"IM"
    body = (
        _mat_element(_MI_UINT32, struct.pack("<II", _MX_DOUBLE_CLASS, 0))
        + _mat_element(_MI_INT32, struct.pack("<ii", *a.shape))
        + _mat_element(_MI_INT8, name.encode("ascii"))
        + _mat_element(_MI_DOUBLE, a.tobytes(order="F"))
    )
    return header + struct.pack("<II", _MI_MATRIX, len(body)) + body


def export_decompressed(blob: bytes, path) -> None:
    """Write the unrounded decode of a grey stream to `path` as MAT ("im")."""
    Path(path).write_bytes(mat5_bytes(decode_unrounded(blob)))


# ---------------------------------------------------------------------------
# storage

MAT_TILE_FILE_BYTES = len(mat5_bytes(np.zeros((TILE_SIDE, TILE_SIDE))))
RAW_BYTES_DEFAULT = 3_000 * 5_000 * 2  # a typical mosaic, 16-bit samples

FORMATS = ("raw", "jpeg_colour_cover", "jpeg_grey_cover", "jpeg_grey_stego",
           "mat_grey_cover", "mat_grey_stego")


@dataclass(frozen=True)
class StorageEstimate:
    per_format: dict
    unit_bytes: dict
    counts: dict
    total: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", int(sum(self.per_format.values())))

    def shares(self) -> dict:
        return {k: (v / self.total if self.total else 0.0) for k, v in self.per_format.items()}

    def to_text(self) -> str:
        lines = [f"{'format':<20}{'count':>12}{'bytes/item':>14}{'total':>14}"]
        for k, v in self.per_format.items():
            lines.append(f"{k:<20}{self.counts[k]:>12,}{self.unit_bytes[k]:>14,.0f}"
                         f"{human_bytes(v):>14}")
        lines.append(f"{'total':<20}{'':>12}{'':>14}{human_bytes(self.total):>14}")
        return "\n".join(lines)


def human_bytes(n: float) -> str:
    for unit in ("B", "kB", "MB", "GB", "TB"):
        if abs(n) < 1000 or unit == "TB":
            return f"{n:.2f} {unit}" if unit != "B" else f"{int(n)} B"
        n /= 1000.0


def estimate_storage(counts: dict, unit_bytes: dict | None = None,
                     mat_payload_only: bool = False) -> StorageEstimate:
    """Bytes per format from item counts and per-item sizes.

    MAT items cost the exact file size of a 256x256 double tile (or the bare
    array payload with `mat_payload_only`); JPEG sizes should be measured
    means from developed fixtures and must be given for any JPEG format
    with a nonzero count.
    """
    unit = {"mat_grey_cover": MAT_TILE_BYTES if mat_payload_only else MAT_TILE_FILE_BYTES,
            "raw": RAW_BYTES_DEFAULT}
    unit["mat_grey_stego"] = unit["mat_grey_cover"]
    unit.update(unit_bytes or {})
    per, used_unit, used_counts = {}, {}, {}
    for k, n in counts.items():
        if n < 0:
            raise ValueError(f"negative count for {k}")
        if n and k not in unit:
            raise ValueError(f"no per-item size known for format {k!r}")
        u = unit.get(k, 0)
        per[k] = int(round(n * u))
        used_unit[k] = u
        used_counts[k] = int(n)
    return StorageEstimate(per, used_unit, used_counts)


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
