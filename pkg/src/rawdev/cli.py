"""Command-line batch driver.

Work is scheduled per source image. Workers only compute; the parent
process is the single writer of tiles, completion markers and the
manifest, and it consumes results in catalog order, so outputs do not
depend on the worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from .develop import develop_image
from .jpeg import JpegError, encode_tiles, estimate_qf, parse_jpeg, recompress
from .paramsample import Profile, SeedSpec, sample_recipe
from .rawio import RawIOError, read_cfa

ENV_WORKERS = "RAWDEV_WORKERS"
EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
MANIFEST = "manifest.jsonl"
STATE_DIR = ".state"


class ConfigurationError(ValueError):
    pass


def default_workers() -> int:
    raw = os.environ.get(ENV_WORKERS, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{ENV_WORKERS}={raw!r} is not an integer") from None
    return n


@dataclass
class RunConfig:
    master_seed: int = 0
    profile: str = "learning"
    worker_count: int = 1
    input_root: str | None = None
    output_root: str = "out"
    split_sizes: list = field(default_factory=list)
    test_size: int = 0
    excluded_sources: list = field(default_factory=list)
    quality_factor: int = 75
    toy_embed_rate: float | None = None
    target_side: int = 1024
    allow_upscale: bool = True
    source_map: dict | None = None
    storage_counts: dict | None = None
    storage_unit_bytes: dict | None = None
    # stop after this many newly developed images (simulated interruption)
    stop_after: int | None = None

    # fields that do not influence the produced bytes
    _UNRECORDED = ("worker_count", "input_root", "output_root", "stop_after",
                   "storage_counts", "storage_unit_bytes")

    @classmethod
    def load(cls, path) -> RunConfig:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"{path}: unknown config keys {unknown}")
        return cls(**data)

    def validate(self) -> RunConfig:
        if not isinstance(self.worker_count, int) or self.worker_count < 1:
            raise ConfigurationError("worker_count must be an integer >= 1")
        try:
            Profile(self.profile)
            for s in self.excluded_sources:
                ds.Source.parse(s)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if not 1 <= int(self.quality_factor) <= 100:
            raise ConfigurationError("quality_factor must be in [1, 100]")
        if self.target_side < 32 or self.target_side % 32:
            raise ConfigurationError("target_side must be a positive multiple of 32")
        if self.toy_embed_rate is not None and not 0 <= self.toy_embed_rate <= 1:
            raise ConfigurationError("toy_embed_rate must be in [0, 1]")
        sizes = list(self.split_sizes)
        if any(b <= a for a, b in zip(sizes, sizes[1:])) or any(s <= 0 for s in sizes):
            raise ConfigurationError("split_sizes must be positive and ascending")
        if self.test_size < 0:
            raise ConfigurationError("test_size must be >= 0")
        return self

    def recorded(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: v for k, v in d.items() if k not in self._UNRECORDED}


# ---------------------------------------------------------------------------
# reporting

class Reporter:
    """Human-readable lines on stderr, or JSON records on stdout."""

    def __init__(self, mode: str = "text"):
        self.mode = mode

    def emit(self, kind: str, text: str = "", **fields):
        if self.mode == "jsonl":
            print(json.dumps({"event": kind, **fields}, sort_keys=True), flush=True)
        elif text:
            stream = sys.stdout if kind in ("result", "report") else sys.stderr
            print(text, file=stream, flush=True)


class Progress:
    def __init__(self, total: int, reporter: Reporter, every: float = 5.0):
        self.total, self.reporter, self.every = total, reporter, every
        self.start = self.last = time.monotonic()
        self.done = 0

    def step(self, n: int = 1):
        self.done += n
        now = time.monotonic()
        if now - self.last >= self.every or self.done == self.total:
            self.last = now
            rate = self.done / max(now - self.start, 1e-9)
            eta = (self.total - self.done) / rate if rate else float("inf")
            self.reporter.emit("progress", f"{self.done}/{self.total} images, "
                               f"{rate:.2f} img/s, ETA {eta:.0f} s",
                               done=self.done, total=self.total, rate=rate, eta=eta)

    def rate(self) -> float:
        return self.done / max(time.monotonic() - self.start, 1e-9)


# ---------------------------------------------------------------------------
# develop

def _develop_task(task):
    """Worker body: returns everything the writer needs, or an error."""
    image_id, cfa_path, seed, profile, quality, side, upscale, rate = task
    try:
        recipe = sample_recipe(SeedSpec(seed, image_id), profile)
        recipe = dataclasses.replace(recipe, target_side=side, quality_factor=quality)
        dev = develop_image(read_cfa(cfa_path), recipe, image_id, allow_upscale=upscale)
        greys = encode_tiles(dev.grey_image, quality=quality)
        colours = encode_tiles(dev.colour_image, quality=quality)
        tiles = []
        for k, (grey, colour) in enumerate(zip(greys, colours)):
            stego = None
            if rate is not None:
                stego = ds.toy_embed(grey, rate, seed, key=f"{image_id}_{k:02d}")
            tiles.append((f"{k:02d}", grey, colour, stego))
        return image_id, {"recipe": recipe.to_dict(), "upscaled": dev.upscaled, "tiles": tiles}
    except Exception as exc:  # reported per image, the run goes on
        return image_id, {"error": f"{type(exc).__name__}: {exc}"}


def plan_for(config: RunConfig, catalog: ds.SourceCatalog) -> ds.SplitPlan:
    pool, test = ds.partition_test(catalog, config.test_size, config.excluded_sources,
                                   config.master_seed)
    sizes = list(config.split_sizes)
    if not sizes:
        return ds.SplitPlan(frozenset(test.ids), (("all", frozenset(pool.ids)),),
                            config.master_seed)
    return ds.nested_subsets(pool, sizes, config.master_seed, test_ids=test.ids)


def _split_dir(role: str) -> str:
    return "test" if role == "test" else ("unused" if role == "unused" else "train")


def _write_atomic(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _record(entry, role, result, out: Path):
    split = _split_dir(role)
    tiles = []
    for tile, grey, colour, stego in result["tiles"]:
        name = f"{entry.image_id}_{tile}.jpg"
        paths = {
            "grey": f"grey/{split}/cover/{name}",
            "colour": f"colour/{split}/cover/{name}",
            "stego": f"grey/{split}/stego/{name}" if stego is not None else None,
        }
        digests = {}
        for kind, blob in (("grey", grey), ("colour", colour), ("stego", stego)):
            if blob is None:
                continue
            _write_atomic(out / paths[kind], blob)
            digests[kind] = ds.digest(blob)
        tiles.append({"tile": tile, "cover_path": paths["grey"], "colour_path": paths["colour"],
                      "stego_path": paths["stego"], "sha256": digests})
    rec = {
        "image_id": entry.image_id,
        "source": entry.source.value,
        "role": role,
        "recipe": result["recipe"],
        "upscaled": result["upscaled"],
        "tiles": tiles,
    }
    rec["digest"] = ds.digest(json.dumps(tiles, sort_keys=True).encode())
    return rec


def _marker_path(out: Path, image_id: str) -> Path:
    return out / STATE_DIR / "develop" / f"{image_id}.json"


def load_completed(out: Path, image_id: str):
    """Record of a finished image, if its marker and every file check out."""
    p = _marker_path(out, image_id)
    if not p.exists():
        return None
    try:
        rec = json.loads(p.read_text())
    except json.JSONDecodeError:
        return None
    for t in rec["tiles"]:
        for kind, key in (("grey", "cover_path"), ("colour", "colour_path"), ("stego", "stego_path")):
            if kind not in t["sha256"]:
                continue
            f = out / t[key]
            if not f.exists() or ds.digest(f.read_bytes()) != t["sha256"][kind]:
                return None
    return rec


def _load_catalog(config: RunConfig) -> ds.SourceCatalog:
    if not config.input_root:
        raise ConfigurationError("input_root is required (config key or positional INPUT)")
    try:
        return ds.build_catalog(config.input_root, config.source_map)
    except ds.CatalogError as exc:
        raise ConfigurationError(str(exc)) from None


def cmd_develop(config: RunConfig, reporter: Reporter | None = None) -> int:
    """Develop, tile and encode every catalog image; write the manifest."""
    reporter = reporter or Reporter()
    config.validate()
    catalog = _load_catalog(config)
    try:
        plan = plan_for(config, catalog)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    out = Path(config.output_root)
    out.mkdir(parents=True, exist_ok=True)

    records, pending = {}, []
    for e in catalog:
        rec = load_completed(out, e.image_id)
        if rec is not None:
            records[e.image_id] = rec
        else:
            pending.append(e)
    if config.stop_after is not None:
        pending = pending[:config.stop_after]
    reporter.emit("start", f"{len(catalog)} images, {len(records)} already done, "
                  f"{len(pending)} to develop with {config.worker_count} worker(s)",
                  images=len(catalog), resumed=len(records), pending=len(pending),
                  workers=config.worker_count)

    root = Path(config.input_root)
    tasks = [(e.image_id, str(root / e.cfa_path), config.master_seed, config.profile,
              config.quality_factor, config.target_side, config.allow_upscale,
              config.toy_embed_rate) for e in pending]
    failures = {}
    progress = Progress(len(tasks), reporter)
    if config.worker_count == 1 or len(tasks) <= 1:
        results = map(_develop_task, tasks)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=config.worker_count)
        results = pool.map(_develop_task, tasks, chunksize=1)
    try:
        for image_id, result in results:
            entry = catalog[image_id]
            if "error" in result:
                failures[image_id] = result["error"]
                reporter.emit("failure", f"{image_id}: {result['error']}",
                              image_id=image_id, error=result["error"])
            else:
                rec = _record(entry, plan.role_of(image_id), result, out)
                _write_atomic(_marker_path(out, image_id),
                              json.dumps(rec, sort_keys=True).encode())
                records[image_id] = rec
            progress.step()
    finally:
        if pool is not None:
            pool.shutdown()

    complete = len(records) == len(catalog)
    if complete:
        write_manifest(out / MANIFEST, config, records)
    stats = {"developed": len(tasks) - len(failures), "failed": len(failures),
             "images_per_second": progress.rate(), "manifest_written": complete}
    reporter.emit("summary", f"developed {stats['developed']}, failed {len(failures)}, "
                  f"{stats['images_per_second']:.2f} img/s"
                  + ("" if complete else " (manifest not written: run incomplete)"), **stats)
    if failures:
        return EXIT_PARTIAL
    return EXIT_OK


def write_manifest(path: Path, config: RunConfig, records: dict):
    header = {"kind": "header", "format": "rawdev-manifest/1", "config": config.recorded(),
              "images": len(records)}
    lines = [json.dumps(header, sort_keys=True)]
    for image_id in sorted(records):
        lines.append(json.dumps({"kind": "image", **records[image_id]}, sort_keys=True))
    _write_atomic(path, ("\n".join(lines) + "\n").encode())


def read_manifest(path):
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    return header, [json.loads(x) for x in lines[1:] if x.strip()]


# ---------------------------------------------------------------------------
# other verbs

def cmd_split(config: RunConfig, reporter: Reporter | None = None) -> int:
    reporter = reporter or Reporter()
    config.validate()
    catalog = _load_catalog(config)
    try:
        pool, test = ds.partition_test(catalog, config.test_size, config.excluded_sources,
                                       config.master_seed)
        plan = ds.nested_subsets(pool, config.split_sizes, config.master_seed, test_ids=test.ids)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    out = Path(config.output_root)
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / "split_plan.json", json.dumps(plan.to_dict(), indent=1).encode())
    report = ds.ratio_report(plan, pool)
    test_counts = {s.value: n for s, n in test.counts.items()}
    text = report.to_text() + "\n\ntest set: " + ", ".join(f"{k} {v}" for k, v in test_counts.items())
    _write_atomic(out / "ratio_report.txt", (text + "\n").encode())
    reporter.emit("report", text, test_counts=test_counts,
                  subsets={lab: len(ids) for lab, ids in plan.train_subsets},
                  max_abs_deviation=report.max_abs_deviation())
    return EXIT_OK


def _each_file(paths, reporter, func) -> int:
    failed = 0
    for p in paths:
        try:
            func(Path(p))
        except (OSError, JpegError, ValueError) as exc:
            failed += 1
            reporter.emit("failure", f"{p}: {exc}", path=str(p), error=str(exc))
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_inspect(paths, reporter: Reporter | None = None) -> int:
    reporter = reporter or Reporter()

    def one(p: Path):
        st = parse_jpeg(p.read_bytes())
        lines = [f"{p}: {st.width}x{st.height}, {len(st.components)} component(s), "
                 f"{st.sof}, subsampling {st.subsampling}"]
        tables = []
        for i, (fc, q) in enumerate(zip(st.components, st.quant_tables)):
            est = estimate_qf(q, chroma=i > 0)
            kind = "standard" if est.is_standard else "non-standard, nearest"
            lines.append(f"  component {fc.id} (table {fc.table}): {kind} Q={est.q_estimated}"
                         + ("" if est.is_standard else f", distance {est.distance:.4f}"))
            lines += ["    " + " ".join(f"{v:3d}" for v in row) for row in q]
            tables.append({"component": fc.id, "table": q.tolist(), "standard": est.is_standard,
                           "q_estimated": est.q_estimated, "distance": est.distance})
        reporter.emit("result", "\n".join(lines), path=str(p), width=st.width,
                      height=st.height, components=tables)

    return _each_file(paths, reporter, one)


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_root)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _recompress_task(args):
    src, dst, quality, preserve = args
    try:
        Path(dst).write_bytes(recompress(Path(src).read_bytes(), quality, preserve))
        return src, None
    except (OSError, JpegError, ValueError) as exc:
        return src, str(exc)


def cmd_recompress(paths, config: RunConfig, preserve: bool = False,
                   reporter: Reporter | None = None) -> int:
    reporter = reporter or Reporter()
    config.validate()
    out = _out_dir(config)
    tasks = [(str(p), str(out / (Path(p).stem + ".jpg")), config.quality_factor, preserve)
             for p in paths]
    if config.worker_count > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(config.worker_count) as pool:
            results = list(pool.map(_recompress_task, tasks))
    else:
        results = [_recompress_task(t) for t in tasks]
    failed = 0
    for (src, err), (_, dst, _, _) in zip(results, tasks):
        if err:
            failed += 1
            reporter.emit("failure", f"{src}: {err}", path=src, error=err)
        else:
            reporter.emit("result", f"{src} -> {dst}", path=src, output=dst)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_embed_toy(paths, config: RunConfig, rate: float, reporter: Reporter | None = None) -> int:
    reporter = reporter or Reporter()
    if not 0 <= rate <= 1:
        raise ConfigurationError("rate must be in [0, 1]")
    out = _out_dir(config)

    def one(p: Path):
        dst = out / (p.stem + ".jpg")
        dst.write_bytes(ds.toy_embed(p.read_bytes(), rate, config.master_seed, key=p.stem))
        reporter.emit("result", f"{p} -> {dst}", path=str(p), output=str(dst))

    return _each_file(paths, reporter, one)


def cmd_export_mat(paths, config: RunConfig, reporter: Reporter | None = None) -> int:
    reporter = reporter or Reporter()
    out = _out_dir(config)

    def one(p: Path):
        dst = out / (p.stem + ".mat")
        ds.export_decompressed(p.read_bytes(), dst)
        reporter.emit("result", f"{p} -> {dst} ({dst.stat().st_size} bytes)",
                      path=str(p), output=str(dst), bytes=dst.stat().st_size)

    return _each_file(paths, reporter, one)


# full-scale item counts: 2M cover tiles, each with a stego twin
FULL_SCALE_COUNTS = {
    "raw": sum(ds.SOURCE_COUNTS.values()),
    "jpeg_colour_cover": 2_000_000,
    "jpeg_grey_cover": 2_000_000,
    "jpeg_grey_stego": 2_000_000,
    "mat_grey_cover": 2_000_000,
    "mat_grey_stego": 2_000_000,
}


def measure_tile_sizes(develop_out) -> dict:
    """Mean JPEG tile sizes of a finished develop run."""
    out = Path(develop_out)
    _, records = read_manifest(out / MANIFEST)
    sizes = {"jpeg_grey_cover": [], "jpeg_colour_cover": [], "jpeg_grey_stego": []}
    for rec in records:
        for t in rec["tiles"]:
            sizes["jpeg_grey_cover"].append((out / t["cover_path"]).stat().st_size)
            sizes["jpeg_colour_cover"].append((out / t["colour_path"]).stat().st_size)
            if t["stego_path"]:
                sizes["jpeg_grey_stego"].append((out / t["stego_path"]).stat().st_size)
    return {k: float(np.mean(v)) for k, v in sizes.items() if v}


def cmd_estimate_storage(config: RunConfig, measure=None, reporter: Reporter | None = None) -> int:
    reporter = reporter or Reporter()
    counts = dict(config.storage_counts or FULL_SCALE_COUNTS)
    units = dict(config.storage_unit_bytes or {})
    if measure:
        try:
            units = {**measure_tile_sizes(measure), **units}
        except (OSError, ValueError, IndexError) as exc:
            raise ConfigurationError(f"cannot measure {measure}: {exc}") from None
        if "jpeg_grey_stego" not in units and "jpeg_grey_cover" in units:
            # +-1 changes hardly move the file size
            units["jpeg_grey_stego"] = units["jpeg_grey_cover"]
            reporter.emit("note", "no stego tiles measured; using the grey cover size",
                          assumed="jpeg_grey_stego")
    try:
        est = ds.estimate_storage(counts, units)
    except ValueError as exc:
        raise ConfigurationError(f"{exc}; pass --measure DIR or storage_unit_bytes") from None
    reporter.emit("report", est.to_text(), per_format=est.per_format,
                  unit_bytes=est.unit_bytes, total=est.total)
    return EXIT_OK


def cmd_verify(config: RunConfig, reporter: Reporter | None = None) -> int:
    """Check every manifest file digest and the cover/stego pairing."""
    reporter = reporter or Reporter()
    out = Path(config.output_root)
    try:
        _, records = read_manifest(out / MANIFEST)
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigurationError(f"cannot read manifest in {out}: {exc}") from None
    problems = []
    for rec in records:
        for t in rec["tiles"]:
            blobs = {}
            for kind, key in (("grey", "cover_path"), ("colour", "colour_path"),
                              ("stego", "stego_path")):
                if kind not in t["sha256"]:
                    continue
                f = out / t[key]
                if not f.exists():
                    problems.append(f"{t[key]}: missing")
                    continue
                blobs[kind] = f.read_bytes()
                if ds.digest(blobs[kind]) != t["sha256"][kind]:
                    problems.append(f"{t[key]}: digest mismatch")
            if "stego" in blobs and "grey" in blobs:
                try:
                    a, b = parse_jpeg(blobs["grey"]), parse_jpeg(blobs["stego"])
                    same = ((a.width, a.height) == (b.width, b.height)
                            and all(np.array_equal(x, y) for x, y in zip(a.quant_tables, b.quant_tables)))
                except JpegError as exc:
                    same, problems = False, problems + [f"{t['stego_path']}: {exc}"]
                if not same:
                    problems.append(f"{t['stego_path']}: does not pair with its cover")
    for p in problems:
        reporter.emit("failure", p, problem=p)
    reporter.emit("summary", f"{len(records)} records checked, {len(problems)} problem(s)",
                  records=len(records), problems=len(problems))
    return EXIT_PARTIAL if problems else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int, help=f"worker processes (default ${ENV_WORKERS} or 1)")
    p.add_argument("--profile", choices=[x.value for x in Profile])
    p.add_argument("--quality", type=int, help="JPEG quality factor")
    p.add_argument("--out", help="output directory")
    p.add_argument("--report", choices=["text", "jsonl"], default="text",
                   help="jsonl prints one JSON record per event on stdout")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="rawdev", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("develop", parents=[common], help="develop a CFA tree into JPEG tiles")
    p.add_argument("input", nargs="?", help="catalog root (overrides input_root)")
    p.add_argument("--stop-after", type=int, help="develop at most N new images, then stop")
    p = sub.add_parser("split", parents=[common], help="plan test set and nested training subsets")
    p.add_argument("input", nargs="?")
    p.add_argument("--test-size", type=int)
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--exclude", nargs="*")
    p = sub.add_parser("inspect", parents=[common], help="print quantization tables and Q estimates")
    p.add_argument("paths", nargs="+")
    p = sub.add_parser("recompress", parents=[common], help="re-encode JPEGs at a target quality")
    p.add_argument("paths", nargs="+")
    p.add_argument("--preserve-nonstandard", action="store_true")
    p = sub.add_parser("embed-toy", parents=[common], help="toy +-1 stego (not secure)")
    p.add_argument("paths", nargs="+")
    p.add_argument("--rate", type=float, default=0.2)
    p = sub.add_parser("export-mat", parents=[common], help="write unrounded decodes as MAT files")
    p.add_argument("paths", nargs="+")
    p = sub.add_parser("estimate-storage", parents=[common], help="storage accounting report")
    p.add_argument("--measure", help="develop output whose mean tile sizes are used")
    p.add_argument("--count", action="append", default=[], metavar="FORMAT=N")
    sub.add_parser("verify", parents=[common], help="check manifest digests and pairing")
    return parser


def config_from_args(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if not args.config or args.workers is not None:
        config.worker_count = args.workers if args.workers is not None else default_workers()
    for flag, key in (("seed", "master_seed"), ("profile", "profile"),
                      ("quality", "quality_factor"), ("out", "output_root")):
        if getattr(args, flag, None) is not None:
            setattr(config, key, getattr(args, flag))
    if getattr(args, "input", None):
        config.input_root = args.input
    if getattr(args, "stop_after", None) is not None:
        config.stop_after = args.stop_after
    if getattr(args, "test_size", None) is not None:
        config.test_size = args.test_size
    if getattr(args, "sizes", None):
        config.split_sizes = args.sizes
    if getattr(args, "exclude", None) is not None:
        config.excluded_sources = args.exclude
    if getattr(args, "count", None):
        counts = {}
        for item in args.count:
            k, sep, v = item.partition("=")
            if not sep or not v.isdigit():
                raise ConfigurationError(f"--count expects FORMAT=N, got {item!r}")
            counts[k] = int(v)
        config.storage_counts = counts
    return config.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    reporter = Reporter(args.report)
    try:
        config = config_from_args(args)
        if args.verb == "develop":
            return cmd_develop(config, reporter)
        if args.verb == "split":
            return cmd_split(config, reporter)
        if args.verb == "inspect":
            return cmd_inspect(args.paths, reporter)
        if args.verb == "recompress":
            return cmd_recompress(args.paths, config, args.preserve_nonstandard, reporter)
        if args.verb == "embed-toy":
            return cmd_embed_toy(args.paths, config, args.rate, reporter)
        if args.verb == "export-mat":
            return cmd_export_mat(args.paths, config, reporter)
        if args.verb == "estimate-storage":
            return cmd_estimate_storage(config, args.measure, reporter)
        if args.verb == "verify":
            return cmd_verify(config, reporter)
    except (ConfigurationError, RawIOError, ds.CatalogError) as exc:
        reporter.emit("error", f"configuration error: {exc}", error=str(exc))
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
