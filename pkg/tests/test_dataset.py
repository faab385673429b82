import json
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
import scipy.io
from hypothesis import given
from hypothesis import strategies as st

from rawdev.dataset import (
    MAT_TILE_BYTES,
    MAT_TILE_FILE_BYTES,
    SOURCE_COUNTS,
    CatalogEntry,
    CatalogError,
    Source,
    SourceCatalog,
    SplitPlan,
    build_catalog,
    estimate_storage,
    export_decompressed,
    largest_remainder,
    mat5_bytes,
    nested_quotas,
    nested_subsets,
    partition_test,
    ratio_report,
    size_label,
    toy_embed,
)
from rawdev.jpeg import decode_unrounded, encode_jpeg, extract_quant_tables, read_coefficients
from rawdev.synthetic import make_cfa_tree

# test-set composition reported for the shared test partition
REPORTED_TEST_COUNTS = {"ALASKA2": 3970, "StegoAppDB": 1197, "BOSS": 496, "RAISE": 404,
                     "Wesaturate": 183, "Dresden": 0}
SCALED_COUNTS = {"ALASKA2": 800, "BOSS": 100, "StegoAppDB": 241, "Wesaturate": 36,
                 "RAISE": 82, "Dresden": 15}


def hamilton(weights, total):
    """Plain largest-remainder apportionment in exact arithmetic."""
    s = sum(weights.values())
    exact = {k: Fraction(w * total, s) for k, w in weights.items()}
    seats = {k: int(v) for k, v in exact.items()}
    order = sorted(weights, key=lambda k: (-(exact[k] - seats[k]), list(weights).index(k)))
    for k in order[:total - sum(seats.values())]:
        seats[k] += 1
    return seats


@pytest.fixture(scope="module")
def full_catalog():
    return SourceCatalog.synthetic(SOURCE_COUNTS)


# ---------------------------------------------------------------- catalog

def test_full_catalog_size(full_catalog):
    assert len(full_catalog) == 127_420


def test_empty_catalog(tmp_path):
    assert len(build_catalog(tmp_path)) == 0


def test_build_catalog_tree(tmp_path):
    counts = {"BOSS": 3, "RAISE": 2, "Dresden": 1}
    make_cfa_tree(tmp_path, counts, shape=(8, 8))
    cat = build_catalog(tmp_path)
    assert {s.value: n for s, n in cat.counts.items() if n} == counts
    assert cat.ids == sorted(cat.ids)
    assert build_catalog(tmp_path).to_json() == cat.to_json()
    assert all(e.cfa_path.endswith(".pgm") for e in cat)


def test_build_catalog_source_map(tmp_path):
    make_cfa_tree(tmp_path, {"mine": 2}, shape=(8, 8))
    cat = build_catalog(tmp_path, {"mine": "ALASKA2"})
    assert cat.counts[Source.ALASKA2] == 2


def test_duplicate_ids_rejected(tmp_path):
    with pytest.raises(CatalogError):
        SourceCatalog((CatalogEntry("a", Source.BOSS), CatalogEntry("a", Source.RAISE)))
    make_cfa_tree(tmp_path / "x", {"BOSS": 1}, shape=(8, 8))
    make_cfa_tree(tmp_path / "y", {"BOSS": 1}, shape=(8, 8))
    (tmp_path / "x" / "BOSS").rename(tmp_path / "BOSS")
    (tmp_path / "y" / "BOSS").rename(tmp_path / "RAISE")
    with pytest.raises(CatalogError):
        build_catalog(tmp_path)


def test_unknown_source():
    with pytest.raises(CatalogError):
        Source.parse("Flickr")
    assert Source.parse("stegoappdb") is Source.STEGOAPP


# ---------------------------------------------------------------- apportionment

@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=3), st.integers(1, 10_000),
                       min_size=1, max_size=6),
       st.data())
def test_largest_remainder_matches_hamilton(weights, data):
    total = data.draw(st.integers(0, sum(weights.values())))
    got = largest_remainder(weights, total)
    assert sum(got.values()) == total
    want = hamilton(weights, total)
    # ties in the remainder may be broken differently; the quota bound must hold
    s = sum(weights.values())
    for k in weights:
        assert abs(got[k] - Fraction(weights[k] * total, s)) < 1
    if len({Fraction(weights[k] * total, s) % 1 for k in weights}) == len(weights):
        assert got == want


# ---------------------------------------------------------------- test partition

def test_partition_matches_reported_counts(full_catalog):
    pool, test = partition_test(full_catalog, 6250, {"Dresden"}, seed=0)
    counts = {s.value: n for s, n in test.counts.items()}
    assert len(test) == 6250 and counts["Dresden"] == 0
    for name, want in REPORTED_TEST_COUNTS.items():
        assert abs(counts[name] - want) <= 2, name
    assert len(pool) + len(test) == len(full_catalog)
    assert pool.counts[Source.DRESDEN] == SOURCE_COUNTS[Source.DRESDEN]
    assert not set(pool.ids) & set(test.ids)


def test_partition_oracle(full_catalog):
    _, test = partition_test(full_catalog, 6250, {"Dresden"}, seed=4)
    eligible = {s: n for s, n in SOURCE_COUNTS.items() if s is not Source.DRESDEN}
    want = hamilton(eligible, 6250)
    assert {s: test.counts[s] for s in eligible} == want


def test_partition_single_source():
    cat = SourceCatalog.synthetic(SCALED_COUNTS)
    others = [s for s in SCALED_COUNTS if s != "BOSS"]
    _, test = partition_test(cat, 40, others, seed=1)
    assert test.counts[Source.BOSS] == 40 and len(test) == 40


def test_partition_too_large():
    cat = SourceCatalog.synthetic({"BOSS": 5, "Dresden": 5})
    with pytest.raises(ValueError):
        partition_test(cat, 6, {"Dresden"})


def test_partition_deterministic():
    cat = SourceCatalog.synthetic(SCALED_COUNTS)
    a = partition_test(cat, 100, {"Dresden"}, seed=7)[1].ids
    assert a == partition_test(cat, 100, {"Dresden"}, seed=7)[1].ids
    assert a != partition_test(cat, 100, {"Dresden"}, seed=8)[1].ids


# ---------------------------------------------------------------- nested subsets

def test_nested_small_example():
    pool = SourceCatalog.synthetic({"BOSS": 4, "RAISE": 4})
    plan = nested_subsets(pool, [2, 4], seed=3)
    (_, s2), (_, s4) = plan.train_subsets
    assert s2 < s4
    assert Counter(pool[i].source for i in s2) == {Source.BOSS: 1, Source.RAISE: 1}
    assert Counter(pool[i].source for i in s4) == {Source.BOSS: 2, Source.RAISE: 2}


def test_nested_scaled_ratio():
    pool = SourceCatalog.synthetic(SCALED_COUNTS)
    plan = nested_subsets(pool, [100, 500, 1000], seed=0)
    subs = [ids for _, ids in plan.train_subsets]
    assert subs[0] < subs[1] < subs[2]
    rep = ratio_report(plan, pool)
    dev_1000 = rep.rows[-1][2]
    assert max(abs(d) for d in dev_1000.values()) <= 0.1
    assert nested_subsets(pool, [100, 500, 1000], seed=0) == plan


def test_nested_errors():
    pool = SourceCatalog.synthetic({"BOSS": 10})
    with pytest.raises(ValueError):
        nested_subsets(pool, [5, 11])
    with pytest.raises(ValueError):
        nested_subsets(pool, [5, 5])


def test_quota_paradox_stays_monotone():
    # plain largest remainder gives "a" one seat at size 3 and none at size 4
    counts = {"a": 1, "b": 3, "c": 3}
    assert largest_remainder(counts, 3) == {"a": 1, "b": 1, "c": 1}
    assert largest_remainder(counts, 4)["a"] == 0
    q = nested_quotas(counts, [3, 4])
    assert all(q[1][k] >= q[0][k] for k in counts)
    assert [sum(x.values()) for x in q] == [3, 4]


pool_counts = st.dictionaries(st.sampled_from([s.value for s in Source]),
                              st.integers(1, 300), min_size=1)


@given(counts=pool_counts, seed=st.integers(0, 2**32), data=st.data())
def test_nested_properties(counts, seed, data):
    pool = SourceCatalog.synthetic(counts)
    n = len(pool)
    sizes = sorted(data.draw(st.sets(st.integers(1, n), min_size=1, max_size=4)))
    n_test = data.draw(st.integers(0, n - sizes[-1]))
    train_pool, test = partition_test(pool, n_test, (), seed)
    plan = nested_subsets(train_pool, sizes, seed, test.ids)
    subs = [ids for _, ids in plan.train_subsets]
    for a, b in zip(subs, subs[1:]):
        assert a <= b
    for s, size in zip(subs, sizes):
        assert len(s) == size
        assert not s & plan.test_ids
    # share deviation bound from the apportionment
    pc = train_pool.counts
    total = len(train_pool)
    for s, size in zip(subs, sizes):
        c = Counter(train_pool[i].source for i in s)
        for src, k in pc.items():
            if k:
                assert abs(c.get(src, 0) / size - k / total) <= len(pc) / size + 0.0005
    assert nested_subsets(train_pool, sizes, seed, test.ids) == plan


@given(counts=pool_counts, seed=st.integers(0, 1000))
def test_exclusion_property(counts, seed):
    cat = SourceCatalog.synthetic({**counts, "Dresden": 7})
    eligible = len(cat) - 7 - (counts.get("Dresden", 0))
    if eligible <= 0:
        return
    _, test = partition_test(cat, eligible // 2, {"Dresden"}, seed)
    assert test.counts[Source.DRESDEN] == 0


def test_plan_roundtrip_and_roles():
    pool = SourceCatalog.synthetic(SCALED_COUNTS)
    train, test = partition_test(pool, 50, {"Dresden"}, 2)
    plan = nested_subsets(train, [100, 200], 2, test.ids)
    again = SplitPlan.from_dict(json.loads(json.dumps(plan.to_dict())))
    assert again == plan
    smallest = sorted(plan.train_subsets[0][1])[0]
    assert plan.role_of(smallest) == "train-100"
    assert plan.role_of(sorted(test.ids)[0]) == "test"
    with pytest.raises(ValueError):
        SplitPlan(frozenset({smallest}), plan.train_subsets)


def test_size_labels():
    assert [size_label(n) for n in (10_000, 2_000_000, 1500, 7)] == ["10k", "2M", "1500", "7"]


# ---------------------------------------------------------------- ratio report

def test_ratio_report_whole_pool():
    pool = SourceCatalog.synthetic(SCALED_COUNTS)
    plan = SplitPlan(frozenset(), (("all", frozenset(pool.ids)),))
    rep = ratio_report(plan, pool)
    assert rep.max_abs_deviation() < 1e-12
    assert set(rep.to_text().splitlines()[-1].split()[1:]) == {"="}


def test_ratio_report_oracle():
    pool = SourceCatalog.synthetic(SCALED_COUNTS)
    plan = nested_subsets(pool, [100, 500, 1000], 5)
    rep = ratio_report(plan, pool)
    total = len(pool)
    for (label, n, dev), (_, ids) in zip(rep.rows, plan.train_subsets):
        c = Counter(pool[i].source for i in ids)
        for s, d in dev.items():
            want = Fraction(100 * c[s], n) - Fraction(100 * pool.counts[s], total)
            assert abs(d - float(want)) < 1e-9
    assert rep.max_abs_deviation() <= 0.5


def test_ratio_cells():
    from rawdev.dataset import RatioReport
    assert RatioReport.cell(0.004) == "="
    assert RatioReport.cell(0.01) == "+0.01%"
    assert RatioReport.cell(-0.03) == "-0.03%"


# ---------------------------------------------------------------- toy embedding

def test_toy_embed_rate_zero(grey_tile):
    cover = encode_jpeg(grey_tile, 75)
    stego = toy_embed(cover, 0.0, seed=1)
    assert np.array_equal(read_coefficients(stego)[1][0], read_coefficients(cover)[1][0])


def test_toy_embed_rate(grey_tile, developed):
    for tile in (grey_tile, developed.grey.tiles[2]):
        cover = encode_jpeg(tile, 75)
        stego = toy_embed(cover, 0.2, seed=9, key="t")
        c = read_coefficients(cover)[1][0].reshape(-1, 64)[:, 1:]
        s = read_coefficients(stego)[1][0].reshape(-1, 64)[:, 1:]
        frac = np.count_nonzero(c != s) / np.count_nonzero(c)
        assert abs(frac - 0.2) <= 0.01
        assert np.all(np.abs(c - s) <= 1)
        assert np.all(s[c == 0] == 0)
        assert np.array_equal(extract_quant_tables(stego)[0], extract_quant_tables(cover)[0])
        # DC terms untouched
        assert np.array_equal(read_coefficients(cover)[1][0][..., 0, 0],
                              read_coefficients(stego)[1][0][..., 0, 0])


def test_toy_embed_seeded(grey_tile):
    cover = encode_jpeg(grey_tile, 75)
    assert toy_embed(cover, 0.1, 3, "a") == toy_embed(cover, 0.1, 3, "a")
    assert toy_embed(cover, 0.1, 3, "a") != toy_embed(cover, 0.1, 3, "b")
    with pytest.raises(ValueError):
        toy_embed(cover, 1.5)


# ---------------------------------------------------------------- MAT export

def test_mat_tile_size(tmp_path, grey_tile):
    blob = encode_jpeg(grey_tile, 75)
    p = tmp_path / "t.mat"
    export_decompressed(blob, p)
    assert MAT_TILE_BYTES == 524_288 == 256 * 256 * 8
    size = p.stat().st_size
    assert size == MAT_TILE_FILE_BYTES
    assert 524_288 < size < 524_288 + 512
    loaded = scipy.io.loadmat(p)
    im = loaded["im"]
    assert im.dtype == np.float64 and im.shape == (256, 256)
    ref = decode_unrounded(blob)
    assert np.array_equal(im.view(np.uint64), ref.view(np.uint64))   # 0 ulp


def test_mat_constant(tmp_path):
    p = tmp_path / "c.mat"
    export_decompressed(encode_jpeg(np.full((256, 256), 128, np.uint8), 75), p)
    assert np.all(scipy.io.loadmat(p)["im"] == 128.0)


def test_mat_nonsquare_order(tmp_path, rng):
    a = rng.standard_normal((3, 5))
    p = tmp_path / "x.mat"
    p.write_bytes(mat5_bytes(a, "im"))
    assert np.array_equal(scipy.io.loadmat(p)["im"], a)
    with pytest.raises(ValueError):
        mat5_bytes(np.zeros(4))


# ---------------------------------------------------------------- storage

def test_storage_examples():
    est = estimate_storage({"mat_grey_cover": 2_000_000, "mat_grey_stego": 2_000_000},
                           mat_payload_only=True)
    assert est.total == 4_000_000 * 524_288
    assert abs(est.total / 1e12 - 2.10) < 0.005
    assert estimate_storage({}).total == 0
    assert estimate_storage({"mat_grey_cover": 0, "jpeg_grey_cover": 0}).total == 0
    assert estimate_storage({"mat_grey_cover": 1}, mat_payload_only=True).total == 524_288


def test_storage_errors():
    with pytest.raises(ValueError):
        estimate_storage({"jpeg_grey_cover": 10})
    with pytest.raises(ValueError):
        estimate_storage({"mat_grey_cover": -1})
    est = estimate_storage({"jpeg_grey_cover": 10}, {"jpeg_grey_cover": 30_000})
    assert est.total == 300_000 and est.shares() == {"jpeg_grey_cover": 1.0}
    assert "jpeg_grey_cover" in est.to_text()
