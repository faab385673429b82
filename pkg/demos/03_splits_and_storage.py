# %% [markdown]
# # Test partition, nested training subsets, storage
# A synthetic catalog with the per-source image counts of the full collection.

# %%
from rawdev import dataset as ds

catalog = ds.SourceCatalog.synthetic(ds.SOURCE_COUNTS)
print(len(catalog), {s.value: n for s, n in catalog.counts.items()})

# %% Dresden stays out of the test set
pool, test = ds.partition_test(catalog, 6250, {"Dresden"}, seed=0)
print({s.value: n for s, n in test.counts.items()})

# %% each subset contains the previous one
plan = ds.nested_subsets(pool, [10_000, 50_000, 100_000], seed=0, test_ids=test.ids)
print(ds.ratio_report(plan, pool).to_text())

# %% decompressed tiles are 8 bytes per sample
est = ds.estimate_storage({"mat_grey_cover": 2_000_000, "mat_grey_stego": 2_000_000},
                          mat_payload_only=True)
print(est.to_text())
