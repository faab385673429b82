# %% [markdown]
# # Developing one mosaic
# Simulate a Bayer mosaic, draw a recipe for it, run the development chain
# and look at what came out.

# %%
import numpy as np

from rawdev.develop import develop_image
from rawdev.jpeg import decode_jpeg, encode_jpeg
from rawdev.paramsample import SeedSpec, sample_recipe
from rawdev.rawio import simulate_cfa
from rawdev.synthetic import synthetic_scene

rgb = synthetic_scene(768, 1152, seed=1)
cfa = simulate_cfa(rgb, "RGGB")
print(cfa.samples.shape, cfa.pattern.value, cfa.white_level)

# %% the recipe depends only on (master seed, image id)
recipe = sample_recipe(SeedSpec(2024, "demo-0001"), "learning")
print(recipe.to_json())

# %%
dev = develop_image(cfa, recipe, "demo-0001")
print("upscaled:", dev.upscaled)
print(len(dev.grey), "grey tiles of", dev.grey.tiles[0].shape)
print(len(dev.colour), "colour tiles of", dev.colour.tiles[0].shape)

# %% encode one tile and compare with the input
tile = dev.grey.tiles[6]
blob = encode_jpeg(tile, 75)
back, st = decode_jpeg(blob)
mse = np.mean((back.astype(float) - tile) ** 2)
print(f"{len(blob)} bytes, PSNR {10 * np.log10(255 ** 2 / mse):.2f} dB")
