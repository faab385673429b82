# %% [markdown]
# # Quantization tables and quality factor estimates

# %%
import numpy as np

from rawdev.jpeg import (encode_jpeg, estimate_qf, extract_quant_tables,
                         nonstandard_target, recompress, std_quant_matrix)

print(std_quant_matrix(75))

# %% a stream written at Q=90, then a tweaked table
img = np.random.default_rng(0).integers(0, 256, (64, 64)).astype(np.uint8)
blob = encode_jpeg(img, 90)
print(estimate_qf(extract_quant_tables(blob)[0]))

q = std_quant_matrix(90).copy()
q[0, 1] += 3
print(estimate_qf(q))

# %% carry the odd table over to Q=75 instead of snapping to the standard one
print(nonstandard_target(q, 75) - std_quant_matrix(75))

odd = encode_jpeg(img, tables=[q])
out = recompress(odd, 75, preserve_nonstandard=True)
print(estimate_qf(extract_quant_tables(out)[0]))
