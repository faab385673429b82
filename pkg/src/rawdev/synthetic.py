"""Synthetic linear scenes and CFA trees for tests and demos."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from .rawio import BayerPattern, simulate_cfa, write_cfa


def synthetic_scene(height: int, width: int, seed: int = 0) -> np.ndarray:
    """(H, W, 3) uint16 image: smooth shading, a few hard-edged shapes and
    sensor-like noise, so every development stage has something to act on."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width] / max(height, width)
    img = np.empty((height, width, 3))
    for c in range(3):
        a, b, ph = rng.uniform(0.5, 3.0, 3)
        img[..., c] = 0.35 + 0.2 * np.sin(2 * np.pi * (a * xx + b * yy) + ph)
    for _ in range(6):
        cy, cx = rng.uniform(0, 1, 2) * (height, width)
        r = rng.uniform(0.05, 0.25) * min(height, width)
        mask = (np.arange(height)[:, None] - cy) ** 2 + (np.arange(width)[None] - cx) ** 2 < r * r
        img[mask] = img[mask] * 0.4 + rng.uniform(0.05, 0.9, 3) * 0.6
    texture = ndimage.gaussian_filter(rng.standard_normal((height, width)), 1.5)
    img += 0.04 * texture[..., None]
    img = np.clip(img, 0, 1)
    # shot-like noise, stronger in bright areas
    img += rng.standard_normal(img.shape) * 0.01 * np.sqrt(img + 0.01)
    return np.clip(np.round(img * 60000), 0, 65535).astype(np.uint16)


def make_cfa_tree(root, counts: dict, shape=(512, 768), seed: int = 0) -> list:
    """Write `<root>/<source>/<source>_<n>.pgm` mosaics; returns the paths."""
    root = Path(root)
    patterns = list(BayerPattern)
    paths = []
    k = 0
    for source, n in counts.items():
        name = getattr(source, "value", source)
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            rgb = synthetic_scene(*shape, seed=seed * 100_003 + k)
            p = d / f"{name.lower()}_{i:05d}.pgm"
            write_cfa(simulate_cfa(rgb, patterns[k % 4]), p)
            paths.append(p)
            k += 1
    return paths
