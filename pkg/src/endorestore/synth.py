"""Procedural stand-in scenes for the private arthroscopy frames.

Each scene is a smooth illumination field times a tissue-like albedo made of
soft blobs and band-limited texture, with a few saturated specular dots and a
per-channel color cast.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from endorestore.image import Image


def synth_scene(size: int, seed: int, cast: bool = True) -> Image:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size

    # vignetted illumination, brighter near a random "light" position
    cy, cx = rng.uniform(0.3, 0.7, 2)
    illum = 0.55 + 0.45 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * rng.uniform(0.2, 0.45) ** 2))

    base = rng.uniform(0.35, 0.75, 3)
    albedo = np.ones((3, size, size)) * base[:, None, None]
    for _ in range(rng.integers(3, 8)):
        by, bx = rng.uniform(0, 1, 2)
        rad = rng.uniform(0.05, 0.25)
        blob = np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / (2 * rad * rad))
        tint = rng.uniform(-0.35, 0.35, 3)
        albedo += tint[:, None, None] * blob

    noise = rng.standard_normal((size, size))
    texture = ndimage.gaussian_filter(noise, sigma=rng.uniform(1.5, 3.0), mode="wrap")
    texture /= np.abs(texture).max() + 1e-12
    albedo *= 1.0 + 0.25 * texture

    img = np.clip(albedo * illum, 0.0, 1.0)

    for _ in range(rng.integers(0, 4)):
        sy, sx = rng.integers(2, size - 2, 2)
        spot = np.exp(-((np.arange(size)[:, None] - sy) ** 2 + (np.arange(size)[None, :] - sx) ** 2) / 2.0)
        img = np.maximum(img, np.clip(1.4 * spot, 0.0, 1.0)[None])

    if cast:
        gains = rng.uniform(0.75, 1.15, 3)
        gains[1] = 1.0
        img = np.clip(img * gains[:, None, None], 0.0, 1.0)

    # stretch so every scene spans a usable range
    lo, hi = img.min(), img.max()
    if hi - lo < 0.5:
        img = (img - lo) / max(hi - lo, 1e-6) * 0.8 + 0.1
    return Image(img)


def synth_images(n: int, size: int, seed: int) -> list[Image]:
    if n < 1:
        raise ValueError("n must be >= 1")
    if size % 16:
        raise ValueError(f"size must be divisible by 16, got {size}")
    seeds = np.random.SeedSequence(seed).spawn(n)
    return [synth_scene(size, int(s.generate_state(1)[0])) for s in seeds]
