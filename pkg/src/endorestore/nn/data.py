"""(degraded, clean) training pairs for the coarse and fine stages.

Coarse pairs mix every noise kind with and without motion blur; fine pairs
are blur-only.  The noise levels below are this package's defaults for the
"multi-level" degradations.
"""

from __future__ import annotations

import numpy as np

from endorestore.color import ColorPipeline, apply_pipeline, estimate_wb_grayworld
from endorestore.degrade import BlurSpec, DegradationRecipe, NoiseSpec, apply_recipe, derive_seed
from endorestore.image import Image, extract_patches

AWGN_LEVELS = (10, 20, 30, 40, 50, 60)
SPECKLE_LEVELS = (0.05, 0.1)
SALT_PEPPER_LEVELS = (0.01, 0.05)
POISSON_PEAKS = (100, 500)


def random_blur(rng) -> BlurSpec:
    return BlurSpec("motion", length=float(rng.integers(3, 10)), angle=float(rng.uniform(0, 180)))


def random_noise(rng) -> NoiseSpec:
    kind = rng.choice(["awgn", "speckle", "salt_pepper", "poisson"])
    if kind == "awgn":
        return NoiseSpec("awgn", sigma=float(rng.choice(AWGN_LEVELS)))
    if kind == "speckle":
        return NoiseSpec("speckle", sigma=float(rng.choice(SPECKLE_LEVELS)))
    if kind == "salt_pepper":
        return NoiseSpec("salt_pepper", p=float(rng.choice(SALT_PEPPER_LEVELS)))
    return NoiseSpec("poisson", peak=float(rng.choice(POISSON_PEAKS)))


def random_recipe(rng, stage: str, master_seed: int) -> DegradationRecipe:
    if stage == "fine":
        return DegradationRecipe((random_blur(rng),), master_seed)
    steps = []
    if rng.random() < 0.5:
        steps.append(random_blur(rng))
    steps.append(random_noise(rng))
    return DegradationRecipe(tuple(steps), master_seed)


def balanced_target(clean: Image) -> Image:
    return apply_pipeline(clean, ColorPipeline(estimate_wb_grayworld(clean)))


def make_pairs(images, patch: int, per_image: int, stage: str, seed: int, wb_target: bool = False) -> list:
    """Cut ``per_image`` patches from every image and degrade each with a random recipe."""
    if patch % 16:
        raise ValueError(f"patch size must be divisible by 16, got {patch}")
    rng = np.random.default_rng(seed)
    pairs = []
    for i, img in enumerate(images):
        for j, clean in enumerate(extract_patches(img, patch, stride=8, seed=derive_seed(seed, i), count=per_image)):
            recipe = random_recipe(rng, stage, derive_seed(derive_seed(seed, i), j + 1))
            target = balanced_target(clean) if wb_target else clean
            pairs.append((apply_recipe(clean, recipe), target))
    return pairs
