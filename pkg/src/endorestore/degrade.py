"""Seeded noise injection, parametric blur kernels and degradation recipes.

Noise standard deviations for AWGN are given in 8-bit units and applied in the
normalized domain as ``sigma / 255``.  Every step clamps its output to [0, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from endorestore.image import Image, Kernel2D, convolve

_MASK64 = (1 << 64) - 1

NOISE_KINDS = ("awgn", "speckle", "salt_pepper", "poisson")
BLUR_KINDS = ("motion", "disk")


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """Independent 64-bit seed for sub-stream ``index`` of ``master_seed``."""
    return splitmix64((splitmix64(int(master_seed) & _MASK64) + int(index)) & _MASK64)


def _generator(seed: int) -> np.random.Generator:
    # Philox is counter-based: the stream depends only on the key
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64))


def standard_normal(seed: int, shape) -> np.ndarray:
    """Box-Muller normals from a Philox uniform stream."""
    n = int(np.prod(shape))
    half = (n + 1) // 2
    u = _generator(seed).random(2 * half)
    u1 = 1.0 - u[:half]  # (0, 1], keeps log finite
    u2 = u[half:]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
    return z[:n].reshape(shape)


def add_awgn(img: Image, sigma8: float, seed: int = 0) -> Image:
    if sigma8 < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma8}")
    if sigma8 == 0:
        return img
    noise = standard_normal(seed, img.shape) * (sigma8 / 255.0)
    return img.with_data(np.clip(img.data + noise, 0.0, 1.0))


def add_speckle(img: Image, sigma: float, seed: int = 0) -> Image:
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return img
    eta = standard_normal(seed, img.shape) * sigma
    return img.with_data(np.clip(img.data * (1.0 + eta), 0.0, 1.0))


def add_salt_pepper(img: Image, p: float, seed: int = 0) -> Image:
    """Corrupt whole pixels: probability p/2 to black, p/2 to white."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p == 0:
        return img
    u = _generator(seed).random((img.height, img.width))
    out = img.data.copy()
    out[:, u < p / 2] = 0.0
    out[:, (u >= p / 2) & (u < p)] = 1.0
    return img.with_data(out)


def add_poisson(img: Image, peak: float, seed: int = 0) -> Image:
    if not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    counts = _generator(seed).poisson(np.clip(img.data, 0.0, None) * peak)
    return img.with_data(np.clip(counts / peak, 0.0, 1.0))


def _trim_symmetric(w: np.ndarray) -> np.ndarray:
    """Drop all-zero border rows/cols pairwise so the center stays centered."""
    while w.shape[0] > 1 and not w[0].any() and not w[-1].any():
        w = w[1:-1]
    while w.shape[1] > 1 and not w[:, 0].any() and not w[:, -1].any():
        w = w[:, 1:-1]
    return w


def motion_kernel(length: float, angle: float) -> Kernel2D:
    """Line-segment PSF of ``length`` pixels at ``angle`` degrees (counter-clockwise).

    The segment is sampled at unit spacing and splatted with bilinear weights,
    so axis-aligned integer lengths give a flat box.
    """
    if length < 1:
        raise ValueError(f"motion length must be >= 1, got {length}")
    if length == 1:
        return Kernel2D.identity()
    n = max(int(math.ceil(length)), 2)
    t = np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, n)
    theta = math.radians(angle)
    xs = t * math.cos(theta)
    ys = -t * math.sin(theta)
    # snap float noise so that axis-aligned segments land exactly on pixel centers
    xs = np.round(xs, 12)
    ys = np.round(ys, 12)
    half = int(math.ceil(np.abs(np.concatenate([xs, ys])).max())) + 1
    size = 2 * half + 1
    w = np.zeros((size, size))
    for x, y in zip(xs + half, ys + half):
        x0, y0 = math.floor(x), math.floor(y)
        fx, fy = x - x0, y - y0
        w[y0, x0] += (1 - fx) * (1 - fy)
        w[y0, x0 + 1] += fx * (1 - fy)
        w[y0 + 1, x0] += (1 - fx) * fy
        w[y0 + 1, x0 + 1] += fx * fy
    w[np.abs(w) < 1e-15] = 0.0
    w = _trim_symmetric(w)
    return Kernel2D(w / w.sum())


def disk_kernel(radius: float, supersample: int = 16) -> Kernel2D:
    """Area-sampled uniform disk (defocus PSF)."""
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if radius == 0:
        return Kernel2D.identity()
    half = max(int(math.ceil(radius - 0.5)), 0)
    offs = (np.arange(supersample) + 0.5) / supersample - 0.5
    centers = np.arange(-half, half + 1)
    sub = (centers[:, None] + offs[None, :]).ravel()
    inside = (sub[:, None] ** 2 + sub[None, :] ** 2) <= radius * radius
    size = 2 * half + 1
    w = inside.reshape(size, supersample, size, supersample).mean(axis=(1, 3))
    if w.sum() == 0:
        return Kernel2D.identity()
    return Kernel2D(w / w.sum())


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    sigma: float = 0.0
    p: float = 0.0
    peak: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0 or not 0 <= self.p <= 1 or not self.peak > 0:
            raise ValueError(f"invalid noise parameters: {self}")

    def apply(self, img: Image, seed: int) -> Image:
        if self.kind == "awgn":
            return add_awgn(img, self.sigma, seed)
        if self.kind == "speckle":
            return add_speckle(img, self.sigma, seed)
        if self.kind == "salt_pepper":
            return add_salt_pepper(img, self.p, seed)
        return add_poisson(img, self.peak, seed)

    def to_dict(self) -> dict:
        params = {"awgn": ("sigma",), "speckle": ("sigma",), "salt_pepper": ("p",), "poisson": ("peak",)}
        return {"kind": self.kind, **{k: getattr(self, k) for k in params[self.kind]}}


@dataclass(frozen=True)
class BlurSpec:
    kind: str
    length: float = 1.0
    angle: float = 0.0
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in BLUR_KINDS:
            raise ValueError(f"unknown blur kind {self.kind!r}")
        if self.kind == "motion" and self.length < 1:
            raise ValueError("motion length must be >= 1")
        if self.kind == "disk" and self.radius < 0:
            raise ValueError("disk radius must be >= 0")

    def kernel(self) -> Kernel2D:
        if self.kind == "motion":
            return motion_kernel(self.length, self.angle)
        return disk_kernel(self.radius)

    def apply(self, img: Image, seed: int = 0) -> Image:
        return convolve(img, self.kernel()).clamp()

    def to_dict(self) -> dict:
        if self.kind == "motion":
            return {"kind": "motion", "length": self.length, "angle": self.angle}
        return {"kind": "disk", "radius": self.radius}


def step_from_dict(d: dict):
    d = dict(d)
    kind = d.get("kind")
    if kind in BLUR_KINDS:
        return BlurSpec(**d)
    if kind in NOISE_KINDS:
        return NoiseSpec(**d)
    raise ValueError(f"unknown degradation step kind {kind!r}")


@dataclass(frozen=True)
class DegradationRecipe:
    steps: tuple = ()
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def step_seed(self, index: int) -> int:
        return derive_seed(self.master_seed, index)

    def blur_kernel(self) -> Kernel2D:
        """Composite PSF of the blur steps (identity when there are none)."""
        blurs = [s for s in self.steps if isinstance(s, BlurSpec)]
        if not blurs:
            return Kernel2D.identity()
        w = blurs[0].kernel().weights
        for b in blurs[1:]:
            w = convolve2d(w, b.kernel().weights)
        return Kernel2D(w / w.sum())

    def to_dict(self) -> dict:
        return {"steps": [s.to_dict() for s in self.steps], "master_seed": self.master_seed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationRecipe":
        return cls(tuple(step_from_dict(s) for s in d.get("steps", [])), int(d.get("master_seed", 0)))

    @classmethod
    def from_json(cls, text: str) -> "DegradationRecipe":
        return cls.from_dict(json.loads(text))


def apply_recipe(img: Image, r: DegradationRecipe) -> Image:
    out = img
    for i, step in enumerate(r.steps):
        out = step.apply(out, r.step_seed(i))
    return out.clamp()
