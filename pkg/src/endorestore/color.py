"""White balance estimation and the raw -> XYZ -> sRGB rendering chain."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from endorestore.errors import DegenerateIlluminantError, ShapeError
from endorestore.image import Image

_DARK = 1e-6


@dataclass(frozen=True)
class ColorPipeline:
    wb_gains: tuple = (1.0, 1.0, 1.0)
    raw_to_xyz: np.ndarray = field(default_factory=lambda: np.eye(3))
    srgb_encode: bool = False

    def __post_init__(self):
        gains = tuple(float(g) for g in self.wb_gains)
        if len(gains) != 3 or not all(np.isfinite(g) and g > 0 for g in gains):
            raise ValueError(f"white-balance gains must be three positive finite numbers, got {gains}")
        m = np.array(self.raw_to_xyz, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("raw_to_xyz must be a finite 3x3 matrix")
        if abs(np.linalg.det(m)) <= 1e-9:
            raise ValueError("raw_to_xyz is singular")
        m.setflags(write=False)
        object.__setattr__(self, "wb_gains", gains)
        object.__setattr__(self, "raw_to_xyz", m)


def _require_rgb(img: Image):
    if img.channels != 3:
        raise ShapeError(f"expected a 3-channel image, got {img.channels} channel(s)")


def estimate_wb_grayworld(img: Image) -> tuple:
    """Gains that equalize channel means to the green mean."""
    _require_rgb(img)
    means = img.data.reshape(3, -1).mean(axis=1)
    if np.any(means <= _DARK):
        raise DegenerateIlluminantError(f"channel mean too small for gray-world: {means.tolist()}")
    return (means[1] / means[0], 1.0, means[1] / means[2])


def estimate_wb_whitepatch(img: Image, percentile: float = 0.99) -> tuple:
    """Gains mapping each channel's ``percentile`` quantile onto the green one."""
    _require_rgb(img)
    if not 0.0 < percentile <= 1.0:
        raise ValueError(f"percentile must lie in (0, 1], got {percentile}")
    q = np.quantile(img.data.reshape(3, -1), percentile, axis=1)
    if np.any(q <= _DARK):
        raise DegenerateIlluminantError(f"channel quantile too small for white-patch: {q.tolist()}")
    return (q[1] / q[0], 1.0, q[1] / q[2])


def srgb_encode(v):
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.0031308, 12.92 * v, 1.055 * np.power(np.maximum(v, 0.0), 1.0 / 2.4) - 0.055)


def apply_wb(img: Image, gains) -> Image:
    """Multiply channels by ``gains`` without clamping or color transforms."""
    _require_rgb(img)
    return img.with_data(img.data * np.asarray(gains, dtype=np.float64)[:, None, None])


def apply_pipeline(img: Image, p: ColorPipeline) -> Image:
    _require_rgb(img)
    balanced = img.data * np.asarray(p.wb_gains)[:, None, None]
    xyz = np.einsum("ij,jhw->ihw", p.raw_to_xyz, balanced)
    out = np.clip(xyz, 0.0, 1.0)
    if p.srgb_encode:
        out = np.clip(srgb_encode(out), 0.0, 1.0)
    return img.with_data(out)


def load_matrix(path) -> np.ndarray:
    """Read 9 whitespace-separated decimals (row-major) as a 3x3 matrix."""
    with open(os.fspath(path)) as fh:
        values = fh.read().split()
    if len(values) != 9:
        raise ValueError(f"{path}: expected 9 numbers, found {len(values)}")
    return np.array([float(v) for v in values]).reshape(3, 3)
