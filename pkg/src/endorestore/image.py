"""Raster type, 8-bit file I/O, reflect-101 convolution, Sobel edges and patch sampling.

Images are planar ``(channels, height, width)`` float64 arrays with samples in
[0, 1].  Conversion to and from 8-bit only happens in :func:`load_image` and
:func:`save_image`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError
from scipy import ndimage

from endorestore.errors import DecodeError, ShapeError

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


@dataclass(frozen=True)
class Image:
    """Immutable planar raster.

    ``data`` has shape ``(channels, height, width)`` with ``channels`` 1 or 3.
    ``peak`` is the dynamic-range maximum used by PSNR.
    """

    data: np.ndarray
    peak: float = 1.0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[0] not in (1, 3):
            raise ShapeError(f"expected (1|3, H, W) planar data, got shape {arr.shape}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ShapeError("image must have at least one pixel")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image samples must be finite")
        if not self.peak > 0:
            raise ValueError(f"peak must be positive, got {self.peak}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "peak", float(self.peak))

    @classmethod
    def from_hwc(cls, arr, peak=1.0) -> "Image":
        """Build from an interleaved ``(H, W)`` or ``(H, W, C)`` array."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            return cls(arr[None], peak)
        return cls(np.moveaxis(arr, -1, 0), peak)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def to_hwc(self) -> np.ndarray:
        return np.moveaxis(self.data, 0, -1)

    def clamp(self) -> "Image":
        return Image(np.clip(self.data, 0.0, 1.0), self.peak)

    def with_data(self, data) -> "Image":
        return Image(data, self.peak)


@dataclass(frozen=True)
class Kernel2D:
    """Odd-sized correlation kernel with a defined center tap."""

    weights: np.ndarray = field()

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ShapeError(f"kernel must be 2-D, got shape {w.shape}")
        if w.shape[0] % 2 == 0 or w.shape[1] % 2 == 0:
            raise ShapeError(f"kernel dimensions must be odd, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("kernel weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def height(self) -> int:
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def identity(cls) -> "Kernel2D":
        return cls(np.ones((1, 1)))

    def flipped(self) -> "Kernel2D":
        return Kernel2D(self.weights[::-1, ::-1])

    def is_normalized(self, tol=1e-6) -> bool:
        return bool(np.all(self.weights >= 0) and abs(self.weights.sum() - 1.0) <= tol)


def load_image(path) -> Image:
    """Read an 8-bit PNG or PPM/PGM file into an :class:`Image` scaled by 1/255."""
    path = os.fspath(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("L", "RGB"):
                arr = np.asarray(im, dtype=np.uint8)
            elif mode == "LA":
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
            elif mode in ("RGBA", "P", "PA"):
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
            else:
                raise DecodeError(f"{path}: unsupported pixel format {mode!r} (8-bit gray or RGB only)")
    except (OSError, UnidentifiedImageError) as exc:
        raise DecodeError(f"{path}: cannot decode image ({exc})") from exc
    return Image.from_hwc(arr.astype(np.float64) / 255.0)


def to_bytes(img: Image) -> np.ndarray:
    """Quantize to interleaved uint8, clamping first."""
    q = np.rint(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    return np.ascontiguousarray(np.moveaxis(q, 0, -1))


def save_image(img: Image, path) -> None:
    path = os.fspath(path)
    q = to_bytes(img)
    pil = PILImage.fromarray(q[..., 0] if img.channels == 1 else q)
    ext = os.path.splitext(path)[1].lower()
    fmt = {".png": "PNG", ".ppm": "PPM", ".pgm": "PPM", ".pnm": "PPM"}.get(ext)
    if fmt is None:
        raise ValueError(f"{path}: unsupported extension {ext!r} (use .png or .ppm)")
    pil.save(path, format=fmt)


def _check_kernel_fits(shape, kernel: Kernel2D):
    h, w = shape[-2:]
    if kernel.height >= h or kernel.width >= w:
        # 1x1 kernels are always fine, even on 1-pixel images
        if not (kernel.height == 1 and kernel.width == 1):
            raise ShapeError(
                f"kernel {kernel.height}x{kernel.width} must be smaller than image {h}x{w}"
            )


def correlate_planes(data: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Correlate every 2-D plane of ``data`` (..., H, W) with reflect-101 borders."""
    weights = np.asarray(weights, dtype=np.float64)
    lead = data.shape[:-2]
    planes = data.reshape((-1,) + data.shape[-2:])
    out = np.empty(planes.shape, dtype=np.float64)
    for i, plane in enumerate(planes):
        out[i] = ndimage.correlate(plane, weights, mode="mirror")
    return out.reshape(lead + data.shape[-2:])


def convolve(img: Image, k: Kernel2D, border: str = "reflect") -> Image:
    """Per-channel 2-D correlation with reflect-101 border; same output shape."""
    if border != "reflect":
        raise ValueError(f"unsupported border mode {border!r}")
    _check_kernel_fits(img.shape, k)
    return img.with_data(correlate_planes(img.data, k.weights))


def sobel_gradients(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sobel x/y responses of planar data with reflect-101 border.

    Evaluated as a central difference followed by [1, 2, 1] smoothing, so a
    constant plane gives exactly zero.
    """
    p = np.pad(np.asarray(data, dtype=np.float64), ((0, 0), (1, 1), (1, 1)), mode="reflect")
    dx = p[:, :, 2:] - p[:, :, :-2]
    dy = p[:, 2:, :] - p[:, :-2, :]
    gx = dx[:, :-2, :] + 2.0 * dx[:, 1:-1, :] + dx[:, 2:, :]
    gy = dy[:, :, :-2] + 2.0 * dy[:, :, 1:-1] + dy[:, :, 2:]
    return gx, gy


def sobel_magnitude(img: Image) -> Image:
    gx, gy = sobel_gradients(img.data)
    return img.with_data(np.sqrt(gx * gx + gy * gy))


def extract_patches(img: Image, size: int, stride: int = 1, seed: int = 0, count: int = 1) -> list[Image]:
    """Sample ``count`` square patches at stride-aligned positions (with replacement)."""
    if count <= 0:
        raise ValueError("count must be positive")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if size < 1 or size > min(img.width, img.height):
        raise ShapeError(f"patch size {size} does not fit a {img.height}x{img.width} image")
    ys = np.arange(0, img.height - size + 1, stride)
    xs = np.arange(0, img.width - size + 1, stride)
    rng = np.random.default_rng(seed)
    iy = rng.integers(0, len(ys), size=count)
    ix = rng.integers(0, len(xs), size=count)
    return [
        img.with_data(img.data[:, ys[a]:ys[a] + size, xs[b]:xs[b] + size])
        for a, b in zip(iy, ix)
    ]
