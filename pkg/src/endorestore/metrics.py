"""Full-reference quality measures: MSE, PSNR, windowed SSIM and Sobel edge loss.

The array-level helpers (``ssim_with_grad``, ``edge_loss_with_grad``) work on
batched ``(N, C, H, W)`` arrays and return analytic gradients; the training
losses are built on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from endorestore.errors import ShapeError
from endorestore.image import SOBEL_X, SOBEL_Y, Image, sobel_gradients

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _same_shape(a: Image, b: Image):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def mse(a: Image, b: Image) -> float:
    _same_shape(a, b)
    d = a.data - b.data
    return float(np.mean(d * d))


def psnr_from_mse(m: float, peak: float = 1.0) -> float:
    if m == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / m)


def psnr(a: Image, b: Image, peak: float | None = None) -> float:
    """``10 log10(peak^2 / mse)``; ``inf`` for identical images."""
    peak = a.peak if peak is None else peak
    if not peak > 0:
        raise ValueError("peak must be positive")
    return psnr_from_mse(mse(a, b), peak)


def gaussian_window_1d(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


_G = gaussian_window_1d()
_R = SSIM_WINDOW // 2


def _filter_valid(x: np.ndarray) -> np.ndarray:
    """Separable Gaussian window over the last two axes, 'valid' region only."""
    y = ndimage.correlate1d(x, _G, axis=-2, mode="constant")
    y = ndimage.correlate1d(y, _G, axis=-1, mode="constant")
    return y[..., _R:-_R, _R:-_R]


def _filter_valid_adjoint(y: np.ndarray) -> np.ndarray:
    pad = [(0, 0)] * (y.ndim - 2) + [(_R, _R), (_R, _R)]
    x = np.pad(y, pad)
    x = ndimage.correlate1d(x, _G, axis=-2, mode="constant")
    return ndimage.correlate1d(x, _G, axis=-1, mode="constant")


def _check_ssim_size(shape):
    if min(shape[-2:]) < SSIM_WINDOW:
        raise ShapeError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {shape[-2:]}")


def ssim_map(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> np.ndarray:
    _check_ssim_size(a.shape)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu_a, mu_b = _filter_valid(a), _filter_valid(b)
    var_a = _filter_valid(a * a) - mu_a * mu_a
    var_b = _filter_valid(b * b) - mu_b * mu_b
    cov = _filter_valid(a * b) - mu_a * mu_b
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))


def ssim(a: Image, b: Image, peak: float | None = None) -> float:
    """Mean local SSIM over the valid 11x11 Gaussian-window positions and channels."""
    _same_shape(a, b)
    peak = a.peak if peak is None else peak
    return float(np.mean(ssim_map(a.data, b.data, peak)))


def ssim_with_grad(a: np.ndarray, b: np.ndarray, peak: float = 1.0):
    """Per-sample SSIM of ``(N, C, H, W)`` arrays and d(ssim_n)/d(a_n)."""
    _check_ssim_size(a.shape)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu_a, mu_b = _filter_valid(a), _filter_valid(b)
    e_aa, e_bb, e_ab = _filter_valid(a * a), _filter_valid(b * b), _filter_valid(a * b)
    a1 = 2 * mu_a * mu_b + c1
    a2 = 2 * (e_ab - mu_a * mu_b) + c2
    b1 = mu_a**2 + mu_b**2 + c1
    b2 = (e_aa - mu_a**2) + (e_bb - mu_b**2) + c2
    s = a1 * a2 / (b1 * b2)
    count = np.prod(s.shape[1:])
    values = s.reshape(s.shape[0], -1).mean(axis=1)

    inv = 1.0 / (b1 * b2)
    d_mu = 2 * mu_b * a2 * inv - 2 * mu_b * a1 * inv - 2 * mu_a * s / b1 + 2 * mu_a * s / b2
    d_eaa = -s / b2
    d_eab = 2 * a1 * inv
    d_mu, d_eaa, d_eab = (g / count for g in (d_mu, d_eaa, d_eab))
    grad = _filter_valid_adjoint(d_mu) + 2 * a * _filter_valid_adjoint(d_eaa) + b * _filter_valid_adjoint(d_eab)
    return values, grad


def _sobel_pair(x: np.ndarray):
    xp = np.pad(x, [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)], mode="reflect")
    h, w = x.shape[-2:]
    gx = np.zeros_like(x)
    gy = np.zeros_like(x)
    for dy in range(3):
        for dx in range(3):
            win = xp[..., dy:dy + h, dx:dx + w]
            if SOBEL_X[dy, dx]:
                gx += SOBEL_X[dy, dx] * win
            if SOBEL_Y[dy, dx]:
                gy += SOBEL_Y[dy, dx] * win
    return gx, gy


def _sobel_adjoint(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    h, w = gx.shape[-2:]
    gp = np.zeros(gx.shape[:-2] + (h + 2, w + 2))
    for dy in range(3):
        for dx in range(3):
            contrib = SOBEL_X[dy, dx] * gx + SOBEL_Y[dy, dx] * gy
            gp[..., dy:dy + h, dx:dx + w] += contrib
    # fold the reflect-101 border back onto the source pixels
    rows = gp[..., 1:-1, :].copy()
    rows[..., 1, :] += gp[..., 0, :]
    rows[..., h - 2, :] += gp[..., h + 1, :]
    out = rows[..., 1:-1].copy()
    out[..., 1] += rows[..., 0]
    out[..., w - 2] += rows[..., w + 1]
    return out


def edge_loss(a: Image, b: Image) -> float:
    """Mean absolute difference of Sobel gradient magnitudes."""
    _same_shape(a, b)
    ax, ay = sobel_gradients(a.data)
    bx, by = sobel_gradients(b.data)
    return float(np.mean(np.abs(np.hypot(ax, ay) - np.hypot(bx, by))))


def edge_loss_with_grad(a: np.ndarray, b: np.ndarray):
    """Per-sample edge loss of ``(N, C, H, W)`` arrays and its gradient w.r.t. ``a``."""
    if min(a.shape[-2:]) < 2:
        raise ShapeError("edge loss needs at least 2x2 images")
    ax, ay = _sobel_pair(a)
    bx, by = _sobel_pair(b)
    mag_a = np.sqrt(ax * ax + ay * ay)
    diff = mag_a - np.sqrt(bx * bx + by * by)
    n = a.shape[0]
    count = diff[0].size
    values = np.abs(diff).reshape(n, -1).mean(axis=1)
    g = np.sign(diff) / count
    safe = np.where(mag_a > 0, mag_a, 1.0)
    scale = np.where(mag_a > 0, g / safe, 0.0)
    return values, _sobel_adjoint(scale * ax, scale * ay)


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    mse: float
    edge_loss: float


def evaluate(restored: Image, reference: Image) -> MetricReport:
    return MetricReport(
        psnr=psnr(restored, reference),
        ssim=ssim(restored, reference),
        mse=mse(restored, reference),
        edge_loss=edge_loss(restored, reference),
    )
