"""Non-learned restoration baselines.

All methods process channels independently and consume no randomness.  The
denoisers keep their output inside the input's range; the deconvolvers clamp
to [0, 1] at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from endorestore.errors import ShapeError
from endorestore.image import Image, Kernel2D, convolve, correlate_planes


def gaussian_kernel(sigma: float) -> Kernel2D:
    """Normalized 2-D Gaussian truncated at +-3 sigma."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = max(int(math.ceil(3 * sigma)), 1)
    x = np.arange(-r, r + 1)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return Kernel2D(k / k.sum())


def gaussian_denoise(img: Image, sigma: float = 1.0) -> Image:
    return convolve(img, gaussian_kernel(sigma))


def _reflect_pad(data: np.ndarray, r: int) -> np.ndarray:
    if r >= min(data.shape[-2:]):
        raise ShapeError(f"window radius {r} does not fit a {data.shape[-2]}x{data.shape[-1]} image")
    return np.pad(data, [(0, 0)] * (data.ndim - 2) + [(r, r), (r, r)], mode="reflect")


def bilateral_denoise(img: Image, sigma_s: float = 2.0, sigma_r: float = 0.1) -> Image:
    """Spatial Gaussian x range Gaussian weighted mean over a +-3 sigma_s window."""
    if not (sigma_s > 0 and sigma_r > 0):
        raise ValueError("sigma_s and sigma_r must be positive")
    r = max(int(math.ceil(3 * sigma_s)), 1)
    x = img.data
    xp = _reflect_pad(x, r)
    h, w = x.shape[-2:]
    num = np.zeros_like(x)
    den = np.zeros_like(x)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            ws = math.exp(-(dy * dy + dx * dx) / (2.0 * sigma_s * sigma_s))
            nb = xp[:, r + dy:r + dy + h, r + dx:r + dx + w]
            d = nb - x
            wt = ws * np.exp(-(d * d) / (2.0 * sigma_r * sigma_r))
            num += wt * nb
            den += wt
    return img.with_data(num / den)


def estimate_noise_sigma(plane: np.ndarray) -> float:
    """Noise std from the median absolute deviation of a Laplacian residual."""
    lap = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
    res = ndimage.correlate(plane, lap, mode="mirror")
    mad = np.median(np.abs(res - np.median(res)))
    # Laplacian of white noise has std sqrt(20) * sigma
    return float(1.4826 * mad / math.sqrt(20.0))


def nlm_denoise(
    img: Image,
    patch_radius: int = 2,
    search_radius: int = 5,
    h: float = 0.08,
    sigma: float | None = None,
) -> Image:
    """Pixelwise non-local means.

    Patch distance is the mean squared difference over the patch.  Weights are
    ``exp(-max(d2 - 2 sigma^2, 0) / h^2)``; ``sigma`` defaults to a per-channel
    MAD estimate.  The center pixel gets the largest neighbor weight.
    """
    if patch_radius < 1 or search_radius < 1:
        raise ValueError("patch and search radii must be >= 1")
    if not h > 0:
        raise ValueError("h must be positive")
    pad = patch_radius + search_radius
    if pad >= min(img.height, img.width):
        raise ShapeError(f"NLM window radius {pad} exceeds a {img.height}x{img.width} image")
    size = 2 * patch_radius + 1
    out = np.empty_like(img.data)
    hh, ww = img.height, img.width
    for c, plane in enumerate(img.data):
        s = estimate_noise_sigma(plane) if sigma is None else float(sigma)
        xp = np.pad(plane, pad, mode="reflect")
        core = xp[search_radius:search_radius + hh + 2 * patch_radius,
                  search_radius:search_radius + ww + 2 * patch_radius]
        num = np.zeros((hh, ww))
        den = np.zeros((hh, ww))
        wmax = np.zeros((hh, ww))
        for dy in range(-search_radius, search_radius + 1):
            for dx in range(-search_radius, search_radius + 1):
                if dy == 0 and dx == 0:
                    continue
                shifted = xp[search_radius + dy:search_radius + dy + hh + 2 * patch_radius,
                             search_radius + dx:search_radius + dx + ww + 2 * patch_radius]
                d2 = ndimage.uniform_filter((core - shifted) ** 2, size, mode="constant")
                d2 = d2[patch_radius:patch_radius + hh, patch_radius:patch_radius + ww]
                wt = np.exp(-np.maximum(d2 - 2.0 * s * s, 0.0) / (h * h))
                num += wt * shifted[patch_radius:patch_radius + hh, patch_radius:patch_radius + ww]
                den += wt
                np.maximum(wmax, wt, out=wmax)
        # an isolated pixel with no similar neighbors keeps its own value
        self_w = np.where(wmax > 0, wmax, 1.0)
        out[c] = (num + self_w * plane) / (den + self_w)
    return img.with_data(out)


def anisotropic_diffuse(img: Image, iterations: int = 10, K: float = 0.1, dt: float = 0.2) -> Image:
    """Perona-Malik diffusion with conductance exp(-(grad/K)^2) and no-flux borders."""
    if not 0 < dt <= 0.25:
        raise ValueError(f"dt must lie in (0, 0.25], got {dt}")
    if not K > 0:
        raise ValueError("K must be positive")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    u = img.data.copy()
    for _ in range(iterations):
        dn = np.diff(u, axis=1)  # u[i+1] - u[i]
        de = np.diff(u, axis=2)
        fn = np.exp(-(dn / K) ** 2) * dn
        fe = np.exp(-(de / K) ** 2) * de
        upd = np.zeros_like(u)
        upd[:, :-1, :] += fn
        upd[:, 1:, :] -= fn
        upd[:, :, :-1] += fe
        upd[:, :, 1:] -= fe
        u += dt * upd
    return img.with_data(u)


def _grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :, :-1] = u[:, :, 1:] - u[:, :, :-1]
    gy[:, :-1, :] = u[:, 1:, :] - u[:, :-1, :]
    return gx, gy


def _div(px, py):
    # negative adjoint of _grad
    d = np.zeros_like(px)
    d[:, :, 0] = px[:, :, 0]
    d[:, :, 1:-1] = px[:, :, 1:-1] - px[:, :, :-2]
    d[:, :, -1] = -px[:, :, -2]
    d[:, 0, :] += py[:, 0, :]
    d[:, 1:-1, :] += py[:, 1:-1, :] - py[:, :-2, :]
    d[:, -1, :] += -py[:, -2, :]
    return d


def tv_denoise(img: Image, lam: float = 10.0, iterations: int = 100, tau: float = 0.125) -> Image:
    """Chambolle's dual projection for min_u (lam/2)||u - f||^2 + TV(u)."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    f = img.data
    px = np.zeros_like(f)
    py = np.zeros_like(f)
    for _ in range(iterations):
        gx, gy = _grad(_div(px, py) - lam * f)
        norm = 1.0 + tau * np.sqrt(gx * gx + gy * gy)
        px = (px + tau * gx) / norm
        py = (py + tau * gy) / norm
    return img.with_data(f - _div(px, py) / lam)


def _require_normalized(k: Kernel2D):
    if not k.is_normalized():
        raise ValueError("blur kernel must be non-negative and sum to 1")


def richardson_lucy(img: Image, k: Kernel2D, iterations: int = 30, floor: float = 1e-8) -> Image:
    if np.any(img.data < 0):
        raise ValueError("Richardson-Lucy needs a non-negative image")
    _require_normalized(k)
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    f = img.data
    u = np.maximum(f, floor)
    flipped = k.weights[::-1, ::-1]
    for _ in range(iterations):
        est = correlate_planes(u, k.weights)
        u = u * correlate_planes(f / np.maximum(est, floor), flipped)
    return img.with_data(np.clip(u, 0.0, 1.0))


def psf_to_otf(weights: np.ndarray, shape) -> np.ndarray:
    """Zero-pad a centered kernel to ``shape`` and move its center to (0, 0)."""
    kh, kw = weights.shape
    big = np.zeros(shape)
    big[:kh, :kw] = weights
    big = np.roll(big, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return np.fft.fft2(big)


def edge_taper(plane: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Blend borders toward the circularly blurred image to hide the periodic seam."""
    h, w = plane.shape
    otf = psf_to_otf(weights, (h, w))
    blurred = np.real(np.fft.ifft2(np.fft.fft2(plane) * otf))

    def ramp(proj, n):
        p = np.zeros(n)
        p[: len(proj)] = proj
        ac = np.real(np.fft.ifft(np.abs(np.fft.fft(p)) ** 2))
        return 1.0 - ac / ac.max()

    alpha = np.outer(ramp(weights.sum(axis=1), h), ramp(weights.sum(axis=0), w))
    # ramp is 0 at the borders (index 0 and wrap-around) and ~1 in the interior
    return alpha * plane + (1.0 - alpha) * blurred


def wiener_filter_response(k: Kernel2D, shape, nsr: float) -> np.ndarray:
    otf = psf_to_otf(k.weights, shape)
    return np.conj(otf) / (np.abs(otf) ** 2 + nsr)


def _mirror_extend(plane: np.ndarray) -> np.ndarray:
    """Whole-sample symmetric extension; its periodization is the reflect-101 border."""
    e = np.concatenate([plane, plane[-2:0:-1]], axis=0)
    return np.concatenate([e, e[:, -2:0:-1]], axis=1)


def _axis_symmetric(weights: np.ndarray) -> bool:
    return bool(np.allclose(weights, weights[::-1, :], atol=1e-12) and np.allclose(weights, weights[:, ::-1], atol=1e-12))


def wiener_deconvolve(img: Image, k: Kernel2D, nsr: float = 1e-3, boundary: str = "auto") -> Image:
    """Fixed-NSR Wiener filter ``conj(H) / (|H|^2 + nsr)`` applied per channel.

    ``boundary`` picks how the periodic FFT model meets the image border:
    ``"mirror"`` deconvolves the symmetric extension (exact for kernels that
    are symmetric under axis flips, since the forward blur uses reflect-101),
    ``"taper"`` blends the borders toward the circularly blurred image.
    ``"auto"`` uses mirror for axis-symmetric kernels and taper otherwise.
    """
    if nsr < 0:
        raise ValueError("nsr must be non-negative")
    _require_normalized(k)
    if boundary == "auto":
        boundary = "mirror" if _axis_symmetric(k.weights) else "taper"
    if boundary not in ("mirror", "taper"):
        raise ValueError(f"unknown boundary mode {boundary!r}")
    h, w = img.shape[1:]
    if boundary == "mirror" and min(h, w) < 2:
        boundary = "taper"
    out = np.empty_like(img.data)
    for c, plane in enumerate(img.data):
        if boundary == "mirror":
            ext = _mirror_extend(plane)
            resp = wiener_filter_response(k, ext.shape, nsr)
            out[c] = np.real(np.fft.ifft2(np.fft.fft2(ext) * resp))[:h, :w]
        else:
            tapered = edge_taper(plane, k.weights) if k.weights.size > 1 else plane
            resp = wiener_filter_response(k, (h, w), nsr)
            out[c] = np.real(np.fft.ifft2(np.fft.fft2(tapered) * resp))
    return img.with_data(np.clip(out, 0.0, 1.0))


METHODS = ("gaussian", "bilateral", "nlm", "anisotropic", "tv", "richardson_lucy", "wiener")
ALIASES = {"rl": "richardson_lucy", "ad": "anisotropic", "pm": "anisotropic"}

DEFAULTS = {
    "identity": {},
    "gaussian": {"sigma": 1.0},
    "bilateral": {"sigma_s": 2.0, "sigma_r": 0.15},
    "nlm": {"patch_radius": 2, "search_radius": 5, "h": 0.08},
    "anisotropic": {"iterations": 15, "K": 0.08, "dt": 0.2},
    "tv": {"lam": 12.0, "iterations": 100},
    "richardson_lucy": {"iterations": 30},
    "wiener": {"nsr": 1e-3},
}

DECONVOLVERS = ("richardson_lucy", "wiener")


@dataclass(frozen=True)
class RestoreConfig:
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        name = ALIASES.get(self.method, self.method)
        if name not in DEFAULTS:
            raise ValueError(f"unknown method {self.method!r}; choose from {sorted(DEFAULTS)}")
        unknown = set(self.params) - set(DEFAULTS[name])
        if unknown:
            raise ValueError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
        merged = {**DEFAULTS[name], **self.params}
        for key, value in merged.items():
            if key in ("iterations", "patch_radius", "search_radius"):
                if int(value) < 1:
                    raise ValueError(f"{name}.{key} must be >= 1")
            elif key != "nsr" and not value > 0:
                raise ValueError(f"{name}.{key} must be positive")
        object.__setattr__(self, "method", name)
        object.__setattr__(self, "params", merged)

    @property
    def needs_kernel(self) -> bool:
        return self.method in DECONVOLVERS

    def label(self) -> str:
        return self.method


def _coerce(key, value):
    if key in ("iterations", "patch_radius", "search_radius"):
        return int(value)
    return float(value)


def parse_params(pairs) -> dict:
    """``["k=v", ...]`` -> dict with numeric values."""
    out = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {pair!r}")
        out[key.strip()] = _coerce(key.strip(), value)
    return out


def restore_classical(img: Image, cfg: RestoreConfig, kernel: Kernel2D | None = None) -> Image:
    p = cfg.params
    m = cfg.method
    if m == "identity":
        return img
    if m == "gaussian":
        return gaussian_denoise(img, p["sigma"])
    if m == "bilateral":
        return bilateral_denoise(img, p["sigma_s"], p["sigma_r"])
    if m == "nlm":
        return nlm_denoise(img, int(p["patch_radius"]), int(p["search_radius"]), p["h"])
    if m == "anisotropic":
        return anisotropic_diffuse(img, int(p["iterations"]), p["K"], p["dt"])
    if m == "tv":
        return tv_denoise(img, p["lam"], int(p["iterations"]))
    kernel = Kernel2D.identity() if kernel is None else kernel
    if m == "richardson_lucy":
        return richardson_lucy(img, kernel, int(p["iterations"]))
    return wiener_deconvolve(img, kernel, p["nsr"])
