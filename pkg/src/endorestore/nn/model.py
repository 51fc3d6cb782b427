"""Depth-4 residual UNet with batch normalization.

Encoder level ``l`` has ``base_width * 2**l`` channels, the bottleneck
``16 * base_width``.  A residual block is conv3x3 -> BN -> ReLU -> conv3x3 -> BN,
added to the input (through a 1x1 projection when the channel count changes)
and followed by ReLU.  Each decoder level upsamples 2x (nearest), applies a
3x3 conv, concatenates the encoder skip and runs a residual block.  A final
1x1 conv maps to 3 channels.  The output is the restored image itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from endorestore.errors import NumericError, ShapeError
from endorestore.nn import layers as L

DEPTH = 4
HE_SLOPE = np.sqrt(5.0)


def level_widths(base_width: int) -> list[int]:
    return [base_width * 2**lv for lv in range(DEPTH)]


def _block_specs(prefix, cin, cout):
    specs = [
        (f"{prefix}.conv1.w", (cout, cin, 3, 3)),
        (f"{prefix}.conv1.b", (cout,)),
        (f"{prefix}.bn1.gamma", (cout,)),
        (f"{prefix}.bn1.beta", (cout,)),
        (f"{prefix}.conv2.w", (cout, cout, 3, 3)),
        (f"{prefix}.conv2.b", (cout,)),
        (f"{prefix}.bn2.gamma", (cout,)),
        (f"{prefix}.bn2.beta", (cout,)),
    ]
    if cin != cout:
        specs += [(f"{prefix}.proj.w", (cout, cin, 1, 1)), (f"{prefix}.proj.b", (cout,))]
    return specs


def param_specs(base_width: int, in_channels: int = 3, out_channels: int = 3) -> list[tuple[str, tuple]]:
    """Ordered (name, shape) table of every learnable tensor."""
    widths = level_widths(base_width)
    specs = []
    cin = in_channels
    for lv, w in enumerate(widths):
        specs += _block_specs(f"enc{lv}", cin, w)
        cin = w
    specs += _block_specs("bott", cin, 16 * base_width)
    cin = 16 * base_width
    for lv in reversed(range(DEPTH)):
        w = widths[lv]
        specs += [(f"up{lv}.w", (w, cin, 3, 3)), (f"up{lv}.b", (w,))]
        specs += _block_specs(f"dec{lv}", 2 * w, w)
        cin = w
    specs += [("out.w", (out_channels, cin, 1, 1)), ("out.b", (out_channels,))]
    return specs


def buffer_specs(base_width: int) -> list[tuple[str, tuple]]:
    out = []
    for name, shape in param_specs(base_width):
        if name.endswith(".gamma"):
            stem = name[: -len(".gamma")]
            out += [(f"{stem}.running_mean", shape), (f"{stem}.running_var", shape)]
    return out


@dataclass
class ModelParams:
    base_width: int
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            self.base_width,
            {k: v.astype(dtype) for k, v in self.params.items()},
            {k: v.astype(dtype) for k, v in self.buffers.items()},
        )

    def copy(self) -> "ModelParams":
        return self.astype(next(iter(self.params.values())).dtype)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype


def build_model(base_width: int = 16, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Seeded He-uniform conv weights; zero biases and BN shifts; unit BN scales.

    Weights are drawn from U(-b, b) with ``b = sqrt(6 / ((1 + a^2) fan_in))``
    and leaky slope ``a = sqrt(5)``, i.e. ``b = 1 / sqrt(fan_in)``.  The full
    ReLU gain overshoots here because every residual add doubles the variance.
    """
    if base_width < 4:
        raise ValueError(f"base_width must be >= 4, got {base_width}")
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_specs(base_width):
        if name.endswith(".w"):
            fan_in = shape[1] * shape[2] * shape[3]
            bound = np.sqrt(6.0 / ((1.0 + HE_SLOPE**2) * fan_in))
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        elif name.endswith(".gamma"):
            params[name] = np.ones(shape, dtype=dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    buffers = {
        name: (np.ones(shape, dtype=dtype) if name.endswith("running_var") else np.zeros(shape, dtype=dtype))
        for name, shape in buffer_specs(base_width)
    }
    return ModelParams(base_width, params, buffers)


def _block_forward(m: ModelParams, prefix, x, train, tape):
    p, bufs = m.params, m.buffers
    h, c1 = L.conv_forward(x, p[f"{prefix}.conv1.w"], p[f"{prefix}.conv1.b"], 1)
    h, b1 = L.batchnorm_forward(h, p[f"{prefix}.bn1.gamma"], p[f"{prefix}.bn1.beta"],
                                bufs[f"{prefix}.bn1.running_mean"], bufs[f"{prefix}.bn1.running_var"], train)
    h, r1 = L.relu_forward(h)
    h, c2 = L.conv_forward(h, p[f"{prefix}.conv2.w"], p[f"{prefix}.conv2.b"], 1)
    h, b2 = L.batchnorm_forward(h, p[f"{prefix}.bn2.gamma"], p[f"{prefix}.bn2.beta"],
                                bufs[f"{prefix}.bn2.running_mean"], bufs[f"{prefix}.bn2.running_var"], train)
    if f"{prefix}.proj.w" in p:
        skip, cp = L.conv_forward(x, p[f"{prefix}.proj.w"], p[f"{prefix}.proj.b"], 0)
    else:
        skip, cp = x, None
    out, r2 = L.relu_forward(h + skip)
    tape.append((prefix, (c1, b1, r1, c2, b2, cp, r2)))
    return out


def _block_backward(prefix, cache, dout, grads):
    c1, b1, r1, c2, b2, cp, r2 = cache
    ds = L.relu_backward(dout, r2)
    if cp is not None:
        dx, grads[f"{prefix}.proj.w"], grads[f"{prefix}.proj.b"] = L.conv_backward(ds, cp)
    else:
        dx = ds
    dh, grads[f"{prefix}.bn2.gamma"], grads[f"{prefix}.bn2.beta"] = L.batchnorm_backward(ds, b2)
    dh, grads[f"{prefix}.conv2.w"], grads[f"{prefix}.conv2.b"] = L.conv_backward(dh, c2)
    dh = L.relu_backward(dh, r1)
    dh, grads[f"{prefix}.bn1.gamma"], grads[f"{prefix}.bn1.beta"] = L.batchnorm_backward(dh, b1)
    dh, grads[f"{prefix}.conv1.w"], grads[f"{prefix}.conv1.b"] = L.conv_backward(dh, c1)
    return dx + dh


def check_input(x: np.ndarray):
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError(f"expected input of shape (N, 3, H, W), got {x.shape}")
    div = 2**DEPTH
    if x.shape[2] % div or x.shape[3] % div:
        raise ShapeError(f"spatial size {x.shape[2:]} must be divisible by {div}")


def forward(m: ModelParams, x: np.ndarray, mode: str = "eval", return_tape: bool = False):
    """Run the network on an ``(N, 3, H, W)`` batch.

    ``mode="train"`` normalizes with batch statistics and updates the BN
    running buffers; ``mode="eval"`` uses the buffers.  Output is unclamped.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    check_input(x)
    train = mode == "train"
    p = m.params
    x = np.asarray(x, dtype=m.dtype)
    tape = []
    skips = []
    for lv in range(DEPTH):
        x = _block_forward(m, f"enc{lv}", x, train, tape)
        skips.append(x)
        x, pc = L.maxpool_forward(x)
        tape.append((f"pool{lv}", pc))
    x = _block_forward(m, "bott", x, train, tape)
    for lv in reversed(range(DEPTH)):
        x, _ = L.upsample_forward(x)
        x, uc = L.conv_forward(x, p[f"up{lv}.w"], p[f"up{lv}.b"], 1)
        tape.append((f"up{lv}", uc))
        x, split = L.concat_forward(x, skips[lv])
        tape.append((f"cat{lv}", split))
        x = _block_forward(m, f"dec{lv}", x, train, tape)
    out, oc = L.conv_forward(x, p["out.w"], p["out.b"], 0)
    tape.append(("out", oc))
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite values in network output")
    return (out, tape) if return_tape else out


def backward(m: ModelParams, tape: list, dout: np.ndarray) -> dict:
    """Gradients of every parameter given d(loss)/d(output)."""
    grads = {}
    tape = list(tape)
    dskips = {}

    def pop(expected):
        name, cache = tape.pop()
        assert name == expected, (name, expected)
        return cache

    d, grads["out.w"], grads["out.b"] = L.conv_backward(dout, pop("out"))
    for lv in range(DEPTH):
        d = _block_backward(f"dec{lv}", pop(f"dec{lv}"), d, grads)
        d, dskips[lv] = L.concat_backward(d, pop(f"cat{lv}"))
        d, grads[f"up{lv}.w"], grads[f"up{lv}.b"] = L.conv_backward(d, pop(f"up{lv}"))
        d = L.upsample_backward(d)
    d = _block_backward("bott", pop("bott"), d, grads)
    for lv in reversed(range(DEPTH)):
        d = L.maxpool_backward(d, pop(f"pool{lv}"))
        d = d + dskips[lv]
        d = _block_backward(f"enc{lv}", pop(f"enc{lv}"), d, grads)
    return grads
