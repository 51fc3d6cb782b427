from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from endorestore.errors import ShapeError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = 1e-4, t: int | None = None) -> AdamState:
    """Bias-corrected Adam update, in place on ``params``.

    Only tensors present in ``grads`` are touched, so BN running buffers (kept
    outside ``params``) are never modified here.
    """
    t = state.t + 1 if t is None else t
    if t < 1:
        raise ValueError("Adam step index must be >= 1")
    c1 = 1.0 - BETA1**t
    c2 = 1.0 - BETA2**t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + EPS)).astype(p.dtype)
    state.t = t
    return state
