"""Two-stage training loop and inference."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from endorestore.errors import NumericError, ShapeError
from endorestore.image import Image
from endorestore.nn.losses import stage_loss
from endorestore.nn.model import DEPTH, ModelParams, backward, forward
from endorestore.nn.optim import AdamState, adam_step

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("step", "stage", "loss", "ssim", "psnr", "l2", "edge")


@dataclass
class TrainConfig:
    base_width: int = 16
    lr: float = 1e-4
    batch: int = 1
    steps: int = 1000
    stage: str = "coarse"
    w_ssim: float = 1.0
    w_psnr: float = 1.0
    w_l2: float = 1.0
    w_edge: float = 1.0
    psnr_cap: float = 50.0
    seed: int = 0
    freeze_bn: bool = False

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if min(self.w_ssim, self.w_psnr, self.w_l2, self.w_edge) < 0:
            raise ValueError("loss weights must be non-negative")
        if not self.psnr_cap > 0:
            raise ValueError("psnr_cap must be positive")
        if self.stage not in ("coarse", "fine"):
            raise ValueError(f"stage must be 'coarse' or 'fine', got {self.stage!r}")
        if self.batch < 1 or self.steps < 1:
            raise ValueError("batch and steps must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: ModelParams
    history: list = field(default_factory=list)
    optimizer: AdamState | None = None


def _as_array(img) -> np.ndarray:
    return img.data if isinstance(img, Image) else np.asarray(img)


def _batch_order(n: int, steps: int, batch: int, seed: int) -> np.ndarray:
    """Indices for every step: concatenated seeded permutations of the corpus."""
    rng = np.random.default_rng(seed)
    need = steps * batch
    order = []
    while sum(len(o) for o in order) < need:
        order.append(rng.permutation(n))
    return np.concatenate(order)[:need].reshape(steps, batch)


def train_stage(m: ModelParams, corpus, cfg: TrainConfig, optimizer: AdamState | None = None) -> TrainResult:
    """Train ``m`` in place on ``(degraded, clean)`` pairs.

    The pair order comes from ``cfg.seed`` alone, and gradients of a batch are
    computed in one pass, so two runs with equal inputs give equal histories.
    """
    if len(corpus) == 0:
        raise ValueError("training corpus is empty")
    xs = np.stack([_as_array(d) for d, _ in corpus]).astype(m.dtype)
    ys = np.stack([_as_array(c) for _, c in corpus]).astype(m.dtype)
    if xs.shape != ys.shape:
        raise ShapeError("degraded and clean images must have equal shapes")
    div = 2**DEPTH
    if xs.shape[2] % div or xs.shape[3] % div:
        raise ShapeError(f"training patches must have sides divisible by {div}, got {xs.shape[2:]}")

    optimizer = optimizer if optimizer is not None else AdamState()
    history = []
    order = _batch_order(len(corpus), cfg.steps, cfg.batch, cfg.seed)
    # frozen BN trains through the running statistics and leaves them untouched
    mode = "eval" if cfg.freeze_bn else "train"
    for step, idx in enumerate(order, start=1):
        x, y = xs[idx], ys[idx]
        pred, tape = forward(m, x, mode, return_tape=True)
        loss, dpred, terms = stage_loss(pred, y, cfg)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite loss at {cfg.stage} step {step}: terms={terms}")
        grads = backward(m, tape, dpred)
        bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
        if bad:
            raise NumericError(f"non-finite gradients at {cfg.stage} step {step} in {bad[:5]}")
        adam_step(m.params, grads, optimizer, cfg.lr)
        row = {"step": optimizer.t, "stage": cfg.stage, "loss": loss}
        row.update(terms)
        history.append(row)
        if step % 100 == 0:
            log.info("%s step %d loss %.5f", cfg.stage, step, loss)
    return TrainResult(m, history, optimizer)


def write_history(history, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS, restval="", extrasaction="ignore")
        writer.writeheader()
        for row in history:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_history(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["step"] = int(row["step"])
        for k in HISTORY_FIELDS[2:]:
            row[k] = float(row[k]) if row.get(k) else None
    return rows


def restore(m: ModelParams, img: Image) -> Image:
    """Eval-mode restoration of one image, reflect-padded to a multiple of 16."""
    if img.channels != 3:
        raise ShapeError(f"the network expects 3 channels, got {img.channels}")
    div = 2**DEPTH
    h, w = img.height, img.width
    ph, pw = (-h) % div, (-w) % div
    x = img.data
    if ph or pw:
        mode = "reflect" if ph < h and pw < w else "symmetric"
        x = np.pad(x, ((0, 0), (0, ph), (0, pw)), mode=mode)
    out = forward(m, x[None].astype(m.dtype), "eval")[0, :, :h, :w]
    return Image(np.clip(out.astype(np.float64), 0.0, 1.0), img.peak)
