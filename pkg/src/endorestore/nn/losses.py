"""Training objectives with analytic gradients.

Coarse stage: ``w_ssim (1 - SSIM) + w_psnr (1 - min(PSNR, cap) / cap) + w_l2 MSE``.
Fine stage:   ``w_ssim (1 - SSIM) + w_edge edge_loss``.
Both are averaged over the batch and use peak 1.0.
"""

from __future__ import annotations

import math

import numpy as np

from endorestore.errors import ShapeError
from endorestore.metrics import edge_loss_with_grad, ssim_with_grad

MSE_FLOOR = 1e-10


def _check(pred, target):
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ in shape")


def loss_total(pred, target, cfg):
    """Returns ``(loss, grad, terms)`` where ``terms`` holds the batch-mean term values."""
    _check(pred, target)
    p = pred.astype(np.float64)
    t = target.astype(np.float64)
    n = p.shape[0]
    per = p[0].size
    diff = p - t
    mse = (diff * diff).reshape(n, -1).mean(axis=1)

    ssim, dssim = ssim_with_grad(p, t)
    cap = cfg.psnr_cap
    floored = np.maximum(mse, MSE_FLOOR)
    psnr = 10.0 * np.log10(1.0 / floored)
    psnr_term = 1.0 - np.minimum(psnr, cap) / cap

    # d psnr_term / d mse, zero where the cap or the floor is active
    active = (psnr < cap) & (mse > MSE_FLOOR)
    dpsnr_dmse = np.where(active, 10.0 / (cap * math.log(10.0) * floored), 0.0)
    dmse = (2.0 / per) * diff

    w_s, w_p, w_l = cfg.w_ssim, cfg.w_psnr, cfg.w_l2
    grad = (-w_s * dssim + (w_p * dpsnr_dmse + w_l)[:, None, None, None] * dmse) / n
    terms = {
        "ssim": float(np.mean(1.0 - ssim)),
        "psnr": float(np.mean(psnr_term)),
        "l2": float(np.mean(mse)),
    }
    loss = w_s * terms["ssim"] + w_p * terms["psnr"] + w_l * terms["l2"]
    return loss, grad.astype(pred.dtype), terms


def loss_fine(pred, target, cfg):
    _check(pred, target)
    p = pred.astype(np.float64)
    t = target.astype(np.float64)
    n = p.shape[0]
    ssim, dssim = ssim_with_grad(p, t)
    edge, dedge = edge_loss_with_grad(p, t)
    grad = (-cfg.w_ssim * dssim + cfg.w_edge * dedge) / n
    terms = {"ssim": float(np.mean(1.0 - ssim)), "edge": float(np.mean(edge))}
    loss = cfg.w_ssim * terms["ssim"] + cfg.w_edge * terms["edge"]
    return loss, grad.astype(pred.dtype), terms


def stage_loss(pred, target, cfg):
    if cfg.stage == "coarse":
        return loss_total(pred, target, cfg)
    if cfg.stage == "fine":
        return loss_fine(pred, target, cfg)
    raise ValueError(f"unknown stage {cfg.stage!r}")
