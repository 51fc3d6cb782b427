"""Matplotlib figures written next to the benchmark and training reports."""

from __future__ import annotations

import math
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    # fixed metadata keeps repeated renders byte-stable
    "svg.hashsalt": "endorestore",
}


def _awgn_level(cell_id: str):
    m = re.fullmatch(r"awgn(\d+(?:\.\d+)?)", cell_id)
    return float(m.group(1)) if m else None


def plot_bench(result, out_dir) -> dict:
    """PSNR/SSIM vs AWGN sigma curves and a bar chart for the other cells."""
    out_dir = Path(out_dir)
    agg = result.aggregates()
    methods = result.methods()
    cells = result.cell_ids()
    awgn = sorted((lv, c) for c in cells if (lv := _awgn_level(c)) is not None)
    other = [c for c in cells if _awgn_level(c) is None]
    written = {}
    with plt.rc_context(RC):
        if awgn:
            fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.0, 2.8))
            for method in methods:
                pts = [(lv, agg[(method, c)]) for lv, c in awgn if (method, c) in agg]
                if not pts:
                    continue
                xs = [lv for lv, _ in pts]
                ax1.plot(xs, [a["psnr_db"] if math.isfinite(a["psnr_db"]) else float("nan") for _, a in pts],
                         marker="o", ms=3, label=method)
                ax2.plot(xs, [a["ssim"] for _, a in pts], marker="o", ms=3, label=method)
            ax1.set_xlabel(r"AWGN $\sigma$ (8-bit)")
            ax1.set_ylabel("PSNR (dB)")
            ax2.set_xlabel(r"AWGN $\sigma$ (8-bit)")
            ax2.set_ylabel("SSIM")
            ax2.legend(frameon=False, ncol=1, loc="upper right")
            fig.tight_layout()
            path = out_dir / "awgn_curves.png"
            fig.savefig(path, metadata={"Software": None})
            plt.close(fig)
            written["awgn_figure"] = path
        if other:
            fig, ax = plt.subplots(figsize=(3.2 + 0.9 * len(other), 2.8))
            width = 0.8 / max(len(methods), 1)
            for k, method in enumerate(methods):
                vals = [agg.get((method, c), {}).get("psnr_db", float("nan")) for c in other]
                vals = [v if math.isfinite(v) else float("nan") for v in vals]
                ax.bar([i + k * width for i in range(len(other))], vals, width, label=method)
            ax.set_xticks([i + 0.4 - width / 2 for i in range(len(other))])
            ax.set_xticklabels(other)
            ax.set_ylabel("PSNR (dB)")
            ax.legend(frameon=False, fontsize=6)
            fig.tight_layout()
            path = out_dir / "blur_cells.png"
            fig.savefig(path, metadata={"Software": None})
            plt.close(fig)
            written["blur_figure"] = path
    return written


def plot_history(history, path) -> Path:
    """Loss per step, one line per training stage."""
    path = Path(path)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 2.8))
        stages = []
        for row in history:
            if row["stage"] not in stages:
                stages.append(row["stage"])
        for stage in stages:
            pts = [(r["step"], r["loss"]) for r in history if r["stage"] == stage]
            ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=0.8, label=stage)
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.set_yscale("log")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path
