"""Corpus manifests, the degradation x restoration benchmark matrix and its reports."""

from __future__ import annotations

import concurrent.futures
import csv
import json
import logging
import math
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from endorestore.classical import RestoreConfig, restore_classical
from endorestore.degrade import BlurSpec, DegradationRecipe, NoiseSpec, apply_recipe, derive_seed
from endorestore.image import Image, load_image, save_image
from endorestore.metrics import evaluate
from endorestore.synth import synth_images

log = logging.getLogger(__name__)

CSV_FIELDS = ("image_id", "method", "degradation_id", "psnr_db", "ssim", "mse", "edge_loss")
AWGN_LEVELS = (10, 20, 30, 40, 50, 60)
DEBLUR_BLUR = BlurSpec("motion", length=9, angle=37)


@dataclass
class ManifestEntry:
    id: str
    clean_path: str
    split: str = "train"
    recipe: DegradationRecipe | None = None
    degraded_path: str | None = None

    def to_json(self) -> str:
        d = {"id": self.id, "clean_path": self.clean_path, "split": self.split}
        if self.recipe is not None:
            d["recipe"] = self.recipe.to_dict()
        if self.degraded_path is not None:
            d["degraded_path"] = self.degraded_path
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        recipe = DegradationRecipe.from_dict(d["recipe"]) if d.get("recipe") else None
        return cls(d["id"], d["clean_path"], d.get("split", "train"), recipe, d.get("degraded_path"))


@dataclass
class Manifest:
    entries: list = field(default_factory=list)
    root: str = "."

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest ids must be unique")

    def resolve(self, rel: str) -> str:
        return rel if os.path.isabs(rel) else os.path.join(self.root, rel)

    def split(self, name: str) -> list:
        return [e for e in self.entries if e.split == name]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(e.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "Manifest":
        with open(path) as fh:
            entries = [ManifestEntry.from_dict(json.loads(line)) for line in fh if line.strip()]
        return cls(entries, root=str(Path(path).parent))

    def check_files(self) -> None:
        missing = [e.clean_path for e in self.entries if not os.path.exists(self.resolve(e.clean_path))]
        if missing:
            raise FileNotFoundError(f"manifest references missing files: {missing[:5]}")


def assign_splits(n: int, seed: int, fractions=(0.75, 0.25, 0.0)) -> list[str]:
    """Seeded train/val/test labels; default mirrors a 4500/1500 train/val split."""
    if abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {fractions}")
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n)) if fractions[2] > 0 else n - n_train
    labels = ["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val)
    perm = np.random.default_rng(seed).permutation(n)
    out = [""] * n
    for label, i in zip(labels, perm):
        out[i] = label
    return out


def synth_corpus(n: int, size: int, seed: int, out_dir, fractions=(0.75, 0.25, 0.0)):
    """Write ``n`` procedural scenes plus ``manifest.jsonl`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = synth_images(n, size, seed)
    splits = assign_splits(n, seed, fractions)
    entries = []
    width = max(4, len(str(n - 1)))
    for i, (img, split) in enumerate(zip(images, splits)):
        name = f"scene_{i:0{width}d}.png"
        save_image(img, out_dir / name)
        entries.append(ManifestEntry(id=f"scene_{i:0{width}d}", clean_path=name, split=split))
    manifest = Manifest(entries, root=str(out_dir))
    manifest.save(out_dir / "manifest.jsonl")
    return images, manifest


@dataclass(frozen=True)
class GridCell:
    id: str
    steps: tuple
    kind: str
    level: float | None = None

    def recipe(self, master_seed: int) -> DegradationRecipe:
        return DegradationRecipe(self.steps, master_seed)


def default_grid() -> list[GridCell]:
    cells = [GridCell(f"awgn{s}", (NoiseSpec("awgn", sigma=s),), "awgn", s) for s in AWGN_LEVELS]
    cells.append(GridCell("deblur", (DEBLUR_BLUR,), "blur"))
    cells.append(
        GridCell(
            "mixed",
            (
                DEBLUR_BLUR,
                NoiseSpec("speckle", sigma=0.05),
                NoiseSpec("salt_pepper", p=0.01),
                NoiseSpec("poisson", peak=500),
            ),
            "mixed",
        )
    )
    return cells


def grid_by_name(name: str) -> list[GridCell]:
    if name == "default":
        return default_grid()
    if name == "awgn":
        return [c for c in default_grid() if c.kind == "awgn"]
    if name == "sanity":
        return [
            GridCell("awgn25", (NoiseSpec("awgn", sigma=25),), "awgn", 25),
            GridCell("motion9", (BlurSpec("motion", length=9, angle=0),), "blur"),
        ]
    raise ValueError(f"unknown grid {name!r} (choose default, awgn or sanity)")


@dataclass(frozen=True)
class BenchRow:
    image_id: str
    method: str
    degradation_id: str
    psnr_db: float
    ssim: float
    mse: float
    edge_loss: float


@dataclass
class BenchResult:
    rows: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    cells: list = field(default_factory=list)

    def aggregates(self) -> "OrderedDict[tuple, dict]":
        """Arithmetic means per (method, degradation_id), recomputed from the rows."""
        groups: OrderedDict = OrderedDict()
        for r in self.rows:
            groups.setdefault((r.method, r.degradation_id), []).append(r)
        out = OrderedDict()
        for key, rows in groups.items():
            out[key] = {
                "psnr_db": float(np.mean([r.psnr_db for r in rows])),
                "ssim": float(np.mean([r.ssim for r in rows])),
                "mse": float(np.mean([r.mse for r in rows])),
                "edge_loss": float(np.mean([r.edge_loss for r in rows])),
                "n": len(rows),
            }
        return out

    def methods(self) -> list[str]:
        return list(OrderedDict.fromkeys(r.method for r in self.rows))

    def cell_ids(self) -> list[str]:
        if self.cells:
            return [c.id for c in self.cells]
        return list(OrderedDict.fromkeys(r.degradation_id for r in self.rows))


@dataclass(frozen=True)
class MethodSpec:
    """A restoration method: a classical config or the trained network."""

    name: str
    config: RestoreConfig | None = None
    checkpoint: str | None = None


def _thread_count() -> int:
    raw = os.environ.get("IR_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("IR_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


_MODEL_CACHE: dict = {}


def _load_model(path):
    from endorestore.nn.checkpoint import load_checkpoint

    if path not in _MODEL_CACHE:
        _MODEL_CACHE[path] = load_checkpoint(path)
    return _MODEL_CACHE[path]


def _run_method(spec: MethodSpec, degraded: Image, recipe: DegradationRecipe) -> Image:
    if spec.checkpoint is not None:
        from endorestore.nn.train import restore

        return restore(_load_model(spec.checkpoint), degraded)
    cfg = spec.config
    kernel = recipe.blur_kernel() if cfg.needs_kernel else None
    return restore_classical(degraded, cfg, kernel)


def _run_task(task):
    """One (image, cell): degrade once, restore with every method, score vs clean."""
    image_id, clean, cell, cell_seed, methods = task
    recipe = cell.recipe(cell_seed)
    degraded = apply_recipe(clean, recipe)
    rows, errors = [], []
    for spec in methods:
        try:
            out = _run_method(spec, degraded, recipe)
            rep = evaluate(out, clean)
            rows.append(BenchRow(image_id, spec.name, cell.id, rep.psnr, rep.ssim, rep.mse, rep.edge_loss))
        except Exception as exc:  # noqa: BLE001 - failures are isolated per row
            errors.append({"image_id": image_id, "method": spec.name, "degradation_id": cell.id, "error": repr(exc)})
    return rows, errors


def run_bench(images, methods, grid, seed: int = 0, threads: int | None = None) -> BenchResult:
    """Score every method on every (image, grid cell).

    ``images`` is a list of ``(image_id, Image)``.  The degradation seed of each
    task depends only on ``seed`` and the image/cell indices, so serial and
    parallel runs agree.
    """
    if not methods:
        raise ValueError("no restoration methods given")
    if not grid:
        raise ValueError("benchmark grid is empty")
    tasks = []
    for i, (image_id, clean) in enumerate(images):
        for j, cell in enumerate(grid):
            tasks.append((image_id, clean, cell, derive_seed(derive_seed(seed, i), j), tuple(methods)))
    threads = _thread_count() if threads is None else threads
    if threads > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        outputs = [_run_task(t) for t in tasks]
    result = BenchResult(cells=list(grid))
    for rows, errors in outputs:
        result.rows.extend(rows)
        result.errors.extend(errors)
    for err in result.errors:
        log.warning("method failed: %s", err)
    return result


def load_manifest_images(manifest: Manifest, split: str | None = None) -> list:
    manifest.check_files()
    entries = manifest.entries if split is None else manifest.split(split)
    return [(e.id, load_image(manifest.resolve(e.clean_path))) for e in entries]


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def write_csv(result: BenchResult, path) -> None:
    if not result.rows:
        raise ValueError("benchmark result has no rows; nothing to report")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in result.rows:
            w.writerow([r.image_id, r.method, r.degradation_id, _fmt(r.psnr_db), _fmt(r.ssim), _fmt(r.mse), _fmt(r.edge_loss)])


def read_csv(path) -> BenchResult:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                BenchRow(
                    rec["image_id"], rec["method"], rec["degradation_id"],
                    float(rec["psnr_db"]), float(rec["ssim"]), float(rec["mse"]), float(rec["edge_loss"]),
                )
            )
    return BenchResult(rows=rows)


def markdown_table(result: BenchResult) -> str:
    """Methods as rows, one SSIM/PSNR column pair per degradation cell."""
    if not result.rows:
        raise ValueError("benchmark result has no rows; nothing to report")
    agg = result.aggregates()
    cells = result.cell_ids()
    header = ["Method"] + [f"{c} {m}" for c in cells for m in ("SSIM", "PSNR")]
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
    for method in result.methods():
        vals = [method]
        for c in cells:
            a = agg.get((method, c))
            if a is None:
                vals += ["-", "-"]
            else:
                vals += [f"{a['ssim']:.4f}", "inf" if math.isinf(a["psnr_db"]) else f"{a['psnr_db']:.2f}"]
        lines.append("| " + " | ".join(vals) + " |")
    return "\n".join(lines) + "\n"


def report(result: BenchResult, out_dir, fmt=("csv", "markdown"), figures: bool = True) -> dict:
    """Write the requested report files into ``out_dir``; returns {kind: path}."""
    if not result.rows:
        raise ValueError("benchmark result has no rows; nothing to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    if "csv" in fmt:
        write_csv(result, out_dir / "bench.csv")
        written["csv"] = out_dir / "bench.csv"
    if "markdown" in fmt:
        (out_dir / "bench.md").write_text(markdown_table(result))
        written["markdown"] = out_dir / "bench.md"
    if result.errors:
        with open(out_dir / "errors.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=("image_id", "method", "degradation_id", "error"), lineterminator="\n")
            w.writeheader()
            w.writerows(result.errors)
        written["errors"] = out_dir / "errors.csv"
    if figures:
        from endorestore.plotting import plot_bench

        written.update(plot_bench(result, out_dir))
    return written
