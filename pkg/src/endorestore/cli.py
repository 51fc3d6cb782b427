"""``ir`` command line.

Exit status: 0 on success, 1 on user error (bad flags, missing files, invalid
parameters), 2 on internal error.  Every subcommand prints its resolved
configuration as a ``config: {...}`` JSON line before doing any work.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from endorestore import bench, classical, color, degrade, metrics
from endorestore.errors import RestorationError
from endorestore.image import load_image, save_image

log = logging.getLogger("endorestore")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _print_config(args) -> None:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "func"}
    print("config: " + json.dumps(cfg, sort_keys=True, default=str))


def _fmt(v: float) -> str:
    return bench._fmt(v)


def _parse_motion(text):
    try:
        length, angle = (float(t) for t in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--motion expects LENGTH,ANGLE, got {text!r}") from exc
    return degrade.BlurSpec("motion", length=length, angle=angle)


def _recipe_from_args(args) -> degrade.DegradationRecipe:
    if args.recipe:
        text = Path(args.recipe[1:]).read_text() if args.recipe.startswith("@") else args.recipe
        r = degrade.DegradationRecipe.from_json(text)
        return degrade.DegradationRecipe(r.steps, args.seed if args.seed is not None else r.master_seed)
    steps = []
    # blur before noise, as in the forward model blurred * x + noise
    if args.motion:
        steps.append(_parse_motion(args.motion))
    if args.disk is not None:
        steps.append(degrade.BlurSpec("disk", radius=args.disk))
    if args.awgn is not None:
        steps.append(degrade.NoiseSpec("awgn", sigma=args.awgn))
    if args.speckle is not None:
        steps.append(degrade.NoiseSpec("speckle", sigma=args.speckle))
    if args.salt_pepper is not None:
        steps.append(degrade.NoiseSpec("salt_pepper", p=args.salt_pepper))
    if args.poisson is not None:
        steps.append(degrade.NoiseSpec("poisson", peak=args.poisson))
    return degrade.DegradationRecipe(tuple(steps), args.seed or 0)


def cmd_synth(args) -> int:
    _, manifest = bench.synth_corpus(args.n, args.size, args.seed, args.out)
    print(f"wrote {len(manifest.entries)} images and manifest.jsonl to {args.out}")
    return 0


def cmd_degrade(args) -> int:
    recipe = _recipe_from_args(args)
    img = load_image(args.input)
    save_image(degrade.apply_recipe(img, recipe), args.out)
    print(f"recipe: {recipe.to_json()}")
    return 0


def cmd_restore(args) -> int:
    img = load_image(args.input)
    if args.checkpoint:
        from endorestore.nn.checkpoint import load_checkpoint
        from endorestore.nn.train import restore

        out = restore(load_checkpoint(args.checkpoint), img)
    else:
        cfg = classical.RestoreConfig(args.method, classical.parse_params(args.param))
        kernel = None
        if args.motion:
            kernel = _parse_motion(args.motion).kernel()
        elif args.disk is not None:
            kernel = degrade.disk_kernel(args.disk)
        out = classical.restore_classical(img, cfg, kernel)
        print(f"method: {cfg.method} {json.dumps(cfg.params, sort_keys=True)}")
    save_image(out, args.out)
    return 0


def cmd_wb(args) -> int:
    img = load_image(args.input)
    if args.estimator == "grayworld":
        gains = color.estimate_wb_grayworld(img)
    else:
        gains = color.estimate_wb_whitepatch(img, args.percentile)
    matrix = color.load_matrix(args.matrix) if args.matrix else None
    pipe = color.ColorPipeline(gains, matrix if matrix is not None else color.ColorPipeline().raw_to_xyz, args.srgb)
    save_image(color.apply_pipeline(img, pipe), args.out)
    print("gains: " + " ".join(_fmt(g) for g in pipe.wb_gains))
    return 0


def cmd_metrics(args) -> int:
    ref = load_image(args.ref)
    test = load_image(args.test)
    rep = metrics.evaluate(test, ref)
    print(f"psnr={_fmt(rep.psnr)}")
    print(f"ssim={_fmt(rep.ssim)}")
    print(f"mse={_fmt(rep.mse)}")
    print(f"edge_loss={_fmt(rep.edge_loss)}")
    return 0


def _images_from_args(args, split=None):
    if args.manifest:
        manifest = bench.Manifest.load(args.manifest)
        return bench.load_manifest_images(manifest, split)
    if not args.synth:
        raise UsageError("give --synth N or --manifest PATH")
    out = Path(args.out)
    corpus_dir = out / "corpus" if out.suffix == "" else out.parent / "corpus"
    _, manifest = bench.synth_corpus(args.synth, args.size, args.seed, corpus_dir)
    return bench.load_manifest_images(manifest, split)


def cmd_train(args) -> int:
    from endorestore.nn import data
    from endorestore.nn.checkpoint import save_checkpoint
    from endorestore.nn.model import build_model
    from endorestore.nn.train import TrainConfig, train_stage, write_history
    from endorestore.plotting import plot_history

    images = [img for _, img in _images_from_args(args, split="train" if args.manifest else None)]
    model = build_model(args.base_width, args.seed)
    history = []
    optimizer = None
    stages = [("coarse", args.steps), ("fine", args.fine_steps)]
    for k, (stage, steps) in enumerate(stages):
        if steps <= 0:
            continue
        pairs = data.make_pairs(images, args.patch, args.per_image, stage, args.seed + k, args.wb_target)
        cfg = TrainConfig(base_width=args.base_width, lr=args.lr, batch=args.batch, steps=steps,
                          stage=stage, seed=args.seed + k)
        res = train_stage(model, pairs, cfg, optimizer)
        optimizer = res.optimizer
        history.extend(res.history)
        print(f"{stage}: {steps} steps, final loss {res.history[-1]['loss']:.5f}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out, optimizer)
    hist_path = Path(args.history) if args.history else out.with_suffix(".history.csv")
    write_history(history, hist_path)
    if history:
        plot_history(history, hist_path.with_suffix(".png"))
    print(f"checkpoint: {out}")
    print(f"history: {hist_path}")
    return 0


def _method_specs(args) -> list:
    names = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not names and not args.checkpoint:
        raise UsageError("--methods is empty")
    per_method = {}
    for item in args.param or ():
        key, _, value = item.partition("=")
        method, dot, pname = key.partition(".")
        if not dot:
            raise UsageError(f"bench --param expects method.key=value, got {item!r}")
        method = classical.ALIASES.get(method, method)
        per_method.setdefault(method, []).append(f"{pname}={value}")
    specs = []
    for name in names:
        cfg = classical.RestoreConfig(name)
        cfg = classical.RestoreConfig(cfg.method, classical.parse_params(per_method.get(cfg.method)))
        specs.append(bench.MethodSpec(cfg.method, config=cfg))
    if args.checkpoint:
        specs.append(bench.MethodSpec("unet", checkpoint=str(args.checkpoint)))
    return specs


def cmd_bench(args) -> int:
    specs = _method_specs(args)
    grid = bench.grid_by_name(args.grid)
    images = _images_from_args(args, split=args.split)
    result = bench.run_bench(images, specs, grid, seed=args.seed, threads=args.threads)
    written = bench.report(result, args.out, figures=not args.no_figures)
    print(f"rows: {len(result.rows)} errors: {len(result.errors)}")
    for kind, path in written.items():
        print(f"{kind}: {path}")
    return 0


def cmd_report(args) -> int:
    result = bench.read_csv(args.csv)
    fmts = tuple(f.strip() for f in args.format.split(","))
    for f in fmts:
        if f not in ("csv", "markdown"):
            raise UsageError(f"unknown report format {f!r}")
    written = bench.report(result, args.out, fmts, figures=not args.no_figures)
    for kind, path in written.items():
        print(f"{kind}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ir", description="Synthetic endoscopy degradation, restoration and benchmarking.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a procedural corpus with a manifest")
    s.add_argument("--n", type=int, default=20)
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("degrade", help="apply noise/blur to an image")
    s.add_argument("--in", dest="input", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--awgn", type=float, help="Gaussian noise std in 8-bit units")
    s.add_argument("--speckle", type=float, help="multiplicative noise std")
    s.add_argument("--salt-pepper", type=float, help="per-pixel corruption probability")
    s.add_argument("--poisson", type=float, help="photon count at sample value 1.0")
    s.add_argument("--motion", help="LENGTH,ANGLE motion blur")
    s.add_argument("--disk", type=float, help="defocus disk radius")
    s.add_argument("--recipe", help="recipe JSON, or @file")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_degrade)

    s = sub.add_parser("restore", help="restore an image with a classical method or a checkpoint")
    s.add_argument("--in", dest="input", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--method", default="gaussian")
    s.add_argument("--param", action="append", metavar="KEY=VALUE")
    s.add_argument("--motion", help="LENGTH,ANGLE kernel for deconvolution")
    s.add_argument("--disk", type=float, help="disk radius kernel for deconvolution")
    s.add_argument("--checkpoint", type=Path)
    s.set_defaults(func=cmd_restore)

    s = sub.add_parser("wb", help="white balance and render to sRGB")
    s.add_argument("--in", dest="input", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--estimator", choices=("grayworld", "whitepatch"), default="grayworld")
    s.add_argument("--percentile", type=float, default=0.99)
    s.add_argument("--matrix", type=Path, help="file with 9 numbers: raw->XYZ matrix, row-major")
    s.add_argument("--srgb", action="store_true", help="apply the sRGB transfer curve")
    s.set_defaults(func=cmd_wb)

    s = sub.add_parser("metrics", help="PSNR/SSIM/MSE/edge loss of --test against --ref")
    s.add_argument("--ref", type=Path, required=True)
    s.add_argument("--test", type=Path, required=True)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("train", help="two-stage training of the residual UNet")
    s.add_argument("--synth", type=int, help="train on N procedural scenes")
    s.add_argument("--manifest", type=Path)
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--patch", type=int, default=64)
    s.add_argument("--per-image", type=int, default=4)
    s.add_argument("--steps", type=int, default=500, help="coarse-stage steps")
    s.add_argument("--fine-steps", type=int, default=100)
    s.add_argument("--batch", type=int, default=4)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--base-width", type=int, default=16)
    s.add_argument("--wb-target", action="store_true", help="supervise against gray-world balanced targets")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, required=True, help="checkpoint path")
    s.add_argument("--history", type=Path, help="loss-history CSV (default: next to the checkpoint)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("bench", help="run the degradation x method matrix and write reports")
    s.add_argument("--synth", type=int)
    s.add_argument("--manifest", type=Path)
    s.add_argument("--split", choices=("train", "val", "test"))
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--methods", default="identity,gaussian,bilateral,nlm,anisotropic,tv,rl,wiener")
    s.add_argument("--param", action="append", metavar="METHOD.KEY=VALUE")
    s.add_argument("--checkpoint", type=Path, help="also score a trained network as method 'unet'")
    s.add_argument("--grid", default="default")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, help="worker processes (default: IR_THREADS, 0 = auto)")
    s.add_argument("--no-figures", action="store_true")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("report", help="rebuild markdown/figures from a bench CSV")
    s.add_argument("--csv", type=Path, required=True)
    s.add_argument("--format", default="csv,markdown")
    s.add_argument("--no-figures", action="store_true")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    _print_config(args)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RestorationError, ValueError, FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
