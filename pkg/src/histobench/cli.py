"""Command-line entry points: degradation, curation, scorer training and
scoring, evaluation with ranked reports, tiling/stitching, geometry, and the
sampler self-check."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path


from . import degrade, diffusion, iqa_dataset, metrics_fullref, metrics_noref, report, tiler
from .raster import load_image, save_image

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


class ValidationError(ValueError):
    pass


def _require_dir(path, field: str) -> Path:
    if path is None:
        raise ValidationError(f"missing required field: {field}")
    p = Path(path)
    if not p.is_dir():
        raise ValidationError(f"{field}: directory not found: {p}")
    return p


def _pngs(d: Path):
    return sorted(d.glob("*.png"))


def _pool_map(fn, items, threads: int):
    """Ordered map over a worker pool; results are independent of N workers."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _load_config(args):
    """Config file values fill in unset CLI flags (flags win)."""
    if getattr(args, "config", None):
        p = Path(args.config)
        if not p.is_file():
            raise ValidationError(f"config file not found: {p}")
        try:
            cfg = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValidationError(f"config is not valid JSON: {e}") from e
        if not isinstance(cfg, dict):
            raise ValidationError("config must be a JSON object")
        for key, value in cfg.items():
            attr = key.replace("-", "_")
            if not hasattr(args, attr):
                raise ValidationError(f"unknown config field: {key}")
            if getattr(args, attr) is None:
                setattr(args, attr, value)
    if getattr(args, "seed", None) is None:
        args.seed = 0
    if getattr(args, "threads", None) is None:
        args.threads = 1
    if args.threads < 1:
        raise ValidationError("threads must be >= 1")
    return args


# ----------------------------------------------------------------------------


def cmd_degrade(args) -> int:
    hr_dir = _require_dir(args.hr_dir, "hr_dir")
    if args.out_dir is None:
        raise ValidationError("missing required field: out_dir")
    if args.scale is None or int(args.scale) < 1:
        raise ValidationError("scale must be a positive integer")
    recipe_name = args.recipe or "realesrgan"
    try:
        recipe = degrade.get_recipe(recipe_name)
    except FileNotFoundError:
        raise ValidationError(
            f"recipe: not a known preset {sorted(degrade.RECIPES)} or readable file: {recipe_name}"
        ) from None
    paths = _pngs(hr_dir)
    if not paths:
        raise ValidationError(f"hr_dir contains no PNG files: {hr_dir}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scale = int(args.scale)
    seed = int(args.seed)

    def work(item):
        index, path = item
        hr = load_image(path)
        pair = degrade.apply_recipe(hr, recipe, scale, seed + index)
        lr_path = out / f"{path.stem}.png"
        save_image(pair.lr, lr_path)
        degrade.save_trace(pair.recipe_trace, out / f"{path.stem}.trace.json")
        return (str(path), str(lr_path), pair.seed)

    rows = _pool_map(work, list(enumerate(paths)), args.threads)
    with open(out / "pairs.csv", "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hr_path", "lr_path", "seed"])
        w.writerows(rows)
    print(f"degraded {len(rows)} images -> {out}")
    return EXIT_OK


def cmd_curate(args) -> int:
    hr_dir = _require_dir(args.hr_dir, "hr_dir")
    if args.out_dir is None:
        raise ValidationError("missing required field: out_dir")
    blur_types = [args.blur_type] if args.blur_type else list(iqa_dataset.BLUR_TYPES)
    if not _pngs(hr_dir):
        raise ValidationError(f"hr_dir contains no PNG files: {hr_dir}")
    for bt in blur_types:
        if bt not in iqa_dataset.BLUR_TYPES:
            raise ValidationError(f"blur_type must be one of {iqa_dataset.BLUR_TYPES}")
        m = iqa_dataset.curate(hr_dir, bt, args.out_dir)
        print(f"curated {len(m)} {bt}-blur samples -> {args.out_dir}")
    return EXIT_OK


def cmd_train_noref(args) -> int:
    if args.manifest is None or not Path(args.manifest).is_file():
        raise ValidationError(f"manifest file not found: {args.manifest}")
    if args.out is None:
        raise ValidationError("missing required field: out")
    lam = args.lam if args.lam is not None else 1.0
    manifest = iqa_dataset.load_manifest(args.manifest)
    if args.train_frac is not None:
        train, test = iqa_dataset.split_manifest(manifest, args.train_frac, int(args.seed))
    else:
        train, test = manifest, None
    model = metrics_noref.fit_scorer(train, lam)
    metrics_noref.save_model(model, args.out)
    print(f"trained {model.blur_type} scorer on {len(train)} samples -> {args.out}")
    if test is not None:
        ev = metrics_noref.evaluate_scorer(model, test)
        print(f"held-out: mae={ev.mae:.3f} spearman={ev.spearman:.3f} "
              f"ordering={ev.ordering_accuracy:.3f}")
    return EXIT_OK


def cmd_score_noref(args) -> int:
    if args.model is None or not Path(args.model).is_file():
        raise ValidationError(f"model file not found: {args.model}")
    image_dir = _require_dir(args.image_dir, "image_dir")
    paths = _pngs(image_dir)
    if not paths:
        raise ValidationError(f"image_dir contains no PNG files: {image_dir}")
    model = metrics_noref.load_model(args.model)
    scores = _pool_map(
        lambda p: (p.name, metrics_noref.predict_score(model, load_image(p))),
        paths, args.threads,
    )
    lines = ["image,score"] + [f"{name},{score:.4f}" for name, score in scores]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_methods(entries):
    methods = {}
    for entry in entries or []:
        if "=" not in entry:
            raise ValidationError(f"--method must be NAME=DIR, got {entry!r}")
        name, _, d = entry.partition("=")
        methods[name] = _require_dir(d, f"method {name}")
    if not methods:
        raise ValidationError("at least one --method NAME=DIR is required")
    return methods


def cmd_eval(args) -> int:
    hr_dir = _require_dir(args.hr_dir, "hr_dir")
    methods = _parse_methods(args.method)
    mask_dir = Path(args.mask_dir) if args.mask_dir else None
    if mask_dir is not None and not mask_dir.is_dir():
        raise ValidationError(f"mask_dir: directory not found: {mask_dir}")
    registry = report.MetricRegistry()
    noref_models = {}
    for key, path in (("noref_box", args.noref_box_model),
                      ("noref_gaussian", args.noref_gaussian_model)):
        if path:
            if not Path(path).is_file():
                raise ValidationError(f"model file not found: {path}")
            noref_models[key] = metrics_noref.load_model(path)

    hr_stems = {p.stem: p for p in _pngs(hr_dir)}
    if not hr_stems:
        raise ValidationError(f"hr_dir contains no PNG files: {hr_dir}")

    per_image = {}
    for method, mdir in sorted(methods.items()):
        sr_stems = {p.stem: p for p in _pngs(mdir)}
        common = sorted(hr_stems.keys() & sr_stems.keys())
        for stem in sorted(hr_stems.keys() ^ sr_stems.keys()):
            print(f"warning: {method}: unpaired stem {stem!r}", file=sys.stderr)
        if not common:
            raise ValidationError(f"method {method}: no filename stems pair with hr_dir")

        def work(stem, sr_stems=sr_stems):
            hr = load_image(hr_stems[stem])
            sr = load_image(sr_stems[stem])
            row = {
                "psnr": metrics_fullref.psnr(hr, sr),
                "ssim": metrics_fullref.ssim(hr, sr),
                "mse": metrics_fullref.mse(hr, sr),
            }
            if mask_dir is not None:
                mask_path = mask_dir / f"{stem}.png"
                if mask_path.exists():
                    nuc = metrics_fullref.l1_nuclear_metrics(
                        hr, sr, metrics_fullref.load_mask(mask_path))
                    row["l1_texture"] = nuc.l1_texture
                    row["l1_intensity"] = nuc.l1_intensity
            for key, model in noref_models.items():
                row[key] = metrics_noref.predict_score(model, sr)
            return stem, row

        results = _pool_map(work, common, args.threads)
        per_image[method] = {stem: row for stem, row in results}

    rep = report.aggregate(args.dataset or hr_dir.name, per_image)
    if args.external_csv:
        if not Path(args.external_csv).is_file():
            raise ValidationError(f"external CSV not found: {args.external_csv}")
        rep = report.merge_external_metrics(rep, args.external_csv, registry)

    json_text = report.render_json(rep, registry)
    if args.out:
        Path(args.out).write_text(json_text, encoding="utf-8")
        print(f"wrote report {args.out}")
    fmt = args.format or "markdown"
    if fmt != "json" or not args.out:
        sys.stdout.write(report.render_report(rep, fmt, registry))
    return EXIT_OK


def cmd_report(args) -> int:
    if args.report is None or not Path(args.report).is_file():
        raise ValidationError(f"report JSON not found: {args.report}")
    rep = report.report_from_json(Path(args.report).read_text(encoding="utf-8"))
    fmt = args.format or "markdown"
    sys.stdout.write(report.render_report(rep, fmt, report.MetricRegistry()))
    return EXIT_OK


def cmd_tile(args) -> int:
    if args.image is None or not Path(args.image).is_file():
        raise ValidationError(f"image not found: {args.image}")
    if args.out_dir is None:
        raise ValidationError("missing required field: out_dir")
    img = load_image(args.image)
    tile = args.tile if args.tile is not None else tiler.DEFAULT_TILE
    overlap = args.overlap if args.overlap is not None else tiler.DEFAULT_OVERLAP
    try:
        grid = tiler.tile_plan(img.width, img.height, tile, overlap)
    except tiler.TilerError as e:
        raise ValidationError(str(e)) from e
    tiler.write_tiles(img, grid, args.out_dir)
    print(f"wrote {len(grid.rects)} tiles -> {args.out_dir}")
    return EXIT_OK


def cmd_stitch(args) -> int:
    in_dir = _require_dir(args.in_dir, "in_dir")
    if args.out is None:
        raise ValidationError("missing required field: out")
    tiles, grid = tiler.read_tiles(in_dir)
    save_image(tiler.stitch(tiles, grid), args.out)
    print(f"stitched {len(tiles)} tiles -> {args.out}")
    return EXIT_OK


def cmd_geometry(args) -> int:
    if args.lr is None:
        raise ValidationError("missing required field: lr")
    if args.scale is None:
        raise ValidationError("missing required field: scale")
    lr_w = int(args.lr)
    lr_h = int(args.lr_h) if args.lr_h is not None else lr_w
    try:
        g = tiler.inference_geometry(lr_w, lr_h, int(args.scale))
    except tiler.TilerError as e:
        raise ValidationError(str(e)) from e
    print(f"lr {g.lr_w}x{g.lr_h} scale x{g.scale}")
    print(f"target {g.target_w}x{g.target_h}")
    print(f"padded {g.padded_w}x{g.padded_h}")
    print(f"latent {g.latent_w}x{g.latent_h}x{g.latent_channels}")
    return EXIT_OK


def cmd_sampler_check(args) -> int:
    mean = args.target_mean if args.target_mean is not None else 3.0
    std = args.target_std if args.target_std is not None else 0.5
    if std <= 0:
        raise ValidationError("target std must be positive")
    T = args.timesteps if args.timesteps is not None else 1000
    n = args.spaced if args.spaced is not None else 50
    count = args.samples if args.samples is not None else 10000
    sched = diffusion.linear_schedule(int(T))
    sp = diffusion.space_schedule(sched, int(n))
    den = diffusion.analytic_gaussian_denoiser(mean, std**2, sched)
    out = diffusion.sample(den, None, (int(count),), sp, int(args.seed))
    measured_mean = float(out.mean())
    measured_std = float(out.std())
    tol = args.tolerance if args.tolerance is not None else 0.05
    ok = abs(measured_mean - mean) <= tol and abs(measured_std - std) <= tol
    print(json.dumps({
        "target_mean": mean, "target_std": std,
        "measured_mean": measured_mean, "measured_std": measured_std,
        "timesteps": int(T), "spaced": int(n), "samples": int(count),
        "tolerance": tol, "pass": ok,
    }, sort_keys=True))
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_RUNTIME


# ----------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--threads", type=int, help="worker count (default 1)")
    p.add_argument("--config", help="JSON config; CLI flags override its fields")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="histobench")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="synthesize LR images from HR inputs")
    p.add_argument("--hr-dir")
    p.add_argument("--out-dir")
    p.add_argument("--recipe", help="realesrgan | codeformer | path to recipe JSON")
    p.add_argument("--scale", type=int)
    _add_common(p)
    p.set_defaults(fn=cmd_degrade)

    p = sub.add_parser("curate", help="build the blur-scored IQA dataset")
    p.add_argument("--hr-dir")
    p.add_argument("--out-dir")
    p.add_argument("--blur-type", choices=list(iqa_dataset.BLUR_TYPES))
    _add_common(p)
    p.set_defaults(fn=cmd_curate)

    p = sub.add_parser("train-noref", help="fit the blind blur scorer")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--lam", type=float, help="ridge strength (default 1.0)")
    p.add_argument("--train-frac", type=float,
                   help="optional source-level split; held-out metrics printed")
    _add_common(p)
    p.set_defaults(fn=cmd_train_noref)

    p = sub.add_parser("score-noref", help="score images with a trained model")
    p.add_argument("--model")
    p.add_argument("--image-dir")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(fn=cmd_score_noref)

    p = sub.add_parser("eval", help="run full-reference evaluation and rank methods")
    p.add_argument("--hr-dir")
    p.add_argument("--mask-dir")
    p.add_argument("--method", action="append", metavar="NAME=DIR")
    p.add_argument("--external-csv", help="method,image,metric,value rows")
    p.add_argument("--noref-box-model")
    p.add_argument("--noref-gaussian-model")
    p.add_argument("--dataset")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--format", choices=["markdown", "json", "csv"])
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("report", help="re-render a JSON report")
    p.add_argument("--report")
    p.add_argument("--format", choices=["markdown", "json", "csv"])
    _add_common(p)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("tile", help="cut an image into overlapping tiles")
    p.add_argument("--image")
    p.add_argument("--out-dir")
    p.add_argument("--tile", type=int)
    p.add_argument("--overlap", type=int)
    _add_common(p)
    p.set_defaults(fn=cmd_tile)

    p = sub.add_parser("stitch", help="blend tiles back into one image")
    p.add_argument("--in-dir")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(fn=cmd_stitch)

    p = sub.add_parser("geometry", help="print diffusion inference geometry")
    p.add_argument("--lr", type=int, help="LR width (and height unless --lr-h)")
    p.add_argument("--lr-h", type=int)
    p.add_argument("--scale", type=int)
    _add_common(p)
    p.set_defaults(fn=cmd_geometry)

    p = sub.add_parser("sampler-check", help="validate the spaced DDPM sampler")
    p.add_argument("--target-mean", type=float)
    p.add_argument("--target-std", type=float)
    p.add_argument("--timesteps", type=int)
    p.add_argument("--spaced", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--tolerance", type=float)
    _add_common(p)
    p.set_defaults(fn=cmd_sampler_check)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _load_config(args)
        return args.fn(args)
    except (ValidationError, iqa_dataset.CurationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:  # runtime failures
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
