"""Command-line interface: ``cooc <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from cooc import data_io
from cooc.classify import (
    ClassModelSet,
    evaluate_error,
    features_batch,
    map_classify_batch,
    sweep_group_sizes,
    train_class_models,
)
from cooc.domain import IndexDomain, SignificanceMap, stack_maps
from cooc.optimizer import FitConfig, fit
from cooc.sparsity import TexturizeParams, significance_map, texturize_batch, threshold_for_density
from cooc.wavelet import WaveletSpec, dwt2_forward

logger = logging.getLogger("cooc")

FIT_KEYS = ("size", "bins", "max_iter", "tol", "init", "seed", "z_mode", "swap_passes")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------

def _maps_from_images(images, args) -> list[SignificanceMap]:
    maps = []
    for img in images:
        if args.domain == "wavelet":
            pyr = dwt2_forward(img, WaveletSpec(args.wavelet, args.levels))
            values, domain = pyr.to_flat(), pyr.domain()
        else:
            values, domain = img.samples, IndexDomain(img.width, img.height)
        t = args.threshold if args.threshold is not None else threshold_for_density(values, args.density)
        maps.append(significance_map(values, t, domain))
    return maps


def _load_maps(args, split: int = 0):
    """Maps and optional labels from whichever input option was given."""
    if getattr(args, "synthetic", None):
        spec = data_io.SyntheticSpec.from_dict(json.loads(Path(args.synthetic).read_text()))
        return data_io.gen_synthetic(spec, split=split), None
    if getattr(args, "maps", None):
        maps, manifest = data_io.read_dataset(args.maps)
        return maps, manifest.labels
    if getattr(args, "pgm_dir", None):
        if (args.threshold is None) == (args.density is None):
            raise UsageError("give exactly one of --threshold or --density")
        return _maps_from_images(data_io.read_pgm_dir(args.pgm_dir), args), None
    raise UsageError("no input given (use --synthetic, --maps or --pgm-dir)")


def _fit_config(args) -> FitConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(json.loads(Path(args.config).read_text()))
    for key in FIT_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    if "size" not in values:
        raise UsageError("--size is required")
    try:
        return FitConfig(**{k: v for k, v in values.items() if k in FIT_KEYS})
    except (TypeError, ValueError) as err:
        raise UsageError(str(err)) from err


def _echo_run(out_path: Path, args, **extra) -> None:
    run = {k: v for k, v in vars(args).items() if k != "func"}
    run.update(extra)
    (out_path.parent / "run.json").write_text(json.dumps(run, indent=1, sort_keys=True, default=str) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    config = _fit_config(args)
    maps, _ = _load_maps(args)
    model, trace = fit(maps, config)
    out = Path(args.out)
    data_io.save_model(model, out)
    trace_path = Path(args.trace) if args.trace else out.with_suffix(".trace.csv")
    trace_path.write_text(trace.to_csv())
    _echo_run(out, args, fit_config=asdict(config))
    print(f"groups={model.grouping.n_groups} train_bpp={model.meta['train_bpp']:.6f}")
    return 0


def cmd_sweep(args) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",")]
    except ValueError as err:
        raise UsageError(f"bad --sizes: {args.sizes}") from err
    if args.size is None:
        args.size = max(2, sizes[0])
    config = _fit_config(args)
    if args.synthetic:
        train, _ = _load_maps(args, split=0)
        test, _ = _load_maps(args, split=1)
    else:
        if not args.test:
            raise UsageError("--test is required with --maps")
        train, _ = _load_maps(args)
        test, _ = data_io.read_dataset(args.test)
    try:
        result = sweep_group_sizes(train, test, sizes, config)
    except ValueError as err:
        raise UsageError(str(err)) from err
    out = Path(args.out)
    out.write_text(result.to_csv())
    _echo_run(out, args, fit_config=asdict(config))
    print(f"best size (held-out) = {result.best_size()}")
    return 0


def cmd_texturize(args) -> int:
    pixels = data_io.read_idx_image_array(args.images)
    labels = np.array(data_io.read_idx_labels(args.labels)) if args.labels else None
    if labels is not None and labels.size != len(pixels):
        raise data_io.FormatError("image and label files differ in length")
    index = np.arange(len(pixels))
    if args.per_class is not None:
        if labels is None:
            raise UsageError("--per-class needs --labels")
        index = np.concatenate([np.flatnonzero(labels == d)[: args.per_class] for d in range(10)])
        index.sort()
    if args.count is not None:
        index = index[: args.count]
    params = TexturizeParams(args.offset, args.threshold, args.seed)
    members = np.stack([texturize_batch(pixels[i:i + 1] / 255.0, params, int(i))[0] for i in index])
    rows, cols = pixels.shape[1:]
    domain = IndexDomain(cols, rows)
    maps = [SignificanceMap(domain, m) for m in members]
    manifest = data_io.DatasetManifest(
        "idx", len(maps), domain, None if labels is None else labels[index].tolist(),
        {"images": str(args.images), "indices": index.tolist(), "offset": args.offset,
         "threshold": args.threshold, "seed": args.seed})
    out = Path(args.out_dir)
    data_io.write_dataset(out, maps, manifest)
    _echo_run(out / "maps.bin", args)
    print(f"maps={len(maps)} density={members.mean():.4f}")
    return 0


def cmd_train_digits(args) -> int:
    config = _fit_config(args)
    maps, labels = _load_maps(args)
    if labels is None:
        raise data_io.FormatError("training maps carry no labels")
    Y = stack_maps(maps)
    n_classes = args.classes or int(max(labels)) + 1
    models, traces = train_class_models(Y, labels, config, maps[0].domain, n_classes, args.threads)
    out = Path(args.out)
    data_io.save_model_set(models.models, out, {"fit_config": asdict(config)})
    with out.with_suffix(".trace.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "iteration", "bits"])
        for d, trace in enumerate(traces):
            for i, bits in enumerate(trace.objective):
                writer.writerow([d, i, repr(bits)])
    _echo_run(out, args, fit_config=asdict(config))
    print(f"classes={n_classes} groups={models.n_groups}")
    return 0


def cmd_classify(args) -> int:
    models = ClassModelSet(data_io.load_model_set(args.models))
    maps, labels = _load_maps(args)
    Y = stack_maps(maps, models.domain)
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if args.mode == "features":
            feats = features_batch(Y, models)
            writer.writerow(["label"] + [f"d{d}_k{k}" for d in range(models.n_classes)
                                         for k in range(models.n_groups)])
            for i, row in enumerate(feats):
                label = "" if labels is None else labels[i]
                writer.writerow([label] + [repr(float(v)) for v in row])
        else:
            pred = map_classify_batch(Y, models)
            writer.writerow(["id", "predicted", "true"])
            for i, p in enumerate(pred):
                writer.writerow([i, int(p), "" if labels is None else labels[i]])
    _echo_run(out, args)
    if args.mode == "map" and labels is not None:
        print(f"error rate: {evaluate_error(pred, labels):.4f}")
    return 0


def cmd_encode_cost(args) -> int:
    model = data_io.load_model(args.model)
    maps, _ = _load_maps(args, split=args.split)
    Y = stack_maps(maps, model.domain)
    bits = model.map_bits(Y)
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["map", "bits", "bpp"])
        for i, b in enumerate(bits):
            writer.writerow([i, repr(float(b)), repr(float(b) / model.domain.size)])
    _echo_run(out, args)
    print(f"total_bits={bits.sum():.3f} bpp={bits.sum() / Y.size:.6f}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_inputs(p, pgm=True):
    p.add_argument("--synthetic", help="synthetic corpus spec (JSON)")
    p.add_argument("--maps", help="map dataset directory (maps.bin + manifest.json)")
    if pgm:
        p.add_argument("--pgm-dir", help="directory of binary PGM images")
        p.add_argument("--domain", choices=("pixel", "wavelet"), default="wavelet")
        p.add_argument("--wavelet", choices=("haar", "db2"), default="haar")
        p.add_argument("--levels", type=int, default=2)
        p.add_argument("--threshold", type=float)
        p.add_argument("--density", type=float)


def _add_fit_options(p, size_required=False):
    p.add_argument("--config", help="JSON file of fit options; flags take precedence")
    p.add_argument("--size", type=int, required=size_required)
    p.add_argument("--bins", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--init", choices=("random", "square-blocks"))
    p.add_argument("--seed", type=int)
    p.add_argument("--z-mode", dest="z_mode", choices=("quantized", "empirical"))
    p.add_argument("--swap-passes", dest="swap_passes", type=int)
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cooc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a co-occurrence model")
    _add_inputs(p)
    _add_fit_options(p)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--trace", help="trace CSV path (default: <out>.trace.csv)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="bit rate against group size")
    _add_inputs(p)
    p.add_argument("--test", help="held-out map dataset (with --maps)")
    _add_fit_options(p)
    p.add_argument("--sizes", required=True, help="comma-separated group sizes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("texturize", help="random digits and their significance maps")
    p.add_argument("--images", required=True)
    p.add_argument("--labels")
    p.add_argument("--offset", type=float, default=1.0)
    p.add_argument("--threshold", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int)
    p.add_argument("--per-class", dest="per_class", type=int)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_texturize)

    p = sub.add_parser("train-digits", help="one model per class")
    _add_inputs(p, pgm=False)
    _add_fit_options(p)
    p.add_argument("--classes", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_digits)

    p = sub.add_parser("classify", help="MAP classification or feature export")
    _add_inputs(p, pgm=False)
    p.add_argument("--models", required=True)
    p.add_argument("--mode", choices=("map", "features"), default="map")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("encode-cost", help="per-map code lengths under a model")
    _add_inputs(p)
    p.add_argument("--model", required=True)
    p.add_argument("--split", type=int, default=0, help="synthetic sample split")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode_cost)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"cooc {args.command}: error: {err}", file=sys.stderr)
        return 1
    except (data_io.FormatError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError,
            KeyError, ValueError) as err:
        print(f"cooc {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
