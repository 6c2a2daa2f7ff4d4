"""Command-line entry point.

Subcommands mirror the experiment granularity: synth (build a simulated
corpus), extract (dataset -> patch cache), xval (full 5x2 protocol,
optionally sweeping patch sizes or the activation/pooling grid), train
(one fold, for debugging), predict (attribute new page images), and
score (evaluate a saved model against a labeled cache).

Options may come from a key=value config file via --config; explicit
flags win. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiment
from .cache import PatchSet, read_cache, write_cache
from .dataset import build_patchset, scan_dataset
from .errors import (
    DegenerateImageError,
    DegenerateProjectionError,
    EmptyDocumentError,
    FileFormatError,
    InputShapeError,
    InsufficientDataError,
    PageSpecError,
    PoisonedGradientError,
    PoisonedTrainingError,
)
from .evaluate import predict_letters, score, vote_page
from .folds import FoldPlan, make_fold_plan
from .glyphs import ExtractOptions
from .images import load_image, save_image
from .model import Model
from .preprocess import ResidualParams
from .synth import CameraProfile, PageSpec, generate_corpus
from .train import TrainConfig, train_fold

USAGE_ERROR, DATA_ERROR, NUMERICAL_ERROR = 1, 2, 3

_DATA_ERRORS = (
    FileNotFoundError,
    FileExistsError,
    NotADirectoryError,
    InsufficientDataError,
    DegenerateImageError,
    DegenerateProjectionError,
    FileFormatError,
    InputShapeError,
    EmptyDocumentError,
    PageSpecError,
)
_NUMERICAL_ERRORS = (PoisonedTrainingError, PoisonedGradientError)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage problems; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_with(message))

    def exit_with(self, message) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return USAGE_ERROR


def _add_residual_flags(p):
    p.add_argument("--alpha", type=float, default=0.6,
                   help="flat-region threshold factor (default 0.6)")
    p.add_argument("--beta", type=float, default=1.2,
                   help="edge-region threshold factor (default 1.2)")


def _add_extract_flags(p):
    p.add_argument("--min-area", type=int, default=9, help="smallest component pixel area kept")
    p.add_argument("--max-area", type=int, default=6000, help="largest component pixel area kept")
    p.add_argument("--threshold", default="auto", help="binarization threshold: 'auto' (Otsu) or 0-255")
    p.add_argument("--letter", default=None,
                   help="keep only glyphs the template classifier assigns to this letter")


def _add_train_flags(p):
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.001, help="initial Adam learning rate")
    p.add_argument("--decay", type=float, default=0.0005, help="learning-rate decay per step")
    p.add_argument("--weight-decay", type=float, default=0.0, help="optional L2 penalty (off by default)")
    p.add_argument("--activation", default="relu", choices=["relu", "tanh", "elu", "prelu"])
    p.add_argument("--pool", default="max", choices=["max", "avg"])
    p.add_argument("--val-fraction", type=float, default=0.1)


def build_parser() -> _Parser:
    parser = _Parser(prog="printerid", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic print-and-capture corpus")
    p.add_argument("--config", default=None, help="key=value config file; flags override")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--printers", type=int, default=4)
    p.add_argument("--pages", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tilt", type=float, default=0.0, help="camera tilt in degrees")
    p.add_argument("--illumination", type=float, default=1.0)
    p.add_argument("--blur", type=float, default=0.9)
    p.add_argument("--sensor-noise", type=float, default=4.0)
    p.add_argument("--distance-factor", type=float, default=0.7)
    p.add_argument("--glyph-height", type=int, default=18)
    p.add_argument("--margin", type=int, default=18)
    p.add_argument("--line-spacing", type=int, default=8)
    p.add_argument("--page-width", type=int, default=560)
    p.add_argument("--page-height", type=int, default=760)
    p.add_argument("--chars-per-page", type=int, default=240)
    p.add_argument("--force", action="store_true", help="overwrite an existing corpus directory")
    p.set_defaults(run=cmd_synth)

    p = sub.add_parser("extract", help="extract two-channel letter patches into a PTPC cache")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True, help="dataset root (<printer_id>/<page>.png)")
    p.add_argument("--out", required=True, help="patch cache file to write")
    p.add_argument("--patch-size", type=int, default=30)
    p.add_argument("--jobs", type=int, default=1)
    _add_residual_flags(p)
    _add_extract_flags(p)
    p.set_defaults(run=cmd_extract)

    p = sub.add_parser("xval", help="run the full 5x2 cross-validation protocol")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patch-size", type=int, default=30)
    p.add_argument("--patch-sizes", default=None, help="comma list, e.g. 22,24,26,28,30,32 (sweep)")
    p.add_argument("--activations", default=None, help="comma list, e.g. relu,tanh (grid)")
    p.add_argument("--pools", default=None, help="comma list, e.g. max,avg (grid)")
    p.add_argument("--jobs", type=int, default=1, help="parallel folds; 1 = strict sequential")
    _add_train_flags(p)
    _add_residual_flags(p)
    _add_extract_flags(p)
    p.set_defaults(run=cmd_xval)

    p = sub.add_parser("train", help="train a single fold from a patch cache (debugging)")
    p.add_argument("--config", default=None)
    p.add_argument("--cache", required=True, help="PTPC patch cache")
    p.add_argument("--out", required=True, help="fold output directory")
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--plan", default=None, help="fold plan file; derived from the cache when absent")
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    _add_residual_flags(p)
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("predict", help="attribute page images with a saved model")
    p.add_argument("--config", default=None)
    p.add_argument("--model", required=True)
    p.add_argument("--images", nargs="+", required=True, help="page image files (PNG/PGM/PPM)")
    p.add_argument("--out", default=None, help="report file (default: stdout)")
    p.add_argument("--patch-size", type=int, default=None,
                   help="must match the model's patch size when given")
    p.add_argument("--class-names", default=None, help="file with one printer name per line")
    p.add_argument("--dump-filters", default=None, help="write the first-layer filter grid PNG here")
    _add_residual_flags(p)
    _add_extract_flags(p)
    p.set_defaults(run=cmd_predict)

    p = sub.add_parser("score", help="evaluate a saved model against a labeled patch cache")
    p.add_argument("--config", default=None)
    p.add_argument("--model", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--out", default=None, help="report file (default: stdout)")
    p.add_argument("--class-names", default=None)
    _add_residual_flags(p)
    p.set_defaults(run=cmd_score)

    return parser


def _config_file_argv(path: str) -> list[str]:
    """Translate a key=value file into flag tokens (inserted before real
    flags, so explicit flags override)."""
    tokens: list[str] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        flag = "--" + key.strip().replace("_", "-")
        value = value.strip()
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                tokens.append(flag)
        else:
            tokens.extend([flag, value])
    return tokens


def _parse_threshold(text: str) -> int | None:
    if text == "auto":
        return None
    try:
        value = int(text)
    except ValueError:
        raise ValueError(f"--threshold must be 'auto' or an integer, got {text!r}") from None
    if not 0 <= value <= 255:
        raise ValueError(f"--threshold must lie in [0, 255], got {value}")
    return value


def _extract_opts(args) -> ExtractOptions:
    return ExtractOptions(
        threshold=_parse_threshold(args.threshold),
        min_area=args.min_area,
        max_area=args.max_area,
        letter_filter=args.letter,
    )


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr0=args.lr,
        decay=args.decay,
        weight_decay=args.weight_decay,
        patch_size=args.patch_size,
        activation=args.activation,
        pool=args.pool,
        val_fraction=args.val_fraction,
        seed=args.seed,
        letter=args.letter,
    )


def _resolved(args, skip=("run", "config")) -> dict[str, str]:
    return {k: str(v) for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_synth(args) -> int:
    spec = PageSpec(
        text="placeholder",
        glyph_height=args.glyph_height,
        margin=args.margin,
        line_spacing=args.line_spacing,
        page_width=args.page_width,
        page_height=args.page_height,
    )
    camera = CameraProfile(
        tilt_degrees=args.tilt,
        illumination_scale=args.illumination,
        blur_sigma=args.blur,
        sensor_noise_sigma=args.sensor_noise,
        distance_factor=args.distance_factor,
    )
    generate_corpus(
        args.out,
        n_printers=args.printers,
        pages_per_printer=args.pages,
        page_spec=spec,
        camera=camera,
        master_seed=args.seed,
        chars_per_page=args.chars_per_page,
        force=args.force,
    )
    print(f"wrote {args.printers * args.pages} pages under {args.out}")
    return 0


def cmd_extract(args) -> int:
    params = ResidualParams(args.alpha, args.beta)
    opts = _extract_opts(args)
    patches, class_names = build_patchset(args.data, params, args.patch_size, opts,
                                          jobs=args.jobs, warn=lambda m: _log(f"warning: {m}"))
    write_cache(args.out, patches)
    meta_lines = [f"{k}={v}" for k, v in sorted(_resolved(args).items())]
    meta_lines.append("classes=" + ",".join(class_names))
    Path(str(args.out) + ".meta.txt").write_text("\n".join(meta_lines) + "\n", encoding="utf-8")
    if len(patches) == 0:
        _log("warning: extraction produced 0 patches")
    print(f"wrote {len(patches)} patches (P={args.patch_size}, {len(class_names)} classes) to {args.out}")
    return 0


def _parse_list(text, cast):
    return [cast(tok) for tok in text.split(",") if tok.strip()]


def cmd_xval(args) -> int:
    params = ResidualParams(args.alpha, args.beta)
    opts = _extract_opts(args)
    config = _train_config(args)
    resolved = _resolved(args)
    sweeping = args.patch_sizes or args.activations or args.pools
    if sweeping:
        patch_sizes = _parse_list(args.patch_sizes, int) if args.patch_sizes else [args.patch_size]
        activations = _parse_list(args.activations, str) if args.activations else [args.activation]
        pools = _parse_list(args.pools, str) if args.pools else [args.pool]
        experiment.run_grid(args.data, config, args.out, patch_sizes, activations, pools,
                            params=params, extract_opts=opts, jobs=args.jobs,
                            resolved=resolved, log=_log)
        print(f"sweep complete; see {Path(args.out) / 'sweep_summary.txt'}")
        return 0
    result = experiment.run_xval(args.data, config, args.out, params=params, extract_opts=opts,
                                 jobs=args.jobs, resolved=resolved, log=_log)
    print(f"page {result.page_stats.row()}")
    print(f"letter {result.letter_stats.row()}")
    return 0


def cmd_train(args) -> int:
    patches = read_cache(args.cache)
    if args.plan:
        plan = FoldPlan.load(args.plan)
    else:
        docs: dict[str, list[str]] = {}
        for source_id in patches.doc_indices():
            printer, page = PatchSet.split_source_id(source_id)
            docs.setdefault(printer, []).append(page)
        plan = make_fold_plan(docs, args.seed)
    config = _train_config_from_cache(args, patches.patch_size)
    model, record = train_fold(plan, args.fold, config, patches,
                               residual_params=ResidualParams(args.alpha, args.beta), log=_log)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.ptnn")
    (out / "record.txt").write_text(record.to_text(), encoding="utf-8")
    class_names = [f"class{y:02d}" for y in range(patches.class_count)]
    (out / "report.txt").write_text(
        experiment.render_score_report(record.test_report, class_names), encoding="utf-8"
    )
    experiment.write_resolved_config(out, _resolved(args))
    print(f"fold {args.fold}: page {record.page_accuracy:.2f}% letter {record.letter_accuracy:.2f}%")
    return 0


def _train_config_from_cache(args, patch_size) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr0=args.lr,
        decay=args.decay,
        weight_decay=args.weight_decay,
        patch_size=patch_size,
        activation=args.activation,
        pool=args.pool,
        val_fraction=args.val_fraction,
        seed=args.seed,
    )


def _load_class_names(path, n_classes) -> list[str]:
    if path:
        names = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
        if len(names) != n_classes:
            raise InputShapeError(f"{path} lists {len(names)} names but the model has {n_classes} classes")
        return names
    return [f"class{y:02d}" for y in range(n_classes)]


def cmd_predict(args) -> int:
    model = Model.load(args.model)
    if args.patch_size is not None and args.patch_size != model.patch_size:
        raise InputShapeError(
            f"--patch-size {args.patch_size} does not match the model's input "
            f"{model.patch_size}x{model.patch_size}x2"
        )
    if args.dump_filters:
        save_image(model.first_layer_filter_grid(), args.dump_filters)
    class_names = _load_class_names(args.class_names, model.n_classes)
    params = ResidualParams(args.alpha, args.beta)
    opts = _extract_opts(args)

    from .dataset import document_patches  # local import keeps CLI startup light

    lines = ["printerid predict report",
             "config " + " ".join(f"{k}={v}" for k, v in sorted(_resolved(args).items()))]
    for image_path in args.images:
        doc = load_image(image_path)
        doc.source_id = str(image_path)
        try:
            page_patches = document_patches(doc, 0, params, model.patch_size, opts)
        except DegenerateImageError as exc:
            lines.append(f"image {image_path} label=- letters=0 votes=- warning={exc}")
            continue
        if not page_patches:
            lines.append(f"image {image_path} label=- letters=0 votes=-")
            continue
        data = [p.data for p in page_patches]
        preds = predict_letters(model, data, [p.meta for p in page_patches])
        label = vote_page(preds)
        votes: dict[int, int] = {}
        for p in preds:
            votes[p.label] = votes.get(p.label, 0) + 1
        vote_text = ",".join(f"{class_names[k]}:{votes[k]}" for k in sorted(votes))
        lines.append(f"image {image_path} label={class_names[label]} letters={len(preds)} votes={vote_text}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return 0


def cmd_score(args) -> int:
    model = Model.load(args.model)
    patches = read_cache(args.cache)
    if patches.patch_size != model.patch_size:
        raise InputShapeError(
            f"cache patches are {patches.patch_size}x{patches.patch_size} but the model "
            f"expects {model.patch_size}x{model.patch_size}"
        )
    if patches.class_count != model.n_classes:
        raise InputShapeError(
            f"cache has {patches.class_count} classes but the model has {model.n_classes}"
        )
    class_names = _load_class_names(args.class_names, model.n_classes)
    report = score(model, patches)
    text = ("config " + " ".join(f"{k}={v}" for k, v in sorted(_resolved(args).items())) + "\n"
            + experiment.render_score_report(report, class_names))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            # Re-parse with the file's tokens injected after the subcommand
            # so explicit command-line flags take precedence.
            extra = _config_file_argv(args.config)
            idx = argv.index(args.command) + 1
            args = parser.parse_args(argv[:idx] + extra + argv[idx:])
        return args.run(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    except ValueError as exc:
        print(f"printerid: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except _NUMERICAL_ERRORS as exc:
        print(f"printerid: numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except _DATA_ERRORS as exc:
        print(f"printerid: data error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
