"""Cross-validation experiment runner and report writers.

Every artifact embeds the resolved configuration and seeds, floats are
rendered with fixed precision, and iteration order is sorted, so two
runs with identical inputs produce byte-identical output trees. Folds
are independent and may run in parallel worker processes; workers load
the patch cache from disk and derive their RNG streams from
(seed, fold), so parallel results equal sequential ones.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .cache import PatchSet, read_cache, write_cache
from .dataset import build_patchset, scan_dataset
from .evaluate import ScoreReport
from .folds import FoldPlan, make_fold_plan
from .glyphs import ExtractOptions
from .preprocess import ResidualParams
from .train import RunRecord, Stats, TrainConfig, aggregate_stats, train_fold

CACHE_NAME = "patches.ptpc"
PLAN_NAME = "plan.txt"
SUMMARY_TXT = "summary.txt"
SUMMARY_JSON = "summary.json"
CONFIG_NAME = "config.txt"
CLASSES_NAME = "classes.txt"


@dataclass
class XvalResult:
    out_dir: Path
    plan: FoldPlan
    class_names: list[str]
    records: list[RunRecord]
    page_stats: Stats
    letter_stats: Stats
    n_patches: int


def render_score_report(report: ScoreReport, class_names: list[str]) -> str:
    lines = [
        f"letter-accuracy {report.letter_accuracy:.4f}",
        f"page-accuracy {report.page_accuracy:.4f}",
        f"pages {len(report.docs)}",
    ]
    for doc in report.docs:
        votes = ",".join(f"{class_names[k]}:{doc.votes[k]}" for k in sorted(doc.votes)) or "-"
        lines.append(
            f"doc {doc.source_id} true={class_names[doc.true_label]}"
            f" predicted={class_names[doc.predicted]} letters={doc.n_letters} votes={votes}"
        )
    width = max(len(n) for n in class_names)
    lines.append("confusion-counts rows=true cols=predicted")
    for i, name in enumerate(class_names):
        lines.append(f"{name:<{width}} " + " ".join(str(v) for v in report.confusion.counts[i]))
    lines.append("confusion-row-percent")
    pct = report.confusion.row_percent()
    for i, name in enumerate(class_names):
        lines.append(f"{name:<{width}} " + " ".join(f"{v:.1f}" for v in pct[i]))
    lines.append("zero-glyph-docs " + (",".join(report.zero_glyph_docs) or "-"))
    return "\n".join(lines) + "\n"


def _fold_worker(args):
    cache_path, plan_text, fold, config, alpha, beta, fold_dir = args
    patches = read_cache(cache_path)
    plan = FoldPlan.from_text(plan_text)
    params = ResidualParams(alpha, beta) if alpha is not None else None
    model, record = train_fold(plan, fold, config, patches, residual_params=params)
    fold_dir = Path(fold_dir)
    fold_dir.mkdir(parents=True, exist_ok=True)
    model.save(fold_dir / "model.ptnn")
    return fold, record


def _run_folds(cache_path, plan, config, params, out_dir, jobs, patches=None, log=None):
    records: list[RunRecord | None] = [None] * plan.n_folds
    if jobs > 1:
        tasks = [
            (
                str(cache_path),
                plan.to_text(),
                fold,
                config,
                params.alpha if params else None,
                params.beta if params else None,
                str(Path(out_dir) / f"fold_{fold:02d}"),
            )
            for fold in range(plan.n_folds)
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = pool.map(_fold_worker, tasks)
            for fold, record in done:
                records[fold] = record
                if log:
                    log(f"fold {fold}: page {record.page_accuracy:.2f}% letter {record.letter_accuracy:.2f}%")
    else:
        if patches is None:
            patches = read_cache(cache_path)
        for fold in range(plan.n_folds):
            model, record = train_fold(plan, fold, config, patches, residual_params=params)
            fold_dir = Path(out_dir) / f"fold_{fold:02d}"
            fold_dir.mkdir(parents=True, exist_ok=True)
            model.save(fold_dir / "model.ptnn")
            records[fold] = record
            if log:
                log(f"fold {fold}: page {record.page_accuracy:.2f}% letter {record.letter_accuracy:.2f}%")
    return records


def write_summary(out_dir: Path, records: list[RunRecord], class_names: list[str],
                  resolved: dict[str, str]) -> tuple[Stats, Stats]:
    page = aggregate_stats([r.page_accuracy for r in records])
    letter = aggregate_stats([r.letter_accuracy for r in records])

    lines = ["printerid xval summary", f"folds {len(records)}"]
    for r in records:
        lines.append(
            f"fold {r.fold} page_acc={r.page_accuracy:.2f} letter_acc={r.letter_accuracy:.2f}"
            f" best_epoch={r.best_epoch} best_val_loss={r.best_val_loss:.8f}"
        )
    lines.append("page " + page.row())
    lines.append("letter " + letter.row())
    (out_dir / SUMMARY_TXT).write_text("\n".join(lines) + "\n", encoding="utf-8")

    payload = {
        "config": dict(sorted(resolved.items())),
        "classes": class_names,
        "folds": [
            {
                "fold": r.fold,
                "page_accuracy": round(r.page_accuracy, 6),
                "letter_accuracy": round(r.letter_accuracy, 6),
                "best_epoch": r.best_epoch,
                "best_val_loss": round(r.best_val_loss, 10),
            }
            for r in records
        ],
        "page": {"mean": round(page.mean, 6), "median": round(page.median, 6), "sigma": round(page.sigma, 6)},
        "letter": {"mean": round(letter.mean, 6), "median": round(letter.median, 6),
                   "sigma": round(letter.sigma, 6)},
    }
    (out_dir / SUMMARY_JSON).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return page, letter


def write_resolved_config(out_dir: Path, resolved: dict[str, str]) -> None:
    lines = [f"{k}={v}" for k, v in sorted(resolved.items())]
    (out_dir / CONFIG_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_xval(
    data_dir: str | Path,
    config: TrainConfig,
    out_dir: str | Path,
    params: ResidualParams | None = None,
    extract_opts: ExtractOptions | None = None,
    jobs: int = 1,
    resolved: dict[str, str] | None = None,
    log=None,
) -> XvalResult:
    """Full 5x2 protocol on a dataset directory.

    Extracts patches once, plans folds over all planned documents
    (including any that yield zero glyphs), trains each fold, and writes
    the deterministic report tree under out_dir.
    """
    data_dir = Path(data_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = params or ResidualParams()

    class_names, docs = scan_dataset(data_dir)
    docs_per_printer: dict[str, list[str]] = {name: [] for name in class_names}
    for _, source_id, _path in docs:
        printer, page = PatchSet.split_source_id(source_id)
        docs_per_printer[printer].append(page)

    warnings: list[str] = []
    patches, _ = build_patchset(data_dir, params, config.patch_size, extract_opts,
                                jobs=jobs, warn=warnings.append)
    if log:
        for w in warnings:
            log(f"warning: {w}")
        log(f"extracted {len(patches)} patches from {len(docs)} pages")
    cache_path = out_dir / CACHE_NAME
    write_cache(cache_path, patches)

    plan = make_fold_plan(docs_per_printer, config.seed)
    plan.save(out_dir / PLAN_NAME)
    (out_dir / CLASSES_NAME).write_text("\n".join(class_names) + "\n", encoding="utf-8")

    records = _run_folds(cache_path, plan, config, params, out_dir, jobs, patches=patches, log=log)
    for record in records:
        fold_dir = out_dir / f"fold_{record.fold:02d}"
        (fold_dir / "record.txt").write_text(record.to_text(), encoding="utf-8")
        (fold_dir / "report.txt").write_text(render_score_report(record.test_report, class_names),
                                             encoding="utf-8")

    resolved = dict(resolved or {})
    resolved.setdefault("data_dir", str(data_dir))
    resolved.setdefault("alpha", repr(params.alpha))
    resolved.setdefault("beta", repr(params.beta))
    resolved.setdefault("jobs", str(jobs))
    for key, value in config.items():
        resolved.setdefault(key, value)
    write_resolved_config(out_dir, resolved)
    page_stats, letter_stats = write_summary(out_dir, records, class_names, resolved)

    return XvalResult(out_dir, plan, class_names, records, page_stats, letter_stats, len(patches))


def run_grid(
    data_dir: str | Path,
    base_config: TrainConfig,
    out_dir: str | Path,
    patch_sizes: list[int],
    activations: list[str],
    pools: list[str],
    params: ResidualParams | None = None,
    extract_opts: ExtractOptions | None = None,
    jobs: int = 1,
    resolved: dict[str, str] | None = None,
    log=None,
) -> dict[tuple[int, str, str], XvalResult]:
    """Sweep patch sizes and/or the activation x pooling grid.

    Each combination runs a full cross-validation in its own
    subdirectory; a combined sweep summary lands in the sweep root.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results: dict[tuple[int, str, str], XvalResult] = {}
    for p in patch_sizes:
        for act in activations:
            for pool in pools:
                combo_dir = out_dir / f"P{p}_{act}_{pool}"
                config = replace(base_config, patch_size=p, activation=act, pool=pool)
                if log:
                    log(f"running patch_size={p} activation={act} pool={pool}")
                results[(p, act, pool)] = run_xval(
                    data_dir, config, combo_dir, params=params, extract_opts=extract_opts,
                    jobs=jobs, resolved=dict(resolved or {}), log=log,
                )
    _write_sweep_summary(out_dir, results, patch_sizes, activations, pools)
    return results


def _write_sweep_summary(out_dir, results, patch_sizes, activations, pools) -> None:
    lines = []
    if len(activations) == 1 and len(pools) == 1 and len(patch_sizes) >= 1:
        lines.append("patch-size sweep: page accuracy statistics over all folds")
        lines.append("patch_size " + " ".join(f"{p:>7d}" for p in patch_sizes))
        for stat in ("mean", "median", "sigma"):
            row = [f"{getattr(results[(p, activations[0], pools[0])].page_stats, stat):7.2f}"
                   for p in patch_sizes]
            lines.append(f"{stat:<10} " + " ".join(row))
    else:
        lines.append("activation x pooling grid: page accuracy statistics over all folds")
        header = "activation"
        for pool in pools:
            header += f" | {pool}: mean median sigma"
        for p in patch_sizes:
            lines.append(f"patch_size {p}")
            lines.append(header)
            for act in activations:
                row = f"{act:<10}"
                for pool in pools:
                    s = results[(p, act, pool)].page_stats
                    row += f" | {s.mean:6.2f} {s.median:6.2f} {s.sigma:5.2f}"
                lines.append(row)

    payload = {
        f"P{p}_{act}_{pool}": {
            "page": {"mean": round(r.page_stats.mean, 6), "median": round(r.page_stats.median, 6),
                     "sigma": round(r.page_stats.sigma, 6)},
            "letter": {"mean": round(r.letter_stats.mean, 6), "median": round(r.letter_stats.median, 6),
                       "sigma": round(r.letter_stats.sigma, 6)},
        }
        for (p, act, pool), r in results.items()
    }
    (Path(out_dir) / "sweep_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (Path(out_dir) / "sweep_summary.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
