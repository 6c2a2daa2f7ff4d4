"""Epoch loop with best-validation-loss checkpointing, plus fold stats.

Training follows the reference recipe: batches of 100 shuffled each
epoch, Adam at lr 0.001 with decay 0.0005 per step, cross-entropy loss,
and the parameter snapshot from the epoch with the lowest validation
loss (first occurrence on ties) is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .adam import Adam
from .cache import PatchSet
from .errors import InsufficientDataError, PoisonedGradientError, PoisonedTrainingError
from .evaluate import ScoreReport, score
from .folds import FoldPlan, split_validation
from .layers import cross_entropy, softmax
from .model import Model
from .preprocess import ResidualParams

EVAL_BATCH = 256


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 100
    lr0: float = 0.001
    decay: float = 0.0005
    weight_decay: float = 0.0
    patch_size: int = 30
    activation: str = "relu"
    pool: str = "max"
    val_fraction: float = 0.1
    seed: int = 0
    letter: str | None = None  # None = all-letters mode

    def __post_init__(self):
        if not 0 < self.val_fraction < 0.5:
            raise ValueError(f"val_fraction must lie in (0, 0.5), got {self.val_fraction}")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2 (batch-norm requirement)")
        if self.epochs < 1:
            raise ValueError("need at least 1 epoch")

    @property
    def letter_mode(self) -> str:
        return "all-letters" if self.letter is None else f"single-letter:{self.letter}"

    def items(self) -> list[tuple[str, str]]:
        return [
            ("epochs", str(self.epochs)),
            ("batch_size", str(self.batch_size)),
            ("lr0", repr(self.lr0)),
            ("decay", repr(self.decay)),
            ("weight_decay", repr(self.weight_decay)),
            ("patch_size", str(self.patch_size)),
            ("activation", self.activation),
            ("pool", self.pool),
            ("val_fraction", repr(self.val_fraction)),
            ("seed", str(self.seed)),
            ("letter_mode", self.letter_mode),
        ]


@dataclass
class EpochStats:
    train_loss: float
    val_loss: float
    val_accuracy: float  # percent


@dataclass
class RunRecord:
    fold: int
    config: TrainConfig
    train_docs: dict[str, tuple[str, ...]]
    val_docs: dict[str, tuple[str, ...]]
    test_docs: dict[str, tuple[str, ...]]
    alpha: float | None = None
    beta: float | None = None
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = math.inf
    letter_accuracy: float = 0.0
    page_accuracy: float = 0.0
    test_report: ScoreReport | None = None

    def to_text(self) -> str:
        lines = [
            "runrecord-version 1",
            f"fold {self.fold}",
            "config " + " ".join(f"{k}={v}" for k, v in self.config.items()),
            f"residual alpha={self.alpha} beta={self.beta}",
        ]
        for name, docs in (("train", self.train_docs), ("val", self.val_docs), ("test", self.test_docs)):
            parts = [f"{p}:{','.join(docs[p])}" for p in sorted(docs)]
            lines.append(f"{name}-docs " + ";".join(parts))
        for i, ep in enumerate(self.epochs):
            lines.append(
                f"epoch {i} train_loss={ep.train_loss:.8f} val_loss={ep.val_loss:.8f}"
                f" val_acc={ep.val_accuracy:.4f}"
            )
        lines.append(f"best-epoch {self.best_epoch} val_loss={self.best_val_loss:.8f}")
        lines.append(f"test letter_acc={self.letter_accuracy:.4f} page_acc={self.page_accuracy:.4f}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Stats:
    mean: float
    median: float
    sigma: float

    def row(self) -> str:
        return f"mean={self.mean:.2f} median={self.median:.2f} sigma={self.sigma:.2f}"


def aggregate_stats(values: list[float]) -> Stats:
    """Mean, lower-middle median, and sample (n-1) standard deviation."""
    if not values:
        raise InsufficientDataError("no values to aggregate")
    arr = np.asarray(values, dtype=np.float64)
    median = float(np.sort(arr)[(len(arr) - 1) // 2])
    sigma = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return Stats(mean=float(arr.mean()), median=median, sigma=sigma)


def _printer_labels(patches: PatchSet, printers: tuple[str, ...]) -> dict[str, int]:
    """Printer name -> class label, read from the patches themselves."""
    mapping = {p: i for i, p in enumerate(sorted(printers))}
    for i, meta in enumerate(patches.metas):
        printer, _ = PatchSet.split_source_id(meta.source_id)
        if printer in mapping:
            mapping[printer] = int(patches.labels[i])
    return mapping


def _gather(patches: PatchSet, docs: dict[str, tuple[str, ...]]) -> list[int]:
    wanted = {f"{printer}/{page}" for printer, pages in docs.items() for page in pages}
    groups = patches.doc_indices()
    idx: list[int] = []
    for source_id in sorted(wanted):
        idx.extend(groups.get(source_id, []))
    return idx


def evaluate_loss(model: Model, data: np.ndarray, labels: np.ndarray,
                  batch: int = EVAL_BATCH) -> tuple[float, float]:
    """Inference-mode mean CE loss and accuracy (percent)."""
    if data.shape[0] == 0:
        raise InsufficientDataError("cannot evaluate on an empty set")
    losses = []
    correct = 0
    for start in range(0, data.shape[0], batch):
        x = data[start : start + batch]
        y = labels[start : start + batch]
        probs = softmax(model.forward(x, train=False))
        losses.append(cross_entropy(probs, y) * x.shape[0])
        correct += int((probs.argmax(axis=1) == y).sum())
    loss = float(sum(losses) / data.shape[0])
    return loss, 100.0 * correct / data.shape[0]


def train_fold(
    plan: FoldPlan,
    fold: int,
    config: TrainConfig,
    patches: PatchSet,
    residual_params: ResidualParams | None = None,
    log=None,
) -> tuple[Model, RunRecord]:
    """Train one fold of the plan and evaluate it on the fold's test side.

    Deterministic for fixed (plan, fold, config, patches): weight init and
    epoch shuffles derive from (config.seed, fold). A non-finite loss
    aborts with PoisonedTrainingError carrying the partial record.
    """
    train_all = plan.train_docs(fold)
    test_docs = plan.test_docs(fold)
    train_docs, val_docs = split_validation(train_all, config.val_fraction, config.seed, fold)

    record = RunRecord(
        fold=fold,
        config=config,
        train_docs=train_docs,
        val_docs=val_docs,
        test_docs=test_docs,
        alpha=residual_params.alpha if residual_params else None,
        beta=residual_params.beta if residual_params else None,
    )

    train_idx = _gather(patches, train_docs)
    val_idx = _gather(patches, val_docs)
    if len(train_idx) < config.batch_size and len(train_idx) < 2:
        raise InsufficientDataError(f"fold {fold}: only {len(train_idx)} training patches")
    if not val_idx:
        raise InsufficientDataError(f"fold {fold}: validation documents produced no patches")

    x_train = patches.data[train_idx]
    y_train = patches.labels[train_idx]
    x_val = patches.data[val_idx]
    y_val = patches.labels[val_idx]

    fold_seed = rng.derive(config.seed, fold)
    model = Model.build(config.patch_size, patches.class_count, config.activation,
                        config.pool, seed=fold_seed)
    opt = Adam(model.parameters(), lr0=config.lr0, decay=config.decay,
               weight_decay=config.weight_decay)

    best_snap = None
    for epoch in range(config.epochs):
        order = rng.stream(fold_seed, rng.EPOCH_SHUFFLE, epoch).permutation(len(train_idx))
        batch_losses = []
        for start in range(0, len(order), config.batch_size):
            sel = order[start : start + config.batch_size]
            if len(sel) < 2:
                continue  # a singleton remainder cannot batch-normalize
            loss, _ = model.loss_and_backward(x_train[sel], y_train[sel])
            if not math.isfinite(loss):
                raise PoisonedTrainingError(f"fold {fold} epoch {epoch}: non-finite training loss", record)
            try:
                opt.step()
            except PoisonedGradientError as exc:
                raise PoisonedTrainingError(f"fold {fold} epoch {epoch}: {exc}", record) from exc
            opt.zero_grad()
            batch_losses.append(loss * len(sel))
        train_loss = float(sum(batch_losses) / max(1, len(order)))
        val_loss, val_acc = evaluate_loss(model, x_val, y_val)
        if not math.isfinite(val_loss):
            raise PoisonedTrainingError(f"fold {fold} epoch {epoch}: non-finite validation loss", record)
        record.epochs.append(EpochStats(train_loss, val_loss, val_acc))
        if val_loss < record.best_val_loss:
            record.best_val_loss = val_loss
            record.best_epoch = epoch
            best_snap = model.snapshot()
        if log is not None:
            log(f"fold {fold} epoch {epoch}: train {train_loss:.4f} val {val_loss:.4f} acc {val_acc:.2f}%")

    model.restore(best_snap)

    labels_by_printer = _printer_labels(patches, plan.printers)
    expected = {
        f"{printer}/{page}": labels_by_printer[printer]
        for printer, pages in test_docs.items()
        for page in pages
    }
    test_idx = _gather(patches, test_docs)
    report = score(model, patches.subset(test_idx), expected)
    record.letter_accuracy = report.letter_accuracy
    record.page_accuracy = report.page_accuracy
    record.test_report = report
    return model, record
