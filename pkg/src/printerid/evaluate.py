"""Letter-level inference, page-level majority voting, and scoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cache import PatchSet
from .errors import EmptyDocumentError, InputShapeError
from .model import Model
from .preprocess import PatchMeta

INFER_BATCH = 256


@dataclass
class LetterPrediction:
    label: int
    probs: np.ndarray
    meta: PatchMeta


@dataclass
class ConfusionMatrix:
    """Page-level confusion counts; rows = true class, cols = predicted."""

    counts: np.ndarray

    @classmethod
    def empty(cls, n_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((n_classes, n_classes), dtype=np.int64))

    def add(self, true: int, predicted: int) -> None:
        self.counts[true, predicted] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_percent(self) -> np.ndarray:
        sums = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            pct = np.where(sums > 0, 100.0 * self.counts / sums, 0.0)
        return pct


@dataclass
class DocResult:
    source_id: str
    true_label: int
    predicted: int
    votes: dict[int, int] = field(default_factory=dict)
    n_letters: int = 0
    letter_correct: int = 0


@dataclass
class ScoreReport:
    letter_accuracy: float  # percent
    page_accuracy: float  # percent
    confusion: ConfusionMatrix
    docs: list[DocResult]
    zero_glyph_docs: list[str]


def predict_letters(model: Model, patches: np.ndarray, metas: list[PatchMeta] | None = None,
                    batch: int = INFER_BATCH) -> list[LetterPrediction]:
    """One frozen-model prediction per patch, order preserving."""
    patches = np.asarray(patches, dtype=np.float32)
    if patches.shape[0] == 0:
        return []
    if patches.shape[1:] != (model.patch_size, model.patch_size, 2):
        raise InputShapeError(
            f"patches {patches.shape[1:]} do not match model input "
            f"{(model.patch_size, model.patch_size, 2)}"
        )
    if metas is None:
        metas = [PatchMeta("", (0, 0, 0, 0))] * patches.shape[0]
    preds = []
    for start in range(0, patches.shape[0], batch):
        probs = model.predict_probs(patches[start : start + batch])
        for row, meta in zip(probs, metas[start : start + batch]):
            preds.append(LetterPrediction(int(np.argmax(row)), row, meta))
    return preds


def vote_page(predictions: list[LetterPrediction]) -> int:
    """Majority vote over letter labels.

    Ties break by the highest summed softmax probability, then by the
    lowest class index; both rules are deterministic.
    """
    if not predictions:
        raise EmptyDocumentError("cannot vote on a document with zero letter predictions")
    n_classes = predictions[0].probs.shape[0]
    counts = np.zeros(n_classes, dtype=np.int64)
    prob_sums = np.zeros(n_classes, dtype=np.float64)
    for p in predictions:
        counts[p.label] += 1
        prob_sums += p.probs
    best = np.flatnonzero(counts == counts.max())
    if len(best) > 1:
        best = best[prob_sums[best] == prob_sums[best].max()]
    return int(best[0])


def _fallback_wrong_label(true_label: int, n_classes: int) -> int:
    """Deterministic misclassification stand-in for zero-glyph documents."""
    return 0 if true_label != 0 else 1 % n_classes


def score(
    model: Model,
    patches: PatchSet,
    expected_docs: dict[str, int] | None = None,
) -> ScoreReport:
    """Letter accuracy, page accuracy, and page confusion matrix.

    expected_docs maps source_id -> true label for every document that
    should be present; documents with zero extracted letters are scored
    as misclassified and listed in the report diagnostics rather than
    silently dropped.
    """
    n_classes = patches.class_count
    groups = patches.doc_indices()
    if expected_docs is None:
        expected_docs = {sid: int(patches.labels[idx[0]]) for sid, idx in groups.items()}

    confusion = ConfusionMatrix.empty(n_classes)
    docs: list[DocResult] = []
    zero_glyph: list[str] = []
    letters_total = 0
    letters_correct = 0

    for source_id in sorted(expected_docs):
        true_label = expected_docs[source_id]
        idx = groups.get(source_id, [])
        if not idx:
            predicted = _fallback_wrong_label(true_label, n_classes)
            zero_glyph.append(source_id)
            docs.append(DocResult(source_id, true_label, predicted))
            confusion.add(true_label, predicted)
            continue
        sub = patches.subset(idx)
        preds = predict_letters(model, sub.data, sub.metas)
        predicted = vote_page(preds)
        votes: dict[int, int] = {}
        correct = 0
        for p in preds:
            votes[p.label] = votes.get(p.label, 0) + 1
            correct += int(p.label == true_label)
        letters_total += len(preds)
        letters_correct += correct
        docs.append(DocResult(source_id, true_label, predicted, votes, len(preds), correct))
        confusion.add(true_label, predicted)

    pages_correct = sum(1 for d in docs if d.predicted == d.true_label)
    page_acc = 100.0 * pages_correct / len(docs) if docs else 0.0
    letter_acc = 100.0 * letters_correct / letters_total if letters_total else 0.0
    return ScoreReport(letter_acc, page_acc, confusion, docs, zero_glyph)
