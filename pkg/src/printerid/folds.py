"""Deterministic 5x2 cross-validation fold plans.

Each of the five iterations shuffles every printer's documents once and
splits them into setA (floor(n/2) documents) and setB (the rest). Fold
2j trains on iteration j's setA and tests on setB; fold 2j+1 is the
exact swap. Identical seeds give identical plans.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import rng
from .errors import FileFormatError, InsufficientDataError

N_ITERATIONS = 5
PLAN_VERSION = 1

DocSplit = dict[str, tuple[tuple[str, ...], tuple[str, ...]]]


@dataclass
class FoldPlan:
    seed: int
    printers: tuple[str, ...]
    iterations: list[DocSplit]

    @property
    def n_folds(self) -> int:
        return 2 * len(self.iterations)

    def train_docs(self, fold: int) -> dict[str, tuple[str, ...]]:
        split = self.iterations[fold // 2]
        side = fold % 2
        return {p: split[p][side] for p in self.printers}

    def test_docs(self, fold: int) -> dict[str, tuple[str, ...]]:
        split = self.iterations[fold // 2]
        side = 1 - fold % 2
        return {p: split[p][side] for p in self.printers}

    def to_text(self) -> str:
        lines = [f"foldplan-version {PLAN_VERSION}", f"seed {self.seed}",
                 f"iterations {len(self.iterations)}", "printers " + ",".join(self.printers)]
        for j, split in enumerate(self.iterations):
            for printer in self.printers:
                set_a, set_b = split[printer]
                lines.append(f"iteration {j} printer {printer} setA={','.join(set_a)} setB={','.join(set_b)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FoldPlan":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        try:
            version = int(lines[0].split()[1])
            if version != PLAN_VERSION:
                raise FileFormatError(f"unsupported fold plan version {version}")
            seed = int(lines[1].split()[1])
            n_iter = int(lines[2].split()[1])
            printers = tuple(lines[3].split(" ", 1)[1].split(","))
            iterations: list[DocSplit] = [{} for _ in range(n_iter)]
            for line in lines[4:]:
                parts = line.split()
                j = int(parts[1])
                printer = parts[3]
                set_a = tuple(x for x in parts[4][len("setA="):].split(",") if x)
                set_b = tuple(x for x in parts[5][len("setB="):].split(",") if x)
                iterations[j][printer] = (set_a, set_b)
        except (IndexError, ValueError) as exc:
            raise FileFormatError(f"malformed fold plan: {exc}") from exc
        return cls(seed=seed, printers=printers, iterations=iterations)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FoldPlan":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def make_fold_plan(doc_ids: dict[str, list[str]], seed: int) -> FoldPlan:
    """Five seeded shuffles -> ten folds with the swap structure."""
    printers = tuple(sorted(doc_ids))
    counts = {len(doc_ids[p]) for p in printers}
    if len(counts) != 1:
        raise InsufficientDataError(f"printers have unequal document counts: {sorted(counts)}")
    (count,) = counts
    if count < 2:
        raise InsufficientDataError(f"need at least 2 documents per printer, got {count}")

    iterations: list[DocSplit] = []
    for j in range(N_ITERATIONS):
        gen = rng.stream(seed, rng.FOLD_PLAN, j)
        split: DocSplit = {}
        for printer in printers:
            docs = sorted(doc_ids[printer])
            perm = gen.permutation(len(docs))
            half = len(docs) // 2
            set_a = tuple(sorted(docs[i] for i in perm[:half]))
            set_b = tuple(sorted(docs[i] for i in perm[half:]))
            split[printer] = (set_a, set_b)
        iterations.append(split)
    return FoldPlan(seed=seed, printers=printers, iterations=iterations)


def split_validation(
    train_docs: dict[str, tuple[str, ...]],
    val_fraction: float,
    seed: int,
    fold: int = 0,
) -> tuple[dict[str, tuple[str, ...]], dict[str, tuple[str, ...]]]:
    """Hold out whole documents per printer for validation.

    Validation takes round(val_fraction * n) documents per printer, at
    least 1 and never all of them, so letter patches of one page never
    straddle the train/validation boundary.
    """
    gen = rng.stream(seed, rng.VAL_SPLIT, fold)
    train: dict[str, tuple[str, ...]] = {}
    val: dict[str, tuple[str, ...]] = {}
    for printer in sorted(train_docs):
        docs = sorted(train_docs[printer])
        if len(docs) < 2:
            raise InsufficientDataError(
                f"printer {printer} has {len(docs)} training document(s); need >= 2 to hold out validation"
            )
        n_val = min(max(1, int(round(val_fraction * len(docs)))), len(docs) - 1)
        chosen = gen.choice(len(docs), size=n_val, replace=False)
        val_set = {docs[i] for i in chosen}
        val[printer] = tuple(sorted(val_set))
        train[printer] = tuple(d for d in docs if d not in val_set)
    return train, val
