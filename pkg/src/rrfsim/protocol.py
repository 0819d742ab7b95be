"""Verification protocol: threshold selection and K-fold evaluation.

For each fold the decision threshold is chosen on all *other* folds' pairs
(never the fold's own) by exact midpoint search, then accuracy is measured on
the held-out fold. Scores for a list of pairs are computed once, in entry
order, so the whole protocol is deterministic for a deterministic scorer.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import fusion, kernels, metric
from .errors import (
    DataError,
    DegenerateDataError,
    DegenerateEmbeddingError,
    DomainError,
    MissingEmbeddingsError,
)

GENUINE = 1
IMPOSTOR = 0


@dataclass(frozen=True)
class PairEntry:
    id_a: str
    id_b: str
    label: int
    fold: int


@dataclass(frozen=True)
class PairList:
    """Labelled image pairs partitioned into evaluation folds."""

    entries: tuple[PairEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise DataError("empty pair list")
        folds = {e.fold for e in self.entries}
        count = max(folds) + 1
        if count < 2:
            raise DataError("need at least 2 folds")
        missing = set(range(count)) - folds
        if missing or min(folds) < 0:
            raise DataError(f"folds must cover 0..{count - 1}; missing {sorted(missing)}")
        for e in self.entries:
            if e.label not in (GENUINE, IMPOSTOR):
                raise DataError(f"label must be 0 or 1, got {e.label}")

    @property
    def fold_count(self) -> int:
        return max(e.fold for e in self.entries) + 1

    def __len__(self) -> int:
        return len(self.entries)

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    def folds(self) -> np.ndarray:
        return np.array([e.fold for e in self.entries], dtype=np.int64)

    def image_ids(self) -> set[str]:
        ids = {e.id_a for e in self.entries}
        ids.update(e.id_b for e in self.entries)
        return ids


@dataclass(frozen=True)
class FoldResult:
    fold: int
    threshold: float
    accuracy: float
    test_size: int


@dataclass(frozen=True)
class VerificationReport:
    """Per-fold thresholds/accuracies plus their aggregate."""

    folds: tuple[FoldResult, ...]
    mean_accuracy: float
    std_accuracy: float
    warnings: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "folds": [
                {
                    "fold": f.fold,
                    "threshold": f.threshold,
                    "accuracy": f.accuracy,
                    "test_size": f.test_size,
                }
                for f in self.folds
            ],
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "warnings": list(self.warnings),
            "metadata": self.metadata,
        }


def best_threshold(scores, labels) -> tuple[float, float]:
    """Accuracy-maximizing decision threshold (predict genuine at score >= t).

    Candidates are the midpoints between consecutive sorted unique scores
    plus -inf/+inf sentinels, which covers every achievable decision rule.
    Ties prefer the smallest threshold. Returns (threshold, accuracy).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.ndim != 1 or s.shape != y.shape or s.shape[0] == 0:
        raise DomainError(f"scores {s.shape} do not match labels {y.shape}")
    if not np.all(np.isfinite(s)):
        raise DataError("non-finite scores")
    if len(np.unique(y)) < 2:
        raise DegenerateDataError("both classes required to pick a threshold")

    order = np.argsort(s, kind="stable")
    ss = s[order]
    ys = y[order]
    total_gen = int(np.sum(ys))
    n = s.shape[0]
    cum_gen = np.concatenate(([0], np.cumsum(ys)))
    uniq_vals = np.unique(ss)
    # index just past the last occurrence of each unique value
    last_plus_one = np.searchsorted(ss, uniq_vals, side="right")

    # candidate thresholds, ascending; below[c] = number of scores < candidate
    candidates = np.concatenate(
        ([-np.inf], (uniq_vals[:-1] + uniq_vals[1:]) / 2.0, [np.inf])
    )
    below = np.concatenate(([0], last_plus_one[:-1], [n]))
    gen_below = cum_gen[below]
    imp_below = below - gen_below
    correct = (total_gen - gen_below) + imp_below
    best = int(np.argmax(correct))  # first max = smallest threshold
    return float(candidates[best]), float(correct[best]) / n


def accuracy_at(threshold: float, scores, labels) -> float:
    """Fraction of pairs classified correctly by `score >= threshold`."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    return float(np.mean((s >= threshold).astype(np.int64) == y))


def rank_auc(scores, labels) -> float:
    """Mann-Whitney AUC; reported as a diagnostic, never acceptance-bearing.

    Ties get midranks, so constant scores give exactly 0.5.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    # midranks for tied scores (1-based)
    uniq, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    ranks = (starts + (counts + 1) / 2.0)[inverse]
    n_pos = int(np.sum(y == 1))
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataError("both classes required for AUC")
    return float((np.sum(ranks[y == 1]) - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def score_pairs(
    pairs: PairList, scorer: Callable[[str, str], float], jobs: int = 1
) -> np.ndarray:
    """Score every pair once, in entry order; parallelism never reorders."""
    n = len(pairs)
    out = np.empty(n, dtype=np.float64)
    if jobs <= 1:
        for i, e in enumerate(pairs.entries):
            out[i] = scorer(e.id_a, e.id_b)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for i, v in enumerate(
                pool.map(lambda e: scorer(e.id_a, e.id_b), pairs.entries, chunksize=64)
            ):
                out[i] = v
    if not np.all(np.isfinite(out)):
        raise DataError("scorer produced non-finite scores")
    return out


def _fold_results(
    scores: np.ndarray, labels: np.ndarray, folds: np.ndarray
) -> tuple[tuple[FoldResult, ...], tuple[str, ...]]:
    results = []
    warnings = []
    for f in range(int(np.max(folds)) + 1):
        test = folds == f
        train = ~test
        if len(np.unique(labels[train])) < 2 or len(np.unique(labels[test])) < 2:
            warnings.append(f"fold {f} skipped: a side has a single class")
            continue
        thr, _ = best_threshold(scores[train], labels[train])
        acc = accuracy_at(thr, scores[test], labels[test])
        results.append(
            FoldResult(fold=f, threshold=thr, accuracy=acc, test_size=int(np.sum(test)))
        )
    return tuple(results), tuple(warnings)


def _aggregate(
    fold_results: tuple[FoldResult, ...],
    warnings: tuple[str, ...],
    metadata: dict | None,
) -> VerificationReport:
    if not fold_results:
        raise DegenerateDataError("every fold was skipped; nothing to report")
    accs = np.array([f.accuracy for f in fold_results])
    return VerificationReport(
        folds=fold_results,
        mean_accuracy=float(np.mean(accs)),
        std_accuracy=float(np.std(accs)),
        warnings=warnings,
        metadata=metadata or {},
    )


def cross_validate(
    pairs: PairList,
    scorer: Callable[[str, str], float],
    jobs: int = 1,
    metadata: dict | None = None,
) -> VerificationReport:
    """K-fold verification with per-fold thresholds chosen on the other folds.

    The report's metadata carries a fold-free rank AUC over all pairs as a
    diagnostic; accuracy is the reported metric.
    """
    labels = pairs.labels()
    scores = score_pairs(pairs, scorer, jobs=jobs)
    fold_results, warnings = _fold_results(scores, labels, pairs.folds())
    metadata = dict(metadata or {})
    metadata["diagnostic_auc"] = rank_auc(scores, labels)
    return _aggregate(fold_results, warnings, metadata)


@dataclass(frozen=True)
class ScoringSource:
    """One scoring configuration: an embedding store plus a metric mode."""

    name: str
    store: Mapping[str, metric.EmbeddingSet]
    mode: str  # "region_based" | "rrfnet"
    model: fusion.FusionModel | None = None

    def __post_init__(self):
        if self.mode not in ("region_based", "rrfnet"):
            raise DomainError(f"unknown mode {self.mode!r}")
        if self.mode == "region_based" and self.model is None:
            raise DomainError(f"source {self.name!r}: region_based needs a model")


def _source_scorer(source: ScoringSource) -> Callable[[str, str], float]:
    if source.mode == "region_based":

        def scorer(id_a: str, id_b: str) -> float:
            a = source.store[id_a]
            b = source.store[id_b]
            return fusion.fused_score(
                source.model, kernels.row_cosines(a.matrix, b.matrix)
            )

        return scorer

    # rrfnet: mean embeddings depend only on the image, cache them
    cache: dict[str, tuple[np.ndarray, float]] = {}

    def mean_of(image_id: str) -> tuple[np.ndarray, float]:
        hit = cache.get(image_id)
        if hit is None:
            f = metric.mean_embedding(source.store[image_id])
            norm = float(np.linalg.norm(f))
            if norm == 0.0:
                raise DegenerateEmbeddingError(f"zero mean embedding for {image_id!r}")
            hit = (f, norm)
            cache[image_id] = hit
        return hit

    def scorer(id_a: str, id_b: str) -> float:
        fa, na = mean_of(id_a)
        fb, nb = mean_of(id_b)
        return float(np.dot(fa, fb)) / (na * nb)

    return scorer


def evaluate_configuration(
    pairs: PairList,
    sources: Sequence[ScoringSource],
    combine: str | None = "mean_zscore",
    reg: float = 1e-4,
    jobs: int = 1,
) -> dict[str, VerificationReport]:
    """Evaluate each scoring source and, when several, their combination.

    Returns one report per source name, plus a "combined" report when there
    are at least two sources and ``combine`` is a combiner method. Combiner
    normalization stats (and learned weights) are fitted per fold on the
    training folds only, mirroring the threshold discipline.
    """
    if not sources:
        raise DomainError("at least one scoring source required")
    names = [s.name for s in sources]
    if len(set(names)) != len(names) or "combined" in names:
        raise DomainError("source names must be unique and not 'combined'")
    wanted = pairs.image_ids()
    for source in sources:
        missing = wanted - set(source.store)
        if missing:
            raise MissingEmbeddingsError(missing)

    labels = pairs.labels()
    folds = pairs.folds()
    reports: dict[str, VerificationReport] = {}
    score_columns = []
    for source in sources:
        scores = score_pairs(pairs, _source_scorer(source), jobs=jobs)
        score_columns.append(scores)
        fold_results, warnings = _fold_results(scores, labels, folds)
        any_set = next(iter(source.store.values()))
        reports[source.name] = _aggregate(
            fold_results,
            warnings,
            {
                "source": source.name,
                "mode": source.mode,
                "pairs": len(pairs),
                "layout_fingerprint": f"{any_set.layout_fingerprint:#018x}",
                "diagnostic_auc": rank_auc(scores, labels),
            },
        )

    if combine is not None and len(sources) > 1:
        matrix = np.stack(score_columns, axis=1)
        results = []
        warnings = []
        for f in range(pairs.fold_count):
            test = folds == f
            train = ~test
            if len(np.unique(labels[train])) < 2 or len(np.unique(labels[test])) < 2:
                warnings.append(f"fold {f} skipped: a side has a single class")
                continue
            combiner = fusion.fit_combiner(
                combine, matrix[train], labels=labels[train], reg=reg
            )
            train_combined = fusion.combine_score_matrix(combiner, matrix[train])
            thr, _ = best_threshold(train_combined, labels[train])
            test_combined = fusion.combine_score_matrix(combiner, matrix[test])
            acc = accuracy_at(thr, test_combined, labels[test])
            results.append(
                FoldResult(
                    fold=f, threshold=thr, accuracy=acc, test_size=int(np.sum(test))
                )
            )
        reports["combined"] = _aggregate(
            tuple(results),
            tuple(warnings),
            {"sources": names, "method": combine, "pairs": len(pairs)},
        )
    return reports
