"""Metrics, dataset-level evaluation runs, and the nearest-neighbor probe.

F1 metrics follow the zero-division convention F1 = 0 when precision and
recall are both undefined — zero-shot label spaces routinely contain classes
nobody predicts. Correlations are computed in double precision.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .corpus import (
    DIMENSION_NAMES,
    Dataset,
    DescriptorAnnotation,
    LabelSpace,
    TextSample,
    normalize_label,
)
from .errors import (
    DegenerateInput,
    EmptyInput,
    KindMismatch,
    LengthMismatch,
    MissingThresholds,
    SchemaError,
)
from .inference import (
    ThresholdTable,
    predict_multi,
    predict_single,
    predict_valence_activation,
)


def _normalize_sets(label_sets: Sequence[Iterable[str]]) -> list[frozenset[str]]:
    return [frozenset(normalize_label(lbl) for lbl in labels) for labels in label_sets]


def _class_counts(predictions, golds, label: str):
    tp = fp = fn = 0
    for pred, gold in zip(predictions, golds):
        if label in pred and label in gold:
            tp += 1
        elif label in pred:
            fp += 1
        elif label in gold:
            fn += 1
    return tp, fp, fn


def _precision_recall_f1(tp: int, fp: int, fn: int):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def per_class_metrics(predictions: Sequence[Iterable[str]], golds: Sequence[Iterable[str]],
                      label_space: LabelSpace) -> dict[str, dict[str, float]]:
    """Binary precision/recall/F1 per class in the space, with raw counts."""
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")
    preds = _normalize_sets(predictions)
    gold_sets = _normalize_sets(golds)
    table = {}
    for label in label_space.labels:
        tp, fp, fn = _class_counts(preds, gold_sets, label)
        precision, recall, f1 = _precision_recall_f1(tp, fp, fn)
        table[label] = {
            "precision": precision, "recall": recall, "f1": f1,
            "tp": tp, "fp": fp, "fn": fn,
        }
    return table


def macro_f1(predictions: Sequence[Iterable[str]], golds: Sequence[Iterable[str]],
             label_space: LabelSpace) -> float:
    """Unweighted mean of per-class F1 over every class in the space."""
    table = per_class_metrics(predictions, golds, label_space)
    return float(np.mean([table[label]["f1"] for label in label_space.labels]))


def micro_f1(predictions: Sequence[Iterable[str]], golds: Sequence[Iterable[str]],
             label_space: LabelSpace) -> float:
    """F1 over TP/FP/FN pooled across all (sample, class) pairs in the space."""
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(golds)} golds")
    preds = _normalize_sets(predictions)
    gold_sets = _normalize_sets(golds)
    space = set(label_space.labels)
    tp = fp = fn = 0
    for pred, gold in zip(preds, gold_sets):
        pred &= space
        gold &= space
        tp += len(pred & gold)
        fp += len(pred - gold)
        fn += len(gold - pred)
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def pearson(pred: Sequence[float], gold: Sequence[float]) -> float:
    """Sample Pearson correlation in double precision."""
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(gold, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"{x.shape} vs {y.shape}")
    if x.size < 2:
        raise DegenerateInput("correlation requires at least 2 points")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        raise DegenerateInput("correlation undefined for a constant vector")
    return float((xc * yc).sum() / denom)


def spearman(pred: Sequence[float], gold: Sequence[float]) -> float:
    """Pearson correlation of average-assigned ranks (ties share mean rank)."""
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(gold, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"{x.shape} vs {y.shape}")
    if x.size < 2 or np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInput("rank correlation undefined for a constant vector")
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


@dataclass
class EvalReport:
    dataset_name: str
    label_space: str
    kind: str
    n_samples: int
    per_class: dict[str, dict[str, float]] = field(default_factory=dict)
    macro_f1: Optional[float] = None
    micro_f1: Optional[float] = None
    correlations: Optional[dict[str, dict[str, float]]] = None
    seen_classes: Optional[list[str]] = None
    seen_macro_f1: Optional[float] = None
    unseen_macro_f1: Optional[float] = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text_table(self) -> str:
        lines = [f"dataset: {self.dataset_name}  space: {self.label_space}  "
                 f"kind: {self.kind}  n: {self.n_samples}"]
        if self.per_class:
            width = max(len(lbl) for lbl in self.per_class)
            lines.append(f"{'class'.ljust(width)}  prec   rec    f1")
            for label, row in self.per_class.items():
                lines.append(
                    f"{label.ljust(width)}  {row['precision']:.3f}  "
                    f"{row['recall']:.3f}  {row['f1']:.3f}"
                )
        if self.macro_f1 is not None:
            lines.append(f"macro-F1: {self.macro_f1:.4f}  micro-F1: {self.micro_f1:.4f}")
        if self.seen_macro_f1 is not None:
            unseen = "-" if self.unseen_macro_f1 is None else f"{self.unseen_macro_f1:.4f}"
            lines.append(f"seen macro-F1: {self.seen_macro_f1:.4f}  unseen macro-F1: {unseen}")
        if self.correlations:
            for dim, row in self.correlations.items():
                lines.append(
                    f"{dim}: pearson {row['pearson']:.4f}  spearman {row['spearman']:.4f}"
                )
        return "\n".join(lines)


def evaluate(dataset, model, label_space: LabelSpace,
             thresholds: Optional[ThresholdTable] = None,
             seen_classes: Optional[Sequence[str]] = None) -> EvalReport:
    """Run the matching inference head over every sample and score it.

    The dataset is evaluated as given — filter splits before calling. With
    ``seen_classes`` supplied, macro-F1 is additionally reported restricted to
    seen and to unseen classes (the unseen breakdown is absent when the seen
    list covers the whole space).
    """
    samples: list[TextSample] = dataset.samples if isinstance(dataset, Dataset) else list(dataset)
    name = getattr(dataset, "name", "dataset")
    kind = getattr(dataset, "kind", label_space.kind)
    if kind != label_space.kind:
        raise KindMismatch(f"dataset kind {kind!r} vs label space kind {label_space.kind!r}")
    if not samples:
        raise EmptyInput("cannot evaluate an empty dataset")

    if kind == "dimensional":
        golds = {dim: [] for dim in DIMENSION_NAMES}
        preds = {dim: [] for dim in DIMENSION_NAMES}
        for sample in samples:
            if sample.gold_dimensional is None:
                raise SchemaError(f"sample {sample.id!r} has no dimensional gold scores")
            valence, activation = predict_valence_activation(sample.text, model)
            predicted = dict(zip(DIMENSION_NAMES, (valence, activation)))
            for dim in DIMENSION_NAMES:
                if dim not in sample.gold_dimensional:
                    raise SchemaError(f"sample {sample.id!r} lacks gold {dim!r} score")
                golds[dim].append(sample.gold_dimensional[dim])
                preds[dim].append(predicted[dim])
        correlations = {
            dim: {"pearson": pearson(preds[dim], golds[dim]),
                  "spearman": spearman(preds[dim], golds[dim])}
            for dim in DIMENSION_NAMES
        }
        return EvalReport(
            dataset_name=name, label_space=label_space.name, kind=kind,
            n_samples=len(samples), correlations=correlations,
        )

    if kind == "multi" and thresholds is None:
        raise MissingThresholds("multi-label evaluation requires a calibrated threshold table")

    predictions: list[set[str]] = []
    golds: list[frozenset[str]] = []
    for sample in samples:
        if sample.gold_categorical is None:
            raise SchemaError(f"sample {sample.id!r} has no gold labels")
        golds.append(sample.gold_categorical)
        if kind == "single":
            predictions.append({predict_single(sample.text, label_space, model)})
        else:
            predictions.append(predict_multi(sample.text, label_space, thresholds, model))

    table = per_class_metrics(predictions, golds, label_space)
    report = EvalReport(
        dataset_name=name, label_space=label_space.name, kind=kind,
        n_samples=len(samples), per_class=table,
        macro_f1=float(np.mean([table[lbl]["f1"] for lbl in label_space.labels])),
        micro_f1=micro_f1(predictions, golds, label_space),
    )
    if seen_classes is not None:
        seen = [normalize_label(lbl) for lbl in seen_classes]
        seen_in_space = [lbl for lbl in label_space.labels if lbl in set(seen)]
        unseen_in_space = [lbl for lbl in label_space.labels if lbl not in set(seen)]
        report.seen_classes = seen_in_space
        if seen_in_space:
            report.seen_macro_f1 = float(np.mean([table[lbl]["f1"] for lbl in seen_in_space]))
        if unseen_in_space:
            report.unseen_macro_f1 = float(np.mean([table[lbl]["f1"] for lbl in unseen_in_space]))
    return report


@dataclass
class NeighborTable:
    """Per-target ranked nearest terms with cosine similarities."""

    k: int
    rows: list[dict]

    def to_dict(self) -> dict:
        return {"k": self.k, "rows": self.rows}

    def to_text_table(self) -> str:
        lines = []
        for row in self.rows:
            neighbors = ", ".join(
                f"{n['term']} ({n['similarity']:.3f})" for n in row["neighbors"]
            )
            lines.append(f"{row['target']}: {neighbors}")
        return "\n".join(lines)


def nearest_neighbors(targets: Sequence[str], pool: Sequence[str], k: int,
                      model) -> NeighborTable:
    """Exact top-k most similar pool phrases per target, by cosine similarity.

    Phrases are embedded via the label pathway. The pool is deduplicated after
    normalization; a target never retrieves its own normalized string. Ranking
    is a full sort (no approximate index); ties keep pool order.
    """
    pool_normed: list[str] = []
    seen: set[str] = set()
    for phrase in pool:
        canon = normalize_label(phrase)
        if canon and canon not in seen:
            seen.add(canon)
            pool_normed.append(canon)
    if not pool_normed:
        raise ValueError("pool must be non-empty")
    if k > len(pool_normed):
        raise ValueError(f"k={k} exceeds pool size {len(pool_normed)}")

    pool_matrix = np.asarray(model.embed_labels(pool_normed), dtype=np.float64)
    rows = []
    for target in targets:
        canon = normalize_label(target)
        vec = np.asarray(model.embed_label(canon), dtype=np.float64)
        sims = pool_matrix @ vec
        order = np.argsort(-sims, kind="stable")
        neighbors = []
        for idx in order:
            if pool_normed[idx] == canon:
                continue
            neighbors.append({"term": pool_normed[idx], "similarity": float(sims[idx])})
            if len(neighbors) == k:
                break
        rows.append({"target": canon, "neighbors": neighbors})
    return NeighborTable(k=k, rows=rows)


def descriptor_pool(annotations: Sequence[DescriptorAnnotation],
                    samples: Optional[Sequence[TextSample]] = None,
                    split: Optional[str] = None) -> list[str]:
    """Deduplicated descriptor phrases for the probe candidate pool.

    When samples are given, only annotations of samples in the requested split
    contribute (pass split="test" to probe generalization, not training fit).
    """
    allowed = None
    if samples is not None:
        allowed = {s.id for s in samples if split is None or s.split == split}
    pool: list[str] = []
    seen: set[str] = set()
    for annotation in annotations:
        if allowed is not None and annotation.sample_id not in allowed:
            continue
        for term in annotation.descriptors:
            if term not in seen:
                seen.add(term)
                pool.append(term)
    return pool


def random_guess_macro_f1(golds: Sequence[Iterable[str]], label_space: LabelSpace,
                          seed: int = 0, trials: int = 5) -> float:
    """Empirical random-guess baseline: per label, predict positive with the
    label's gold prevalence; macro-F1 averaged over seeded trials."""
    gold_sets = _normalize_sets(golds)
    if not gold_sets:
        raise EmptyInput("baseline requires gold label sets")
    rng = random.Random(seed)
    prevalence = {
        label: sum(label in gold for gold in gold_sets) / len(gold_sets)
        for label in label_space.labels
    }
    scores = []
    for _ in range(trials):
        predictions = [
            {label for label in label_space.labels if rng.random() < prevalence[label]}
            for _ in gold_sets
        ]
        scores.append(macro_f1(predictions, gold_sets, label_space))
    return float(np.mean(scores))
