"""Zero-shot prediction heads: single-label argmax, calibrated multi-label,
and dimensional regression from descriptor score differences.

All heads share one primitive — the model's raw alignment row for a text over
a list of label strings — so any label space can be swapped in at inference
time without retraining.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from scipy.special import expit

from .corpus import DIMENSIONAL_DESCRIPTORS, LabelSpace, TextSample, normalize_label
from .errors import (
    EmptyValidation,
    KindMismatch,
    LengthMismatch,
    MissingThreshold,
    SchemaError,
)

# Calibration searches decision cutoffs on this fixed grid.
THRESHOLD_GRID = tuple(round(i * 0.05, 2) for i in range(21))


@dataclass(frozen=True)
class ScoreVector:
    """Per-label sigmoid probabilities for one text."""

    label_space: LabelSpace
    scores: dict[str, float]


@dataclass(frozen=True)
class ThresholdTable:
    """Per-label decision thresholds, all on the 0.05 grid."""

    label_space: str
    thresholds: dict[str, float]
    provenance: str = ""

    def __post_init__(self):
        for label, value in self.thresholds.items():
            if not any(abs(value - g) < 1e-12 for g in THRESHOLD_GRID):
                raise ValueError(f"threshold {value} for {label!r} is off the 0.05 grid")

    def to_dict(self) -> dict:
        return {
            "label_space": self.label_space,
            "provenance": self.provenance,
            "thresholds": dict(self.thresholds),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ThresholdTable":
        return cls(
            label_space=data["label_space"],
            thresholds={normalize_label(k): float(v) for k, v in data["thresholds"].items()},
            provenance=data.get("provenance", ""),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ThresholdTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def score_labels(text: str, label_space: LabelSpace, model) -> ScoreVector:
    """Sigmoid of the scaled cosine between the text and every space label.

    The model caches label embeddings per space, so scoring many texts against
    one space encodes the labels once.
    """
    raw = model.alignment_scores(text, label_space.labels)
    probs = expit(raw)
    return ScoreVector(
        label_space=label_space,
        scores={label: float(p) for label, p in zip(label_space.labels, probs)},
    )


def predict_single(text: str, label_space: LabelSpace, model) -> str:
    """Highest-probability label; ties break to the earlier label in the space."""
    if label_space.kind != "single":
        raise KindMismatch(f"label space {label_space.name!r} is {label_space.kind}, not single")
    vector = score_labels(text, label_space, model)
    best = label_space.labels[0]
    for label in label_space.labels[1:]:
        if vector.scores[label] > vector.scores[best]:
            best = label
    return best


def _binary_f1(scores: Sequence[float], positives: Sequence[bool], threshold: float) -> float:
    tp = fp = fn = 0
    for score, is_pos in zip(scores, positives):
        predicted = score > threshold  # strict: threshold 1.0 means "never predict"
        if predicted and is_pos:
            tp += 1
        elif predicted:
            fp += 1
        elif is_pos:
            fn += 1
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def calibrate_thresholds(val_scores: Sequence[ScoreVector],
                         val_gold: Sequence[Iterable[str]],
                         provenance: str = "") -> ThresholdTable:
    """Pick, per label, the grid threshold with the best validation F1.

    Ties go to the lowest threshold; a label whose best achievable F1 is zero
    gets threshold 1.0 so it is never predicted.
    """
    if not val_scores:
        raise EmptyValidation("calibration requires a non-empty validation set")
    if len(val_scores) != len(val_gold):
        raise LengthMismatch(f"{len(val_scores)} score vectors vs {len(val_gold)} gold sets")
    space = val_scores[0].label_space
    if any(sv.label_space.labels != space.labels for sv in val_scores):
        raise ValueError("all score vectors must share one label space")
    gold_sets = [frozenset(normalize_label(g) for g in gold) for gold in val_gold]

    thresholds: dict[str, float] = {}
    for label in space.labels:
        scores = [sv.scores[label] for sv in val_scores]
        positives = [label in gold for gold in gold_sets]
        best_threshold, best_f1 = THRESHOLD_GRID[0], -1.0
        for candidate in THRESHOLD_GRID:
            f1 = _binary_f1(scores, positives, candidate)
            if f1 > best_f1:  # strict: earlier (lower) grid value wins ties
                best_f1, best_threshold = f1, candidate
        thresholds[label] = best_threshold if best_f1 > 0.0 else 1.0
    return ThresholdTable(label_space=space.name, thresholds=thresholds, provenance=provenance)


def calibrate_on_samples(model, samples: Sequence[TextSample], label_space: LabelSpace,
                         provenance: str = "") -> ThresholdTable:
    """Score the given samples and calibrate against their gold label sets."""
    for sample in samples:
        if sample.gold_categorical is None:
            raise SchemaError(f"sample {sample.id!r} has no gold labels; cannot calibrate")
    vectors = [score_labels(s.text, label_space, model) for s in samples]
    golds = [s.gold_categorical for s in samples]
    return calibrate_thresholds(vectors, golds, provenance=provenance)


def predict_multi(text: str, label_space: LabelSpace, thresholds: ThresholdTable,
                  model) -> set[str]:
    """Labels whose score strictly exceeds their threshold; may be empty."""
    missing = [lbl for lbl in label_space.labels if lbl not in thresholds.thresholds]
    if missing:
        raise MissingThreshold(f"no threshold for labels: {missing}")
    vector = score_labels(text, label_space, model)
    return {
        label for label in label_space.labels
        if vector.scores[label] > thresholds.thresholds[label]
    }


def predict_valence_activation(text: str, model) -> tuple[float, float]:
    """Valence and activation as raw alignment differences (pre-sigmoid).

    Valence is the positivity-minus-negativity alignment; activation is the
    high-minus-low-activation alignment.
    """
    raw = model.alignment_scores(text, DIMENSIONAL_DESCRIPTORS)
    valence = float(raw[0] - raw[1])
    activation = float(raw[2] - raw[3])
    return valence, activation
