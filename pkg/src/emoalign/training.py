"""Batch assembly, the optimization loop, model selection, and the dimension
ablation runner.

Training optimizes the text encoder and both projectors against descriptor
annotations; the label encoder stays frozen throughout. Batches collect their
own label set, so the alignment matrix width varies batch to batch.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .alignment import ProjectorConfig, alignment_matrix, contrastive_sigmoid_loss
from .corpus import (
    Dataset,
    DescriptorAnnotation,
    LabelSpace,
    TextSample,
    normalize_descriptors,
    reserve_validation,
)
from .embedding import EncoderConfig, Vocabulary
from .errors import CoverageError, DivergenceError, EmptyBatch
from .model import EmotionModel

SELECTION_METRICS = ("val_micro_f1_at_0.5", "val_loss")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 10
    learning_rate: float = 1e-3
    seed: int = 0
    emotion_dim: int = 768
    temperature: float = 0.1
    n_queries: int = 8
    hidden_size: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_len: int = 128
    val_fraction: float = 0.2
    selection_metric: str = "val_micro_f1_at_0.5"
    checkpoint_dir: str = "checkpoints"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (contrast needs multiple samples)")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.selection_metric not in SELECTION_METRICS:
            raise ValueError(f"selection_metric must be one of {SELECTION_METRICS}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrainReport:
    train_losses: list[float]
    val_metrics: list[float]
    selection_metric: str
    selected_epoch: int  # 0-based index into the histories
    checkpoint_path: str
    seed: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def collect_batch_labels(batch_annotations: Sequence[Sequence[str]]):
    """Unique descriptors of a batch in first-occurrence order, plus the
    binary ground-truth matrix Y[i, j] = 1 iff sample i carries label j."""
    if not batch_annotations:
        raise EmptyBatch("cannot collect labels from an empty batch")
    normalized = [normalize_descriptors(desc) for desc in batch_annotations]
    labels: list[str] = []
    position: dict[str, int] = {}
    for descriptors in normalized:
        for term in descriptors:
            if term not in position:
                position[term] = len(labels)
                labels.append(term)
    targets = np.zeros((len(normalized), len(labels)), dtype=np.float32)
    for i, descriptors in enumerate(normalized):
        for term in descriptors:
            targets[i, position[term]] = 1.0
    return labels, targets


def index_annotations(annotations: Sequence[DescriptorAnnotation]) -> dict[str, DescriptorAnnotation]:
    return {a.sample_id: a for a in annotations}


def descriptor_micro_f1(model: EmotionModel, samples: Sequence[TextSample],
                        annotations_by_id: dict[str, DescriptorAnnotation],
                        threshold: float = 0.5, batch_size: int = 64) -> float:
    """Micro-F1 of thresholded sigmoid scores against descriptor annotations.

    The label set is every unique descriptor over the given samples; this is
    the training-task fit metric and the default model-selection signal.
    """
    descriptor_lists = [annotations_by_id[s.id].descriptors for s in samples]
    labels, gold = collect_batch_labels(descriptor_lists)
    with torch.no_grad():
        label_matrix = model.project_label_batch(labels)
        predicted = []
        for start in range(0, len(samples), batch_size):
            chunk = samples[start:start + batch_size]
            text_matrix = model.project_text_batch([s.text for s in chunk])
            scores = torch.sigmoid(alignment_matrix(text_matrix, label_matrix, model.temperature))
            predicted.append((scores > threshold).numpy())
    pred = np.concatenate(predicted, axis=0)
    gold = gold.astype(bool)
    tp = int(np.logical_and(pred, gold).sum())
    fp = int(np.logical_and(pred, ~gold).sum())
    fn = int(np.logical_and(~pred, gold).sum())
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def _validation_loss(model: EmotionModel, samples: Sequence[TextSample],
                     annotations_by_id: dict[str, DescriptorAnnotation],
                     temperature: float, batch_size: int) -> float:
    losses = []
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start:start + batch_size]
            labels, targets = collect_batch_labels(
                [annotations_by_id[s.id].descriptors for s in chunk]
            )
            text_matrix = model.project_text_batch([s.text for s in chunk])
            label_matrix = model.project_label_batch(labels)
            scores = alignment_matrix(text_matrix, label_matrix, temperature)
            losses.append(float(contrastive_sigmoid_loss(scores, torch.as_tensor(targets))))
    return float(np.mean(losses))


def train(dataset, annotations: Sequence[DescriptorAnnotation], config: TrainConfig) -> TrainReport:
    """Optimize the model on descriptor annotations and keep the best epoch.

    Samples tagged ``split="val"`` are the selection set; if none exist, the
    configured fraction is reserved from the training samples. Deterministic
    for a fixed seed under single-threaded execution (enforced here via
    ``torch.set_num_threads(1)``).
    """
    torch.set_num_threads(1)
    samples = dataset.samples if isinstance(dataset, Dataset) else list(dataset)
    annotations_by_id = index_annotations(annotations)

    train_samples = [s for s in samples if s.split in (None, "train")]
    val_samples = [s for s in samples if s.split == "val"]
    if not val_samples:
        train_samples, val_samples = reserve_validation(
            train_samples, config.val_fraction, config.seed
        )
    missing = sorted(
        s.id for s in [*train_samples, *val_samples] if s.id not in annotations_by_id
    )
    if missing:
        raise CoverageError(f"samples without annotation: {missing}", missing)
    if len(train_samples) < 2:
        raise EmptyBatch("training requires at least 2 annotated samples")

    vocab_sources = [s.text for s in train_samples]
    vocab_sources.extend(
        term for s in train_samples for term in annotations_by_id[s.id].descriptors
    )
    vocab = Vocabulary.build(vocab_sources)
    model = EmotionModel(
        vocab,
        EncoderConfig(
            vocab_size=len(vocab), hidden_size=config.hidden_size, n_layers=config.n_layers,
            n_heads=config.n_heads, max_len=config.max_len, seed=config.seed,
        ),
        ProjectorConfig(
            emotion_dim=config.emotion_dim, n_queries=config.n_queries,
            temperature=config.temperature, seed=config.seed,
        ),
    )
    frozen_checksum = model.label_encoder_checksum()
    optimizer = torch.optim.Adam(model.trainable_parameters(), lr=config.learning_rate)
    shuffler = random.Random(config.seed)

    maximize = config.selection_metric == "val_micro_f1_at_0.5"
    train_losses: list[float] = []
    val_metrics: list[float] = []
    best_metric: Optional[float] = None
    best_epoch = 0
    best_state = None

    for epoch in range(config.epochs):
        order = list(range(len(train_samples)))
        shuffler.shuffle(order)
        batch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch_idx = order[start:start + config.batch_size]
            if len(batch_idx) < 2:
                continue  # a single sample offers no contrast
            batch = [train_samples[i] for i in batch_idx]
            labels, targets = collect_batch_labels(
                [annotations_by_id[s.id].descriptors for s in batch]
            )
            text_matrix = model.project_text_batch([s.text for s in batch])
            label_matrix = model.project_label_batch(labels)
            scores = alignment_matrix(text_matrix, label_matrix, config.temperature)
            loss = contrastive_sigmoid_loss(scores, torch.as_tensor(targets))
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            batch_losses.append(float(loss.detach()))
        train_losses.append(float(np.mean(batch_losses)))

        if config.selection_metric == "val_micro_f1_at_0.5":
            metric = descriptor_micro_f1(model, val_samples, annotations_by_id)
        else:
            metric = _validation_loss(
                model, val_samples, annotations_by_id, config.temperature, config.batch_size
            )
        val_metrics.append(metric)
        improved = (
            best_metric is None
            or (maximize and metric > best_metric)
            or (not maximize and metric < best_metric)
        )
        if improved:
            best_metric = metric
            best_epoch = epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

    if model.label_encoder_checksum() != frozen_checksum:
        raise DivergenceError("label encoder changed during training (freeze violated)")

    model.load_state_dict(best_state)
    model.clear_label_cache()
    checkpoint_path = Path(config.checkpoint_dir) / "model.pt"
    model.save(checkpoint_path)
    return TrainReport(
        train_losses=train_losses,
        val_metrics=val_metrics,
        selection_metric=config.selection_metric,
        selected_epoch=best_epoch,
        checkpoint_path=str(checkpoint_path),
        seed=config.seed,
    )


def ablate_dimensions(dataset, annotations: Sequence[DescriptorAnnotation],
                      dims: Sequence[int], config: TrainConfig,
                      label_spaces: Sequence[LabelSpace] = ()) -> list[dict]:
    """Train one model per emotion-space dimension (same seed and data) and
    evaluate each on the supplied label spaces.

    Per-space thresholds are calibrated on the validation split; macro-F1 is
    reported on the test split (falling back to validation when the dataset
    has no test samples). Rows mirror the layout: dimension, training-task
    micro-F1, then one macro-F1 column per space.
    """
    from .evaluation import evaluate  # local import keeps module deps one-way
    from .inference import calibrate_on_samples

    if not dims:
        raise ValueError("dims must be non-empty")
    samples = dataset.samples if isinstance(dataset, Dataset) else list(dataset)
    annotations_by_id = index_annotations(annotations)
    val_samples = [s for s in samples if s.split == "val"]
    test_samples = [s for s in samples if s.split == "test"] or val_samples

    rows = []
    for dim in dims:
        run_config = dataclasses.replace(
            config,
            emotion_dim=dim,
            checkpoint_dir=str(Path(config.checkpoint_dir) / f"dim-{dim}"),
        )
        report = train(dataset, annotations, run_config)
        model = EmotionModel.load(report.checkpoint_path)
        fit_samples = [s for s in test_samples if s.id in annotations_by_id]
        row: dict = {
            "emotion_dim": dim,
            "descriptor_micro_f1": (
                descriptor_micro_f1(model, fit_samples, annotations_by_id)
                if fit_samples else None
            ),
            "macro_f1": {},
        }
        for space in label_spaces:
            thresholds = calibrate_on_samples(model, val_samples, space)
            eval_view = Dataset(name=f"{getattr(dataset, 'name', 'dataset')}-test",
                                kind=getattr(dataset, "kind", "multi"), samples=test_samples)
            result = evaluate(eval_view, model, space, thresholds=thresholds)
            row["macro_f1"][space.name] = result.macro_f1
        rows.append(row)
    return rows


def format_ablation_table(rows: Sequence[dict]) -> str:
    """Aligned plain-text rendering of ablation rows for eyeballing/diffing."""
    space_names = sorted({name for row in rows for name in row["macro_f1"]})
    header = ["dim", "train-fit"] + space_names
    lines = []
    for row in rows:
        fit = row["descriptor_micro_f1"]
        cells = [str(row["emotion_dim"]), f"{fit:.3f}" if fit is not None else "-"]
        cells += [f"{row['macro_f1'][name]:.3f}" for name in space_names]
        lines.append(cells)
    widths = [max(len(header[i]), *(len(line[i]) for line in lines)) for i in range(len(header))]
    rendered = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    rendered += ["  ".join(c.ljust(w) for c, w in zip(line, widths)) for line in lines]
    return "\n".join(rendered)
