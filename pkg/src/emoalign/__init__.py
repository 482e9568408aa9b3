"""emoalign: align texts and free-form emotion descriptors in a shared space,
train from LLM-generated annotations, and predict zero-shot over any label set."""

__version__ = "0.1.0"

from .corpus import (
    Dataset,
    DescriptorAnnotation,
    LabelSpace,
    SyntheticSpec,
    TextSample,
    generate_synthetic_corpus,
    load_dataset,
    normalize_label,
    reserve_validation,
)
from .model import EmotionModel, build_model
from .training import TrainConfig, TrainReport, train

__all__ = [
    "Dataset",
    "DescriptorAnnotation",
    "EmotionModel",
    "LabelSpace",
    "SyntheticSpec",
    "TextSample",
    "TrainConfig",
    "TrainReport",
    "__version__",
    "build_model",
    "generate_synthetic_corpus",
    "load_dataset",
    "normalize_label",
    "reserve_validation",
    "train",
]
