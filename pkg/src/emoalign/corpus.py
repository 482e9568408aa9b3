"""Dataset ingestion, canonical record types, splits, and the synthetic corpus.

The canonical on-disk format is JSONL, one record per line:

    sample:      {"id": str, "text": str, "labels": [str]?, "scores": {str: float}?, "split": str?}
    annotation:  {"sample_id": str, "descriptors": [str]}
    label space: {"name": str, "kind": "single"|"multi"|"dimensional", "labels": [str]}

A TSV loader is provided for GoEmotions-style exports
(``text<TAB>comma-separated labels<TAB>id``, no header).
"""

from __future__ import annotations

import json
import math
import random
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import EmptyInput, ParseError, SchemaError

VALID_KINDS = ("single", "multi", "dimensional")
VALID_SPLITS = ("train", "val", "test")

# Descriptor quadruple used for dimensional regression, already normalized.
DIMENSIONAL_DESCRIPTORS = ("positivity", "negativity", "high activation", "low activation")
DIMENSION_NAMES = ("valence", "activation")


def normalize_label(label: str) -> str:
    """Canonical form of a label/descriptor: NFC, lowercased, whitespace-collapsed.

    Surface variety (multiword phrases, part-of-speech variants) is kept;
    only casing and whitespace are touched, so equality is well-defined.
    Idempotent: normalizing a normalized string is the identity.
    """
    text = unicodedata.normalize("NFC", label)
    return " ".join(text.lower().split())


def normalize_descriptors(descriptors: Iterable[str]) -> tuple[str, ...]:
    """Normalize, drop empties, and dedupe preserving first occurrence."""
    seen: set[str] = set()
    out: list[str] = []
    for raw in descriptors:
        term = normalize_label(raw)
        if term and term not in seen:
            seen.add(term)
            out.append(term)
    return tuple(out)


@dataclass(frozen=True)
class TextSample:
    """One text with optional gold labels and a split tag."""

    id: str
    text: str
    gold_categorical: Optional[frozenset[str]] = None
    gold_dimensional: Optional[dict[str, float]] = None
    split: Optional[str] = None

    def __post_init__(self):
        if not self.text:
            raise SchemaError(f"sample {self.id!r}: text must be non-empty")
        if self.gold_categorical is not None and self.gold_dimensional is not None:
            raise SchemaError(f"sample {self.id!r}: categorical and dimensional gold are exclusive")
        if self.split is not None and self.split not in VALID_SPLITS:
            raise SchemaError(f"sample {self.id!r}: split {self.split!r} not in {VALID_SPLITS}")


@dataclass(frozen=True)
class DescriptorAnnotation:
    """Ordered free-form emotion descriptor phrases for one sample."""

    sample_id: str
    descriptors: tuple[str, ...]

    def __post_init__(self):
        if not self.descriptors:
            raise SchemaError(f"annotation {self.sample_id!r}: descriptor list is empty")
        if self.descriptors != normalize_descriptors(self.descriptors):
            raise SchemaError(f"annotation {self.sample_id!r}: descriptors are not normalized")


@dataclass(frozen=True)
class LabelSpace:
    """A named, ordered set of label strings plus the prediction mode they imply."""

    name: str
    labels: tuple[str, ...]
    kind: str

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise SchemaError(f"label space {self.name!r}: kind {self.kind!r} not in {VALID_KINDS}")
        normalized = tuple(normalize_label(lbl) for lbl in self.labels)
        if len(set(normalized)) != len(normalized):
            raise SchemaError(f"label space {self.name!r}: labels not unique after normalization")
        object.__setattr__(self, "labels", normalized)
        if self.kind == "dimensional" and set(normalized) != set(DIMENSIONAL_DESCRIPTORS):
            raise SchemaError(
                f"label space {self.name!r}: dimensional spaces must carry exactly "
                f"{DIMENSIONAL_DESCRIPTORS}"
            )

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, data: dict) -> "LabelSpace":
        return cls(name=data["name"], labels=tuple(data["labels"]), kind=data["kind"])


@dataclass
class Dataset:
    """A named collection of samples sharing one label-space kind."""

    name: str
    kind: str
    samples: list[TextSample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def by_split(self, split: Optional[str]) -> list[TextSample]:
        if split is None:
            return list(self.samples)
        return [s for s in self.samples if s.split == split]


@dataclass(frozen=True)
class VocabularyStats:
    """Descriptive statistics over a descriptor annotation corpus."""

    unique_terms: int
    total_terms: int
    mean_terms_per_sample: float
    sd_terms_per_sample: float
    mean_chars_per_term: float
    sd_chars_per_term: float


def _population_sd(values: Sequence[float], mean: float) -> float:
    return math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))


def descriptor_vocabulary_stats(annotations: Sequence[DescriptorAnnotation]) -> VocabularyStats:
    """Vocabulary statistics over normalized descriptors.

    Character statistics are over term occurrences, not unique terms.
    Standard deviations are population (divide by n).
    """
    if not annotations:
        raise EmptyInput("descriptor_vocabulary_stats requires at least one annotation")
    terms_per_sample = [len(a.descriptors) for a in annotations]
    occurrences = [term for a in annotations for term in a.descriptors]
    chars = [len(term) for term in occurrences]
    mean_terms = sum(terms_per_sample) / len(terms_per_sample)
    mean_chars = sum(chars) / len(chars)
    return VocabularyStats(
        unique_terms=len(set(occurrences)),
        total_terms=len(occurrences),
        mean_terms_per_sample=mean_terms,
        sd_terms_per_sample=_population_sd(terms_per_sample, mean_terms),
        mean_chars_per_term=mean_chars,
        sd_chars_per_term=_population_sd(chars, mean_chars),
    )


# ---------------------------------------------------------------------------
# Loading / saving
# ---------------------------------------------------------------------------


def _sample_from_record(record: dict, kind: str, row: int) -> TextSample:
    if "id" not in record or "text" not in record:
        raise ParseError(f"row {row}: record must carry 'id' and 'text'")
    sample_id = str(record["id"])
    text = record["text"]
    if not isinstance(text, str) or not text:
        raise ParseError(f"row {row} (id {sample_id!r}): text must be a non-empty string")
    split = record.get("split")

    gold_cat = None
    gold_dim = None
    if kind == "dimensional":
        scores = record.get("scores")
        if scores is not None:
            try:
                gold_dim = {normalize_label(k): float(v) for k, v in scores.items()}
            except (TypeError, ValueError, AttributeError) as exc:
                raise ParseError(f"row {row} (id {sample_id!r}): bad scores: {exc}") from None
    else:
        labels = record.get("labels")
        if labels is not None:
            if not isinstance(labels, (list, tuple)):
                raise ParseError(f"row {row} (id {sample_id!r}): labels must be a list")
            gold_cat = frozenset(normalize_label(lbl) for lbl in labels)
            if kind == "single" and len(gold_cat) != 1:
                raise SchemaError(
                    f"row {row} (id {sample_id!r}): single-label record has "
                    f"{len(gold_cat)} gold labels, expected 1"
                )
    try:
        return TextSample(
            id=sample_id, text=text, gold_categorical=gold_cat,
            gold_dimensional=gold_dim, split=split,
        )
    except SchemaError as exc:
        raise ParseError(f"row {row}: {exc}") from None


def load_dataset(path, format: str = "jsonl", kind: str = "multi", name: Optional[str] = None) -> Dataset:
    """Load a dataset of validated samples from a local JSONL or TSV file."""
    if kind not in VALID_KINDS:
        raise ValueError(f"kind must be one of {VALID_KINDS}, got {kind!r}")
    if format not in ("jsonl", "tsv"):
        raise ValueError(f"format must be 'jsonl' or 'tsv', got {format!r}")
    path = Path(path)
    samples: list[TextSample] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for row, line in enumerate(handle):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if format == "jsonl":
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"row {row}: invalid JSON: {exc}") from None
                if not isinstance(record, dict):
                    raise ParseError(f"row {row}: expected a JSON object")
            else:
                cols = line.split("\t")
                if len(cols) != 3:
                    raise ParseError(f"row {row}: expected 3 tab-separated columns, got {len(cols)}")
                text, label_field, sample_id = cols
                labels = [part for part in label_field.split(",") if part.strip()]
                record = {"id": sample_id, "text": text, "labels": labels}
            sample = _sample_from_record(record, kind, row)
            if sample.id in seen_ids:
                raise SchemaError(f"row {row}: duplicate sample id {sample.id!r}")
            seen_ids.add(sample.id)
            samples.append(sample)
    return Dataset(name=name or path.stem, kind=kind, samples=samples)


def sample_to_record(sample: TextSample) -> dict:
    record: dict = {"id": sample.id, "text": sample.text}
    if sample.gold_categorical is not None:
        record["labels"] = sorted(sample.gold_categorical)
    if sample.gold_dimensional is not None:
        record["scores"] = dict(sorted(sample.gold_dimensional.items()))
    if sample.split is not None:
        record["split"] = sample.split
    return record


def save_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for sample in dataset.samples:
            handle.write(json.dumps(sample_to_record(sample), ensure_ascii=False) + "\n")


def load_annotations(path) -> list[DescriptorAnnotation]:
    path = Path(path)
    annotations = []
    with path.open("r", encoding="utf-8") as handle:
        for row, line in enumerate(handle):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                annotations.append(
                    DescriptorAnnotation(
                        sample_id=str(record["sample_id"]),
                        descriptors=normalize_descriptors(record["descriptors"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"row {row}: invalid annotation record: {exc}") from None
    return annotations


def save_annotations(annotations: Sequence[DescriptorAnnotation], path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for ann in annotations:
            record = {"sample_id": ann.sample_id, "descriptors": list(ann.descriptors)}
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Split management
# ---------------------------------------------------------------------------


def reserve_validation(samples: Sequence[TextSample], fraction: float, seed: int):
    """Split samples into (train, val) by seeded shuffle, taking the tail as val.

    The validation size is round-half-up of ``fraction * len(samples)``.
    Pure function of its arguments: same inputs give the same split.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    if not samples:
        raise EmptyInput("cannot reserve validation from an empty dataset")
    order = list(samples)
    random.Random(seed).shuffle(order)
    n_val = int(math.floor(fraction * len(order) + 0.5))  # round half up
    if n_val == 0:
        return order, []
    return order[:-n_val], order[-n_val:]


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of the generated desk-scale corpus."""

    n_emotions: int = 8
    synonyms_per_emotion: int = 4
    n_train: int = 2000
    n_val: int = 400
    n_test: int = 400
    filler_vocab_size: int = 40
    keywords_per_emotion: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.synonyms_per_emotion < 2:
            raise ValueError("synonyms_per_emotion must be >= 2 (seen and unseen halves)")
        for name in ("n_emotions", "n_train", "n_val", "n_test",
                     "filler_vocab_size", "keywords_per_emotion"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return {
            "n_emotions": self.n_emotions,
            "synonyms_per_emotion": self.synonyms_per_emotion,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "n_test": self.n_test,
            "filler_vocab_size": self.filler_vocab_size,
            "keywords_per_emotion": self.keywords_per_emotion,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        return cls(**data)


_SYLLABLES = (
    "ba", "be", "bi", "bo", "bu", "da", "de", "di", "do", "du",
    "fa", "fe", "fi", "fo", "fu", "ga", "ge", "gi", "go", "gu",
    "ka", "ke", "ki", "ko", "ku", "la", "le", "li", "lo", "lu",
    "ma", "me", "mi", "mo", "mu", "na", "ne", "ni", "no", "nu",
    "pa", "pe", "pi", "po", "pu", "ra", "re", "ri", "ro", "ru",
    "sa", "se", "si", "so", "su", "ta", "te", "ti", "to", "tu",
    "va", "ve", "vi", "vo", "vu", "za", "ze", "zi", "zo", "zu",
)


def _make_words(rng: random.Random, count: int, taken: set[str], n_syllables: int = 3) -> list[str]:
    words: list[str] = []
    while len(words) < count:
        word = "".join(rng.choice(_SYLLABLES) for _ in range(n_syllables))
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


@dataclass(frozen=True)
class _SyntheticBlueprint:
    filler: tuple[str, ...]
    keywords: tuple[tuple[str, ...], ...]  # per emotion, appear in texts
    seen_synonyms: tuple[tuple[str, ...], ...]  # per emotion, usable in annotations
    unseen_synonyms: tuple[tuple[str, ...], ...]  # per emotion, never annotated


def _synthetic_blueprint(spec: SyntheticSpec, rng: random.Random) -> _SyntheticBlueprint:
    taken: set[str] = set()
    filler = _make_words(rng, spec.filler_vocab_size, taken)
    heads = _make_words(rng, spec.n_emotions, taken)
    tails = _make_words(rng, spec.synonyms_per_emotion, taken, n_syllables=2)
    keywords = [
        _make_words(rng, spec.keywords_per_emotion, taken)
        for _ in range(spec.n_emotions)
    ]
    n_seen = (spec.synonyms_per_emotion + 1) // 2
    # Rotate the shared tails so each tail token is seen for some emotions and
    # unseen for others; phrase-level disjointness still holds via the head.
    synonyms = [
        tuple(
            f"{heads[e]} {tails[(e + j) % spec.synonyms_per_emotion]}"
            for j in range(spec.synonyms_per_emotion)
        )
        for e in range(spec.n_emotions)
    ]
    return _SyntheticBlueprint(
        filler=tuple(filler),
        keywords=tuple(tuple(kws) for kws in keywords),
        seen_synonyms=tuple(syn[:n_seen] for syn in synonyms),
        unseen_synonyms=tuple(syn[n_seen:] for syn in synonyms),
    )


def synthetic_mock_table(spec: SyntheticSpec) -> dict[str, str]:
    """Keyword-to-response table driving the mock annotation client.

    Each keyword token of an emotion maps to one of its seen synonym phrases,
    so mock-annotating the generated texts reproduces descriptor supervision
    of the same shape as the bundled annotations.
    """
    blueprint = _synthetic_blueprint(spec, random.Random(spec.seed))
    table: dict[str, str] = {}
    for e, keyword_list in enumerate(blueprint.keywords):
        seen = blueprint.seen_synonyms[e]
        for j, keyword in enumerate(keyword_list):
            table[keyword] = seen[j % len(seen)]
    return table


def generate_synthetic_corpus(spec: SyntheticSpec):
    """Build a deterministic desk-scale corpus for end-to-end verification.

    Construction:
      * each emotion gets keyword tokens (appear in texts) and synonym
        descriptor phrases ``"<head> <tail>"`` where the head token is unique
        to the emotion and the tail tokens are shared across emotions in
        rotated order, so every tail token is observable in training while
        each unseen *phrase* is a novel combination;
      * a text is filler tokens plus keywords of 1-3 emotions, shuffled;
      * its annotation picks one random seen synonym per present emotion;
      * gold sets carry the sample's emotions expressed in both the seen and
        the unseen label space (evaluation restricts to the space in use).

    Returns ``(dataset, annotations, seen_space, unseen_space)``. Fully
    deterministic for a fixed spec (including the seed).
    """
    rng = random.Random(spec.seed)
    blueprint = _synthetic_blueprint(spec, rng)
    filler = blueprint.filler
    keywords = blueprint.keywords
    seen_synonyms = blueprint.seen_synonyms

    seen_space = LabelSpace(
        name="synthetic-seen",
        labels=tuple(syn[0] for syn in blueprint.seen_synonyms),
        kind="multi",
    )
    unseen_space = LabelSpace(
        name="synthetic-unseen",
        labels=tuple(syn[0] for syn in blueprint.unseen_synonyms),
        kind="multi",
    )

    samples: list[TextSample] = []
    annotations: list[DescriptorAnnotation] = []
    split_sizes = (("train", spec.n_train), ("val", spec.n_val), ("test", spec.n_test))
    for split, size in split_sizes:
        for i in range(size):
            present = sorted(rng.sample(range(spec.n_emotions), rng.randint(1, min(3, spec.n_emotions))))
            tokens = [rng.choice(filler) for _ in range(rng.randint(4, 8))]
            for e in present:
                tokens.extend(rng.sample(keywords[e], min(2, spec.keywords_per_emotion)))
            rng.shuffle(tokens)
            gold = frozenset(
                seen_space.labels[e] for e in present
            ) | frozenset(unseen_space.labels[e] for e in present)
            sample_id = f"{split}-{i:05d}"
            samples.append(
                TextSample(id=sample_id, text=" ".join(tokens), gold_categorical=gold, split=split)
            )
            annotations.append(
                DescriptorAnnotation(
                    sample_id=sample_id,
                    descriptors=tuple(rng.choice(seen_synonyms[e]) for e in present),
                )
            )

    dataset = Dataset(name=f"synthetic-{spec.seed}", kind="multi", samples=samples)
    return dataset, annotations, seen_space, unseen_space
