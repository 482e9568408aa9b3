"""Shared fixtures: tiny corpora, a tiny real model, and lightweight stubs."""

import numpy as np
import pytest

from emoalign.corpus import SyntheticSpec, generate_synthetic_corpus, normalize_label
from emoalign.embedding import Vocabulary
from emoalign.model import build_model


class StubScoreModel:
    """Inference-head stub: raw alignment rows straight from a lookup table."""

    def __init__(self, rows: dict):
        self.rows = {text: {normalize_label(k): v for k, v in row.items()}
                     for text, row in rows.items()}

    def alignment_scores(self, text, labels):
        return np.array([self.rows[text][normalize_label(lbl)] for lbl in labels], dtype=np.float64)


class HashEmbedModel:
    """Probe stub: a deterministic random unit vector per normalized phrase."""

    def __init__(self, dim=6, seed=0):
        self.dim = dim
        self.seed = seed

    def embed_label(self, label):
        canon = normalize_label(label)
        rng = np.random.default_rng(abs(hash((self.seed, canon))) % (2**32))
        vec = rng.standard_normal(self.dim)
        return vec / np.linalg.norm(vec)

    def embed_labels(self, labels, use_cache=True):
        return np.stack([self.embed_label(lbl) for lbl in labels])


class FixedVecModel:
    """Probe stub with explicitly chosen embedding vectors."""

    def __init__(self, mapping: dict):
        self.mapping = {normalize_label(k): np.asarray(v, dtype=np.float64)
                        for k, v in mapping.items()}

    def embed_label(self, label):
        return self.mapping[normalize_label(label)]

    def embed_labels(self, labels, use_cache=True):
        return np.stack([self.embed_label(lbl) for lbl in labels])


@pytest.fixture
def stub_score_model_cls():
    return StubScoreModel


@pytest.fixture
def hash_embed_model():
    return HashEmbedModel()


@pytest.fixture
def fixed_vec_model_cls():
    return FixedVecModel


@pytest.fixture(scope="session")
def small_corpus():
    """4 emotions, 2 synonyms, 160/40/40 samples; fast to train against."""
    spec = SyntheticSpec(n_emotions=4, synonyms_per_emotion=2, n_train=160, n_val=40,
                         n_test=40, filler_vocab_size=20, keywords_per_emotion=2, seed=11)
    dataset, annotations, seen_space, unseen_space = generate_synthetic_corpus(spec)
    return {"spec": spec, "dataset": dataset, "annotations": annotations,
            "seen": seen_space, "unseen": unseen_space}


@pytest.fixture(scope="session")
def tiny_model(small_corpus):
    """Untrained small model over the small corpus vocabulary."""
    dataset = small_corpus["dataset"]
    annotations = small_corpus["annotations"]
    vocab = Vocabulary.build(
        [s.text for s in dataset.samples]
        + [term for a in annotations for term in a.descriptors]
    )
    return build_model(vocab, hidden_size=32, n_layers=2, n_heads=4, max_len=64,
                       emotion_dim=8, n_queries=4, temperature=0.1, seed=5)
