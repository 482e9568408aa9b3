"""The full alignment model: trainable text side, frozen label encoder,
trainable projectors, and checkpoint persistence."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn

from .alignment import LabelProjector, ProjectorConfig, TextProjector
from .corpus import normalize_label
from .embedding import EncoderConfig, TransformerEncoder, Vocabulary, parameter_checksum
from .errors import CheckpointError

CHECKPOINT_FORMAT_VERSION = 1


class EmotionModel(nn.Module):
    """Text encoder + frozen label encoder + projectors + temperature.

    The label encoder is a snapshot of the text encoder's initial weights and
    never receives gradients; the label *projector* is trainable.
    """

    def __init__(self, vocab: Vocabulary, encoder_config: EncoderConfig,
                 projector_config: ProjectorConfig):
        super().__init__()
        self.vocab = vocab
        self.encoder_config = encoder_config
        self.projector_config = projector_config
        self.text_encoder = TransformerEncoder(vocab, encoder_config)
        self.label_encoder = self.text_encoder.frozen_copy()
        generator = torch.Generator().manual_seed(projector_config.seed)
        self.text_projector = TextProjector(encoder_config.hidden_size, projector_config, generator)
        self.label_projector = LabelProjector(encoder_config.hidden_size, projector_config, generator)
        self._label_cache: dict[tuple[str, ...], np.ndarray] = {}

    @property
    def temperature(self) -> float:
        return self.projector_config.temperature

    @property
    def emotion_dim(self) -> int:
        return self.projector_config.emotion_dim

    def trainable_parameters(self) -> Iterable[nn.Parameter]:
        """Everything except the frozen label encoder."""
        for module in (self.text_encoder, self.text_projector, self.label_projector):
            yield from module.parameters()

    def label_encoder_checksum(self) -> str:
        return parameter_checksum(self.label_encoder)

    # ------------------------------------------------------------------
    # Training path (gradients flow)
    # ------------------------------------------------------------------

    def project_text_batch(self, texts: Sequence[str]) -> torch.Tensor:
        """Unit-row text matrix [B, d] for a batch of raw texts."""
        ids, mask = self.text_encoder.batch_ids(texts)
        states = self.text_encoder(ids, mask)
        return self.text_projector(states, mask)

    def project_label_batch(self, labels: Sequence[str]) -> torch.Tensor:
        """Unit-row label matrix [N, d]; encoder frozen, projector trainable."""
        normalized = [normalize_label(lbl) for lbl in labels]
        ids, mask = self.label_encoder.batch_ids(normalized)
        pooled = self.label_encoder(ids, mask)[:, 0, :]  # first-position marker state
        return self.label_projector(pooled)

    # ------------------------------------------------------------------
    # Inference path (no gradients; label embeddings cacheable per space)
    # ------------------------------------------------------------------

    def clear_label_cache(self) -> None:
        """Drop cached label embeddings; call after any weight mutation."""
        self._label_cache.clear()

    @torch.no_grad()
    def embed_text(self, text: str) -> np.ndarray:
        return self.project_text_batch([text])[0].numpy()

    @torch.no_grad()
    def embed_labels(self, labels: Sequence[str], use_cache: bool = True) -> np.ndarray:
        key = tuple(normalize_label(lbl) for lbl in labels)
        if use_cache and key in self._label_cache:
            return self._label_cache[key]
        matrix = self.project_label_batch(list(key)).numpy()
        if use_cache:
            self._label_cache[key] = matrix
        return matrix

    @torch.no_grad()
    def embed_label(self, label: str) -> np.ndarray:
        return self.embed_labels([label], use_cache=False)[0]

    def alignment_scores(self, text: str, labels: Sequence[str]) -> np.ndarray:
        """Raw alignment row for one text: cosine / temperature per label."""
        text_vec = self.embed_text(text)
        label_matrix = self.embed_labels(labels)
        cosines = np.clip(label_matrix @ text_vec, -1.0, 1.0)
        return cosines / self.temperature

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "format_version": CHECKPOINT_FORMAT_VERSION,
                "encoder_config": self.encoder_config.to_dict(),
                "projector_config": self.projector_config.to_dict(),
                "vocab_tokens": list(self.vocab.tokens),
                "state_dict": self.state_dict(),
            },
            path,
        )

    @classmethod
    def load(cls, path) -> "EmotionModel":
        path = Path(path)
        try:
            payload = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
        version = payload.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint {path} has format_version={version!r}, "
                f"expected {CHECKPOINT_FORMAT_VERSION}"
            )
        model = cls(
            vocab=Vocabulary(payload["vocab_tokens"]),
            encoder_config=EncoderConfig(**payload["encoder_config"]),
            projector_config=ProjectorConfig(**payload["projector_config"]),
        )
        model.load_state_dict(payload["state_dict"])
        model.eval()
        return model


def build_model(vocab: Vocabulary, hidden_size: int = 64, n_layers: int = 2,
                n_heads: int = 4, max_len: int = 128, emotion_dim: int = 768,
                n_queries: int = 8, temperature: float = 0.1, seed: int = 0) -> EmotionModel:
    """Convenience constructor wiring both config objects from flat arguments."""
    encoder_config = EncoderConfig(
        vocab_size=len(vocab), hidden_size=hidden_size, n_layers=n_layers,
        n_heads=n_heads, max_len=max_len, seed=seed,
    )
    projector_config = ProjectorConfig(
        emotion_dim=emotion_dim, n_queries=n_queries, temperature=temperature, seed=seed,
    )
    return EmotionModel(vocab, encoder_config, projector_config)
