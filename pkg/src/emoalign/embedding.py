"""Tokenizer, vocabulary, and the from-scratch reference text encoder.

The same encoder class serves both sides of the model: the text encoder is
trained, while the label encoder is a frozen snapshot of the text encoder's
initial weights, pooled at the first-position marker token.

A pretrained encoder can be slotted in by implementing :class:`EncoderAdapter`;
no pretrained weights ship with this package.
"""

from __future__ import annotations

import copy
import hashlib
import math
import re
from dataclasses import dataclass
from typing import Protocol, Sequence

import torch
from torch import nn

from .corpus import normalize_label
from .errors import LengthError

PAD_TOKEN = "<pad>"
MARK_TOKEN = "<mark>"
OOV_TOKEN = "<oov>"
RESERVED_TOKENS = (PAD_TOKEN, MARK_TOKEN, OOV_TOKEN)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase split on whitespace; punctuation marks become their own tokens."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Token-to-id table with reserved pad / first-position-marker / OOV slots."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tokens[: len(RESERVED_TOKENS)] != list(RESERVED_TOKENS):
            tokens = list(RESERVED_TOKENS) + tokens
        self.tokens = tokens
        self.index = {tok: i for i, tok in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self.pad_id = self.index[PAD_TOKEN]
        self.mark_id = self.index[MARK_TOKEN]
        self.oov_id = self.index[OOV_TOKEN]

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, texts: Sequence[str]) -> "Vocabulary":
        """Collect tokens from texts in first-occurrence order (deterministic)."""
        seen: set[str] = set(RESERVED_TOKENS)
        tokens: list[str] = []
        for text in texts:
            for tok in tokenize(text):
                if tok not in seen:
                    seen.add(tok)
                    tokens.append(tok)
        return cls(tokens)

    def encode(self, text: str) -> list[int]:
        """Token ids with the first-position marker prepended; unknowns map to OOV."""
        return [self.mark_id] + [self.index.get(tok, self.oov_id) for tok in tokenize(text)]


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    hidden_size: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_len: int = 128
    seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "hidden_size", "n_layers", "n_heads", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.hidden_size % self.n_heads != 0:
            raise ValueError("hidden_size must be divisible by n_heads")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "hidden_size": self.hidden_size,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "max_len": self.max_len,
            "seed": self.seed,
        }


@dataclass
class TokenStates:
    """Per-token hidden states plus the validity mask (False = padding)."""

    states: torch.Tensor  # [n_tokens, hidden]
    mask: torch.Tensor  # [n_tokens], bool


class EncoderAdapter(Protocol):
    """Contract a pretrained encoder must satisfy to replace the reference one.

    Implementations provide contextual token states for texts and a pooled
    first-position vector for (normalized) label strings; ``hidden_size``
    must match the projector input width.
    """

    hidden_size: int

    def encode_text(self, text: str) -> TokenStates: ...

    def encode_label(self, label: str) -> torch.Tensor: ...


class _SelfAttention(nn.Module):
    def __init__(self, hidden_size: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = hidden_size // n_heads
        self.qkv = nn.Linear(hidden_size, 3 * hidden_size)
        self.out = nn.Linear(hidden_size, hidden_size)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        batch, n, hidden = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        shape = (batch, n, self.n_heads, self.head_dim)
        q = q.view(shape).transpose(1, 2)  # [B, heads, n, hd]
        k = k.view(shape).transpose(1, 2)
        v = v.view(shape).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        y = (attn @ v).transpose(1, 2).reshape(batch, n, hidden)
        return self.out(y)


class _Block(nn.Module):
    def __init__(self, hidden_size: int, n_heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(hidden_size)
        self.attn = _SelfAttention(hidden_size, n_heads)
        self.norm2 = nn.LayerNorm(hidden_size)
        self.mlp = nn.Sequential(
            nn.Linear(hidden_size, 4 * hidden_size),
            nn.GELU(),
            nn.Linear(4 * hidden_size, hidden_size),
        )

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), mask)
        return x + self.mlp(self.norm2(x))


class TransformerEncoder(nn.Module):
    """Small pre-norm transformer with learned positional embeddings.

    Initialization is fully determined by ``config.seed`` (a local generator,
    independent of torch's global RNG state).
    """

    def __init__(self, vocab: Vocabulary, config: EncoderConfig):
        super().__init__()
        if config.vocab_size != len(vocab):
            raise ValueError(
                f"config.vocab_size={config.vocab_size} but vocabulary has {len(vocab)} tokens"
            )
        self.vocab = vocab
        self.config = config
        self.token_emb = nn.Embedding(config.vocab_size, config.hidden_size)
        self.pos_emb = nn.Embedding(config.max_len, config.hidden_size)
        self.blocks = nn.ModuleList(
            _Block(config.hidden_size, config.n_heads) for _ in range(config.n_layers)
        )
        self.final_norm = nn.LayerNorm(config.hidden_size)
        self._reset_parameters(torch.Generator().manual_seed(config.seed))

    def _reset_parameters(self, generator: torch.Generator) -> None:
        with torch.no_grad():
            for name, param in self.named_parameters():
                if param.dim() >= 2:
                    param.copy_(torch.randn(param.shape, generator=generator) * 0.02)
                elif name.endswith("bias"):
                    param.zero_()
                else:  # LayerNorm weight
                    param.fill_(1.0)

    @property
    def hidden_size(self) -> int:
        return self.config.hidden_size

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Contextual states for padded id batches: [B, n] -> [B, n, hidden]."""
        n = ids.shape[1]
        if n > self.config.max_len:
            raise LengthError(f"sequence of {n} tokens exceeds max_len={self.config.max_len}")
        x = self.token_emb(ids) + self.pos_emb.weight[:n][None, :, :]
        for block in self.blocks:
            x = block(x, mask)
        return self.final_norm(x)

    def batch_ids(self, texts: Sequence[str]):
        """Encode and right-pad a batch of texts; returns (ids, mask) tensors."""
        id_lists = [self.vocab.encode(t) for t in texts]
        longest = max(len(ids) for ids in id_lists)
        if longest > self.config.max_len:
            raise LengthError(
                f"sequence of {longest} tokens exceeds max_len={self.config.max_len}"
            )
        ids = torch.full((len(id_lists), longest), self.vocab.pad_id, dtype=torch.long)
        mask = torch.zeros((len(id_lists), longest), dtype=torch.bool)
        for row, id_list in enumerate(id_lists):
            ids[row, : len(id_list)] = torch.tensor(id_list, dtype=torch.long)
            mask[row, : len(id_list)] = True
        return ids, mask

    def encode_text(self, text: str) -> TokenStates:
        """States for one text; deterministic given the current weights."""
        ids, mask = self.batch_ids([text])
        states = self.forward(ids, mask)
        return TokenStates(states=states[0], mask=mask[0])

    def encode_label(self, label: str) -> torch.Tensor:
        """First-position pooled state of the (normalized) label string."""
        return self.encode_text(normalize_label(label)).states[0]

    def frozen_copy(self) -> "TransformerEncoder":
        """Deep copy with gradients disabled — the label-encoder snapshot."""
        snapshot = copy.deepcopy(self)
        for param in snapshot.parameters():
            param.requires_grad_(False)
        snapshot.eval()
        return snapshot


def parameter_checksum(module: nn.Module) -> str:
    """Bit-exact digest of all parameters; used to verify the freeze contract."""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()
