"""Shared emotion space: projectors, alignment matrix, and the contrastive loss.

Both projected sides live on the unit sphere, so the alignment matrix holds
cosine similarities scaled by 1/temperature. The loss treats every text-label
pair as an independent sigmoid decision, averaging positive and negative pairs
separately so sparse batches do not drown the positives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .embedding import TokenStates
from .errors import ProjectionError, ShapeError

DEFAULT_TEMPERATURE = 0.1

# Vectors with a pre-normalization norm below this are dead projections;
# surfacing them beats silently normalizing noise.
NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class ProjectorConfig:
    emotion_dim: int = 768
    n_queries: int = 8
    temperature: float = DEFAULT_TEMPERATURE
    seed: int = 0

    def __post_init__(self):
        if self.emotion_dim < 1:
            raise ValueError("emotion_dim must be >= 1")
        if self.n_queries < 1:
            raise ValueError("n_queries must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    def to_dict(self) -> dict:
        return {
            "emotion_dim": self.emotion_dim,
            "n_queries": self.n_queries,
            "temperature": self.temperature,
            "seed": self.seed,
        }


def unit_rows(x: torch.Tensor) -> torch.Tensor:
    """L2-normalize along the last axis, refusing near-zero vectors."""
    norms = x.norm(dim=-1, keepdim=True)
    if (norms < NORM_FLOOR).any():
        raise ProjectionError("projection produced a near-zero vector; cannot normalize")
    return x / norms


class TextProjector(nn.Module):
    """Learned queries cross-attend over token states, mean-pool, map to the
    emotion space, and normalize.

    Single attention block, single head; masked positions never receive
    attention weight.
    """

    def __init__(self, hidden_size: int, config: ProjectorConfig,
                 generator: torch.Generator | None = None):
        super().__init__()
        self.hidden_size = hidden_size
        self.config = config
        self.queries = nn.Parameter(torch.empty(config.n_queries, hidden_size))
        self.query_proj = nn.Linear(hidden_size, hidden_size)
        self.key_proj = nn.Linear(hidden_size, hidden_size)
        self.value_proj = nn.Linear(hidden_size, hidden_size)
        self.out_proj = nn.Linear(hidden_size, hidden_size)
        self.to_space = nn.Linear(hidden_size, config.emotion_dim)
        gen = generator if generator is not None else torch.Generator().manual_seed(config.seed)
        with torch.no_grad():
            for name, param in self.named_parameters():
                if param.dim() >= 2:
                    param.copy_(torch.randn(param.shape, generator=gen) * 0.02)
                else:
                    param.zero_()

    def forward(self, states: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """[B, n, h] + [B, n] -> [B, d] unit rows (or unbatched [n, h] -> [d])."""
        unbatched = states.dim() == 2
        if unbatched:
            states = states[None]
            mask = mask[None]
        q = self.query_proj(self.queries)  # [Q, h]
        k = self.key_proj(states)  # [B, n, h]
        v = self.value_proj(states)
        scores = torch.einsum("qh,bnh->bqn", q, k) / math.sqrt(self.hidden_size)
        scores = scores.masked_fill(~mask[:, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        pooled = self.out_proj(torch.einsum("bqn,bnh->bqh", attn, v)).mean(dim=1)
        out = unit_rows(self.to_space(pooled))
        return out[0] if unbatched else out


class LabelProjector(nn.Module):
    """Bias-free linear map from pooled label states into the emotion space."""

    def __init__(self, hidden_size: int, config: ProjectorConfig,
                 generator: torch.Generator | None = None):
        super().__init__()
        self.linear = nn.Linear(hidden_size, config.emotion_dim, bias=False)
        gen = generator if generator is not None else torch.Generator().manual_seed(config.seed + 1)
        with torch.no_grad():
            self.linear.weight.copy_(
                torch.randn(self.linear.weight.shape, generator=gen) * 0.02
            )

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return unit_rows(self.linear(pooled))


def project_text(states: TokenStates, projector: TextProjector) -> torch.Tensor:
    """Project one text's token states to a unit vector in the emotion space."""
    return projector(states.states, states.mask)


def project_label(label_vec: torch.Tensor, projector: LabelProjector) -> torch.Tensor:
    """Project one pooled label vector to a unit vector in the emotion space."""
    return projector(label_vec)


def alignment_matrix(text_matrix, label_matrix, temperature: float = DEFAULT_TEMPERATURE) -> torch.Tensor:
    """Scaled cosine similarities: rows are texts, columns are labels.

    Inputs must already be unit-norm (checked to 1e-4); cosines are clamped to
    [-1, 1] so entries stay within [-1/temperature, 1/temperature] even under
    floating-point spill.
    """
    T = torch.as_tensor(text_matrix)
    L = torch.as_tensor(label_matrix)
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if T.dim() != 2 or L.dim() != 2 or T.shape[1] != L.shape[1]:
        raise ShapeError(f"incompatible shapes {tuple(T.shape)} and {tuple(L.shape)}")
    for rows, side in ((T, "text"), (L, "label")):
        deviation = (rows.norm(dim=1) - 1.0).abs().max()
        if deviation > 1e-4:
            raise ValueError(f"{side} rows are not unit-norm (max deviation {deviation:.3e})")
    return (T @ L.T).clamp(-1.0, 1.0) / temperature


def _check_pair_matrices(alignment, targets):
    M = torch.as_tensor(alignment)
    Y = torch.as_tensor(targets)
    if M.shape != Y.shape:
        raise ShapeError(f"alignment {tuple(M.shape)} vs targets {tuple(Y.shape)}")
    if not ((Y == 0) | (Y == 1)).all():
        raise ValueError("targets must be binary")
    return M, Y > 0.5


def contrastive_sigmoid_loss(alignment, targets) -> torch.Tensor:
    """Mean negative log-probability of positives plus of negatives, averaged
    separately per class; an empty class contributes exactly zero.

    Computed in softplus form (-log sigmoid(x) = softplus(-x)), so it is finite
    for the full range of scaled cosines. Differentiable; returns a scalar
    tensor in the input dtype.
    """
    M, positive = _check_pair_matrices(alignment, targets)
    zero = M.new_zeros(())
    pos_term = F.softplus(-M[positive]).mean() if positive.any() else zero
    neg_term = F.softplus(M[~positive]).mean() if (~positive).any() else zero
    return pos_term + neg_term


def loss_gradient(alignment, targets) -> torch.Tensor:
    """Closed-form derivative of the loss with respect to each alignment entry.

    Positive pairs get -(1 - sigmoid(M)) / P, negative pairs sigmoid(M) / Q,
    where P and Q count the pairs in each class; an empty class has no entries,
    hence zero gradient.
    """
    M, positive = _check_pair_matrices(alignment, targets)
    sig = torch.sigmoid(M)
    n_pos = positive.sum().to(M.dtype).clamp(min=1.0)
    n_neg = (~positive).sum().to(M.dtype).clamp(min=1.0)
    return torch.where(positive, -(1.0 - sig) / n_pos, sig / n_neg)
