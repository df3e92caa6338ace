"""Frame-level sound event detector with per-class attention pooling.

The encoder maps a log-mel spectrogram to a sequence of embeddings; a linear
strong head gives frame probabilities and a separate linear attention head
gives per-class softmax weights over time that pool the frame probabilities
into clip-level (weak) probabilities.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Sequence, Set, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from s5sep.errors import InvalidInputError

BCE_EPS = 1e-6


@dataclass(frozen=True)
class SedConfig:
    n_mels: int = 64
    n_blocks: int = 4
    embed_dim: int = 96
    n_heads: int = 4
    time_subsample: int = 4
    n_classes: int = 6
    max_frames: int = 1024
    mlp_ratio: float = 2.0

    def __post_init__(self):
        if self.embed_dim % self.n_heads:
            raise InvalidInputError("embed_dim must be divisible by n_heads")
        if self.n_blocks < 1 or self.time_subsample < 1 or self.n_classes < 1:
            raise InvalidInputError("n_blocks, time_subsample and n_classes must be >= 1")

    def output_frames(self, n_frames: int) -> int:
        return math.ceil(n_frames / self.time_subsample)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EmbeddingSequence:
    values: torch.Tensor  # [..., S, D]
    per_block_hidden: List[torch.Tensor]  # N x [..., D, 1, S]


@dataclass
class SedOutput:
    embeddings: EmbeddingSequence
    strong: torch.Tensor  # [..., S, C]
    weak: torch.Tensor  # [..., C]
    alphas: torch.Tensor  # [..., S, C]


@dataclass
class SedLabels:
    strong: torch.Tensor  # [..., S, C] binary
    weak: torch.Tensor  # [..., C] binary


class Block(nn.Module):
    """Pre-norm self-attention block."""

    def __init__(self, dim: int, n_heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, n_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


def _time_pool(x: torch.Tensor, factor: int) -> torch.Tensor:
    # [B, T, D] -> [B, ceil(T/factor), D]; a partial last window averages its own frames
    if factor == 1:
        return x
    return F.avg_pool1d(x.transpose(1, 2), factor, factor, ceil_mode=True).transpose(1, 2)


def strong_head(emb: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """``sigmoid(W e_s + b)`` for every frame; ``emb`` is ``[..., S, D]``."""
    return torch.sigmoid(F.linear(emb, weight, bias))


def attention_pool(
    emb: torch.Tensor, strong: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Pool ``strong[..., S, C]`` over time with per-class softmax attention.

    Returns ``(weak[..., C], alphas[..., S, C])``.
    """
    if emb.shape[-2] != strong.shape[-2]:
        raise InvalidInputError(
            f"embedding length {emb.shape[-2]} != strong length {strong.shape[-2]}"
        )
    alphas = torch.softmax(F.linear(emb, weight, bias), dim=-2)
    weak = (alphas * strong).sum(dim=-2)
    return weak, alphas


class SedModel(nn.Module):
    def __init__(self, config: SedConfig):
        super().__init__()
        self.config = config
        d = config.embed_dim
        self.frame_proj = nn.Linear(config.n_mels, d)
        self.pos_embed = nn.Parameter(torch.zeros(config.max_frames, d))
        nn.init.normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            Block(d, config.n_heads, config.mlp_ratio) for _ in range(config.n_blocks)
        )
        self.norm = nn.LayerNorm(d)
        self.strong_head = nn.Linear(d, config.n_classes)
        self.attn_head = nn.Linear(d, config.n_classes)

    def layer_groups(self) -> List[List[nn.Parameter]]:
        """Parameters ordered from input to output for layer-wise learning rates."""
        groups = [[self.frame_proj.weight, self.frame_proj.bias, self.pos_embed]]
        groups += [list(b.parameters()) for b in self.blocks]
        groups.append(list(self.norm.parameters()) + list(self.strong_head.parameters())
                      + list(self.attn_head.parameters()))
        return groups

    def encode(self, mel: torch.Tensor) -> EmbeddingSequence:
        """``mel[B, F, T]`` (or ``[F, T]``) -> embeddings ``[B, S, D]``."""
        squeeze = mel.ndim == 2
        if squeeze:
            mel = mel.unsqueeze(0)
        _, n_mels, n_frames = mel.shape
        cfg = self.config
        if n_mels != cfg.n_mels:
            raise InvalidInputError(f"expected {cfg.n_mels} mel bins, got {n_mels}")
        if n_frames < cfg.time_subsample:
            raise InvalidInputError(
                f"need at least {cfg.time_subsample} frames, got {n_frames}"
            )
        if n_frames > cfg.max_frames:
            raise InvalidInputError(f"{n_frames} frames exceed max_frames={cfg.max_frames}")
        x = self.frame_proj(mel.transpose(1, 2)) + self.pos_embed[:n_frames]
        hidden = []
        for i, block in enumerate(self.blocks):
            x = block(x)
            if i == 0:
                x = _time_pool(x, cfg.time_subsample)
            hidden.append(x.transpose(1, 2).unsqueeze(2))
        x = self.norm(x)
        if squeeze:
            x = x.squeeze(0)
            hidden = [h.squeeze(0) for h in hidden]
        return EmbeddingSequence(x, hidden)

    def forward(self, mel: torch.Tensor) -> SedOutput:
        emb = self.encode(mel)
        strong = strong_head(emb.values, self.strong_head.weight, self.strong_head.bias)
        weak, alphas = attention_pool(emb.values, strong, self.attn_head.weight, self.attn_head.bias)
        return SedOutput(emb, strong, weak, alphas)


def _bce(p: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    p = p.clamp(BCE_EPS, 1 - BCE_EPS)
    return -(y * torch.log(p) + (1 - y) * torch.log1p(-p))


def sed_loss(
    strong_pred: torch.Tensor,
    weak_pred: torch.Tensor,
    labels: SedLabels,
    lam: float = 0.5,
) -> torch.Tensor:
    """``lam * mean BCE(strong) + (1 - lam) * mean BCE(weak)``, averaged over the batch."""
    if strong_pred.shape != labels.strong.shape or weak_pred.shape != labels.weak.shape:
        raise InvalidInputError(
            f"prediction shapes {tuple(strong_pred.shape)}, {tuple(weak_pred.shape)} do not match "
            f"labels {tuple(labels.strong.shape)}, {tuple(labels.weak.shape)}"
        )
    if not 0.0 <= lam <= 1.0:
        raise InvalidInputError(f"lambda must lie in [0, 1], got {lam}")
    ys = labels.strong.to(strong_pred.dtype)
    yw = labels.weak.to(weak_pred.dtype)
    return lam * _bce(strong_pred, ys).mean() + (1 - lam) * _bce(weak_pred, yw).mean()


def frame_targets(
    annotation: Iterable[Tuple[int, float, float]],
    n_out_frames: int,
    clip_length_s: float,
    n_classes: int,
) -> SedLabels:
    """Binary frame and clip targets from ``(class, onset_s, offset_s)`` events.

    Frame ``s`` spans ``[s, s + 1) * clip_length_s / n_out_frames`` and is
    active for class ``c`` when it overlaps any event of that class. Classes
    are 1-based; column ``c - 1`` holds class ``c``.
    """
    strong = torch.zeros(n_out_frames, n_classes)
    width = clip_length_s / n_out_frames
    for c, onset, offset in annotation:
        if offset < onset:
            raise InvalidInputError(f"event offset {offset} precedes onset {onset}")
        if not 1 <= c <= n_classes:
            raise InvalidInputError(f"class {c} outside 1..{n_classes}")
        if offset == onset:
            continue
        first = max(0, int(math.floor(onset / width)))
        last = min(n_out_frames - 1, int(math.ceil(offset / width)) - 1)
        if last >= first:
            strong[first : last + 1, c - 1] = 1.0
    weak = strong.amax(dim=0)
    return SedLabels(strong, weak)


def detect_active_classes(weak, threshold: float = 0.5) -> Set[int]:
    """1-based classes whose clip probability reaches ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise InvalidInputError(f"threshold must be in (0, 1), got {threshold}")
    probs = torch.as_tensor(weak).reshape(-1)
    return {i + 1 for i, p in enumerate(probs.tolist()) if p >= threshold}
