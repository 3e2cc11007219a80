"""A small GPT-2 style decoder that can hand back per-head attention maps."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import torch
import torch.nn.functional as F
from torch import nn


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_layer: int = 4
    n_head: int = 4
    d_model: int = 128
    d_ff: int = 512
    max_len: int = 128
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.n_head:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_head={self.n_head}")
        if min(self.vocab_size, self.n_layer, self.n_head, self.d_ff, self.max_len) < 1:
            raise ValueError("model dimensions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_head

    @classmethod
    def gpt2_small(cls, vocab_size: int) -> "ModelConfig":
        return cls(vocab_size, n_layer=12, n_head=12, d_model=768, d_ff=3072, max_len=1024, dropout=0.1)


class HeadSelection(tuple):
    """Immutable, duplicate-free tuple of ``(layer, head)`` pairs."""

    def __new__(cls, pairs: Iterable[Sequence[int]] = ()):
        pairs = tuple((int(l), int(h)) for l, h in pairs)
        if len(set(pairs)) != len(pairs):
            raise ValueError(f"duplicate heads in selection {pairs}")
        return super().__new__(cls, pairs)

    def validate(self, config: ModelConfig) -> "HeadSelection":
        for layer, head in self:
            if not (0 <= layer < config.n_layer and 0 <= head < config.n_head):
                raise ValueError(f"head ({layer}, {head}) does not exist in a {config.n_layer}x{config.n_head} model")
        return self

    @classmethod
    def last_layer(cls, config: ModelConfig, k: int = 1) -> "HeadSelection":
        """The first ``k`` heads of the top layer (head-direction extension)."""
        if not 0 <= k <= config.n_head:
            raise ValueError(f"cannot select {k} heads from a layer of {config.n_head}")
        return cls((config.n_layer - 1, h) for h in range(k))

    @classmethod
    def bottom_layers(cls, config: ModelConfig, k: int = 1) -> "HeadSelection":
        """Head 0 of each of the bottom ``k`` layers (layer-direction extension)."""
        if not 0 <= k <= config.n_layer:
            raise ValueError(f"cannot select {k} layers from {config.n_layer}")
        return cls((l, 0) for l in range(k))


def causal_mask(t: int, device=None) -> torch.Tensor:
    """Boolean ``(t, t)`` mask, ``True`` where attention is allowed."""
    return torch.ones(t, t, dtype=torch.bool, device=device).tril()


def causal_attention(q, k, v, mask=None, dropout_p: float = 0.0, training: bool = False):
    """Scaled dot-product attention that also returns the weights.

    ``q, k, v`` have shape ``(..., T, d)``.  The returned weights are taken
    before dropout; dropout only affects how values are mixed.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2] or q.shape[-2] > k.shape[-2]:
        raise ValueError(f"incompatible shapes q={tuple(q.shape)} k={tuple(k.shape)} v={tuple(v.shape)}")
    t = q.shape[-2]
    if mask is None:
        mask = causal_mask(t, device=q.device)
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    scores = scores.masked_fill(~mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    mixed = F.dropout(weights, p=dropout_p, training=training) if dropout_p > 0 else weights
    return mixed @ v, weights


class CausalSelfAttention(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.n_head = config.n_head
        self.qkv = nn.Linear(config.d_model, 3 * config.d_model)
        self.proj = nn.Linear(config.d_model, config.d_model)
        self.attn_dropout = config.dropout
        self.resid_dropout = nn.Dropout(config.dropout)

    def forward(self, x):
        b, t, c = x.shape
        q, k, v = self.qkv(x).split(c, dim=-1)
        q, k, v = (z.view(b, t, self.n_head, c // self.n_head).transpose(1, 2) for z in (q, k, v))
        out, weights = causal_attention(q, k, v, dropout_p=self.attn_dropout, training=self.training)
        out = out.transpose(1, 2).reshape(b, t, c)
        return self.resid_dropout(self.proj(out)), weights


class Block(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.ln_1 = nn.LayerNorm(config.d_model)
        self.attn = CausalSelfAttention(config)
        self.ln_2 = nn.LayerNorm(config.d_model)
        self.mlp = nn.Sequential(
            nn.Linear(config.d_model, config.d_ff),
            nn.GELU(approximate="tanh"),
            nn.Linear(config.d_ff, config.d_model),
            nn.Dropout(config.dropout),
        )

    def forward(self, x):
        a, weights = self.attn(self.ln_1(x))
        x = x + a
        x = x + self.mlp(self.ln_2(x))
        return x, weights


class TreePlantedTransformer(nn.Module):
    """Decoder-only LM; ``forward`` returns logits and selected attention maps."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_model)
        self.pos_emb = nn.Embedding(config.max_len, config.d_model)
        self.drop = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(Block(config) for _ in range(config.n_layer))
        self.ln_f = nn.LayerNorm(config.d_model)
        self.lm_head = nn.Linear(config.d_model, config.vocab_size, bias=False)
        self.lm_head.weight = self.tok_emb.weight
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module):
        if isinstance(module, (nn.Linear, nn.Embedding)):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
        if isinstance(module, nn.Linear) and module.bias is not None:
            nn.init.zeros_(module.bias)

    def forward(self, ids: torch.Tensor, selection: HeadSelection | Sequence = ()):
        """``ids``: ``(B, T)`` or ``(T,)`` long tensor.

        Returns ``(logits, record)`` where ``record[(layer, head)]`` is the
        ``(B, T, T)`` attention of that head.
        """
        squeeze = ids.dim() == 1
        if squeeze:
            ids = ids.unsqueeze(0)
        t = ids.shape[1]
        if t > self.config.max_len:
            raise ValueError(f"sequence of {t} tokens exceeds max_len={self.config.max_len}")
        selection = HeadSelection(selection).validate(self.config)
        wanted: dict[int, list[int]] = {}
        for layer, head in selection:
            wanted.setdefault(layer, []).append(head)

        pos = torch.arange(t, device=ids.device)
        x = self.drop(self.tok_emb(ids) + self.pos_emb(pos))
        record = {}
        for layer, block in enumerate(self.blocks):
            x, weights = block(x)
            for head in wanted.get(layer, ()):
                record[(layer, head)] = weights[:, head]
        logits = self.lm_head(self.ln_f(x))
        if squeeze:
            logits = logits[0]
            record = {key: a[0] for key, a in record.items()}
        return logits, record


CHECKPOINT_FORMAT = "treeplant-checkpoint/1"


def config_hash(obj: dict) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def save_checkpoint(path, model: TreePlantedTransformer, vocab, selection=(), train_config: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "model_config": asdict(model.config),
        "selection": [list(p) for p in HeadSelection(selection)],
        "vocab": vocab.to_dict(),
        "vocab_hash": vocab.hash(),
        "train_config": train_config,
        "config_hash": config_hash(train_config) if train_config is not None else None,
        "state_dict": model.state_dict(),
    }
    torch.save(payload, Path(path))


def load_checkpoint(path):
    """Return ``(model, vocab, selection, payload)`` from a checkpoint file."""
    from .tokenizer import Vocabulary

    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a treeplant checkpoint")
    vocab = Vocabulary.from_dict(payload["vocab"])
    if vocab.hash() != payload["vocab_hash"]:
        raise ValueError("checkpoint vocabulary hash mismatch")
    model = TreePlantedTransformer(ModelConfig(**payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, vocab, HeadSelection(payload["selection"]), payload
