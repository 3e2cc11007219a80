"""Word-level attention aggregation and the tree-planting objective."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

KL_EPS = 1e-12


class ConfigError(ValueError):
    pass


def membership(spans: Sequence[tuple[int, int]], n_tokens: int | None = None, dtype=torch.float64) -> torch.Tensor:
    """``(n_words, n_tokens)`` 0/1 matrix with ``P[w, t] = 1`` iff token ``t`` is in word ``w``.

    Spans must tile ``0..n_tokens-1`` contiguously and in order.
    """
    expected = 0
    for s, e in spans:
        if s != expected or e < s:
            raise ValueError(f"spans {list(spans)} do not tile the token sequence")
        expected = e + 1
    if n_tokens is not None and expected != n_tokens:
        raise ValueError(f"spans cover {expected} tokens but attention has {n_tokens}")
    p = torch.zeros(len(spans), expected, dtype=dtype)
    for w, (s, e) in enumerate(spans):
        p[w, s : e + 1] = 1
    return p


def word_attention(a: torch.Tensor, p: torch.Tensor) -> torch.Tensor:
    """Batched aggregation: ``a`` is ``(..., T, T)``, ``p`` is ``(..., N, T)``.

    Row ``r`` of the ``(..., N - 1, N)`` result is the attention of query
    word ``r + 1`` over words ``0..r``: span sums of ``a`` renormalised over
    that strict prefix.  All-zero rows (padding) stay zero.
    """
    p = p.to(a.dtype)
    c = p @ a @ p.transpose(-2, -1)
    n = p.shape[-2]
    keep = torch.ones(n - 1, n, dtype=torch.bool, device=a.device).tril()
    c = c[..., 1:, :] * keep
    denom = c.sum(dim=-1, keepdim=True)
    return c / denom.clamp_min(torch.finfo(a.dtype).tiny)


def aggregate_word_attention(a, spans: Sequence[tuple[int, int]]):
    """Single-sentence aggregation of a ``(T, T)`` attention map to ``(n - 1, n)``.

    Accepts a tensor (differentiable) or an array (returns an array).
    """
    as_numpy = not isinstance(a, torch.Tensor)
    a_t = torch.as_tensor(np.asarray(a, dtype=np.float64)) if as_numpy else a
    if a_t.dim() != 2 or a_t.shape[0] != a_t.shape[1]:
        raise ValueError(f"attention must be square, got {tuple(a_t.shape)}")
    if len(spans) < 2:
        raise ValueError("aggregation needs at least two words")
    p = membership(spans, a_t.shape[0], dtype=a_t.dtype).to(a_t.device)
    w = word_attention(a_t, p)
    return w.numpy() if as_numpy else w


def tree_planting_loss(s, w, n_words=None):
    """Mean over query rows of ``KL(s_row || w_row)``.

    ``s`` and ``w`` are ``(..., N - 1, N)``.  ``w`` is floored at 1e-12 and
    entries with zero target mass contribute nothing.  ``n_words`` gives the
    true sentence lengths when rows are padded; it defaults to ``N``.
    """
    as_numpy = not isinstance(w, torch.Tensor)
    w_t = torch.as_tensor(np.asarray(w, dtype=np.float64)) if as_numpy else w
    s_t = torch.as_tensor(s, dtype=w_t.dtype, device=w_t.device)
    if s_t.shape != w_t.shape:
        raise ValueError(f"supervision shape {tuple(s_t.shape)} != attention shape {tuple(w_t.shape)}")
    kl_rows = (torch.xlogy(s_t, s_t) - torch.xlogy(s_t, w_t.clamp_min(KL_EPS))).sum(dim=-1)
    if n_words is None:
        rows = torch.full(kl_rows.shape[:-1], kl_rows.shape[-1], dtype=w_t.dtype, device=w_t.device)
    else:
        rows = torch.as_tensor(n_words, dtype=w_t.dtype, device=w_t.device) - 1
    loss = kl_rows.sum(dim=-1) / rows
    return float(loss) if as_numpy and loss.dim() == 0 else (loss.numpy() if as_numpy else loss)


def nwp_loss(logits: torch.Tensor, ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    """Token-mean cross-entropy of predicting tokens ``1..len-1`` of each row."""
    b, t, v = logits.shape
    targets = ids[:, 1:]
    valid = torch.arange(1, t, device=ids.device)[None, :] < lengths[:, None]
    ce = F.cross_entropy(logits[:, :-1].reshape(-1, v), targets.reshape(-1), reduction="none").view(b, t - 1)
    return (ce * valid).sum() / valid.sum()


@dataclass
class LossBreakdown:
    nwp: object
    tree: list = field(default_factory=list)
    total: object = None

    def as_floats(self) -> dict:
        return {"nwp": _scalar(self.nwp), "tree": [_scalar(x) for x in self.tree], "total": _scalar(self.total)}


def _scalar(x) -> float:
    return float(x.detach()) if isinstance(x, torch.Tensor) else float(x)


def total_loss(nwp, tree_losses, lam: float) -> LossBreakdown:
    """``nwp + lam * mean(tree_losses)``; exactly ``nwp`` when ``lam == 0`` or no heads."""
    if lam < 0:
        raise ConfigError(f"tree-planting weight must be non-negative, got {lam}")
    tree = list(tree_losses)
    if not tree or lam == 0:
        total = nwp
    else:
        total = nwp + lam * (sum(tree) / len(tree))
    return LossBreakdown(nwp=nwp, tree=tree, total=total)
