"""Target attention distributions derived from syntactic distances."""
from __future__ import annotations

import json

import numpy as np


def supervision_matrix(d: np.ndarray) -> np.ndarray:
    """Row-stochastic causal supervision from a distance matrix.

    Returns an ``(n - 1, n)`` array.  Row ``r`` is the attention target of
    word ``r + 1`` over the words before it: ``softmax(-d[r + 1, :r + 1])``
    on columns ``0..r`` and zero elsewhere.  Word 0 is never a query.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {d.shape}")
    n = d.shape[0]
    if n < 2:
        raise ValueError("supervision needs at least two words")
    s = np.zeros((n - 1, n), dtype=np.float64)
    for r in range(n - 1):
        logits = -d[r + 1, : r + 1]
        logits = logits - logits.max()
        w = np.exp(logits)
        s[r, : r + 1] = w / w.sum()
    return s


def supervision_to_json(words, d: np.ndarray | None, s: np.ndarray | None) -> str:
    record: dict = {"words": list(words)}
    if d is not None:
        record["D"] = np.asarray(d).tolist()
    if s is not None:
        record["S"] = np.asarray(s).tolist()
    return json.dumps(record)
