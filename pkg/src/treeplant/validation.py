"""Input checks shared by the estimators and the CLI."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .loss import ConfigError
from .treebank import ConstituencyTree, DependencyTree, Sentence
from .trainer import KINDS, TREE_KINDS


def check_kind(kind: str) -> str:
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    return kind


def check_lambda(lam) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise ConfigError(f"lam must be a finite non-negative number, got {lam}")
    return lam


def check_trees(X, kind: str | None = None) -> list:
    """Materialise ``X`` as a non-empty list of trees compatible with ``kind``."""
    trees = list(X)
    if not trees:
        raise ValueError("expected at least one tree")
    for k, t in enumerate(trees):
        if not isinstance(t, (DependencyTree, ConstituencyTree)):
            raise TypeError(f"element {k} is {type(t).__name__}, not a parsed tree")
    if kind is not None:
        expected = TREE_KINDS.get(check_kind(kind))
        if expected is not None and not all(isinstance(t, expected) for t in trees):
            raise ConfigError(f"kind {kind!r} requires {expected.__name__} inputs")
    return trees


def check_sentences(X) -> list[tuple[str, ...]]:
    """Accept trees, :class:`Sentence` objects, word sequences or whitespace-joined strings."""
    out = []
    for k, x in enumerate(X):
        if isinstance(x, (DependencyTree, ConstituencyTree, Sentence)):
            words = x.words
        elif isinstance(x, str):
            words = tuple(x.split())
        elif isinstance(x, Sequence):
            words = tuple(x)
        else:
            raise TypeError(f"element {k} of type {type(x).__name__} is not a sentence")
        if not words:
            raise ValueError(f"sentence {k} is empty")
        out.append(Sentence(words).words)
    if not out:
        raise ValueError("expected at least one sentence")
    return out


def check_distance_matrix(d) -> np.ndarray:
    d = np.asarray(d)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {d.shape}")
    if (d < 0).any() or not np.array_equal(d, d.T) or np.diagonal(d).any():
        raise ValueError("distance matrix must be non-negative, symmetric and zero on the diagonal")
    return d
