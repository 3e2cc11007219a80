"""Pairwise syntactic distance matrices.

Entry ``d[i, j]`` counts the edges on the path between word ``i`` and word
``j`` in the (undirected) syntactic structure.  Matrices are plain
``numpy`` integer arrays of shape ``(n, n)`` with 0-based word indices.
"""
from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

from .treebank import ROOT, ConstituencyTree, DependencyTree, Node, StructureError


def distance_matrix_dep(tree: DependencyTree) -> np.ndarray:
    """Path lengths in the dependency tree, routing through the virtual ROOT."""
    n = len(tree)
    # Ancestor chain of every word, word first and ROOT (0) last.
    chains = []
    for i in range(1, n + 1):
        chain = [i]
        node = i
        while node != ROOT:
            node = tree.heads[node - 1]
            chain.append(node)
            if len(chain) > n + 1:
                raise StructureError("dependency structure is not connected to ROOT")
        chains.append(chain[::-1])
    return _from_root_paths(chains)


def distance_matrix_const(tree: ConstituencyTree) -> np.ndarray:
    """Leaf-to-leaf path lengths; each word is a node below its preterminal."""
    # A node is identified by its child-index path from the root.
    paths: list[list[int]] = []

    def walk(node: Node, path: list[int]):
        for k, child in enumerate(node.children):
            if isinstance(child, Node):
                walk(child, path + [k])
            else:
                paths.append(path + [k])

    walk(tree.root, [-1])
    return _from_root_paths(paths)


def _from_root_paths(paths: Sequence[Sequence[int]]) -> np.ndarray:
    n = len(paths)
    depth = np.array([len(p) - 1 for p in paths], dtype=np.int64)
    d = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        pi = paths[i]
        for j in range(i):
            pj = paths[j]
            common = 0
            for a, b in zip(pi, pj):
                if a != b:
                    break
                common += 1
            d[i, j] = d[j, i] = depth[i] + depth[j] - 2 * (common - 1)
    return d


def distance_matrix(tree) -> np.ndarray:
    if isinstance(tree, DependencyTree):
        return distance_matrix_dep(tree)
    if isinstance(tree, ConstituencyTree):
        return distance_matrix_const(tree)
    raise TypeError(f"no distance defined for {type(tree).__name__}")


def sequential_distances(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    idx = np.arange(n)
    return np.abs(idx[:, None] - idx[None, :]).astype(np.int64)


def distance_pool(matrices: Iterable[np.ndarray]) -> np.ndarray:
    """Strictly lower-triangular entries of every matrix, concatenated."""
    parts = [m[np.tril_indices(len(m), k=-1)] for m in matrices]
    parts = [p for p in parts if p.size]
    if not parts:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(parts).astype(np.int64)


def random_distances(n: int, pool: Sequence[int] | np.ndarray, seed) -> np.ndarray:
    """Symmetric matrix whose off-diagonal entries are i.i.d. draws from ``pool``.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts; callers
    pass ``(run_seed, sentence_index)`` so output never depends on order.
    """
    pool = np.asarray(pool, dtype=np.int64)
    if pool.size == 0:
        raise ValueError("random distances need a non-empty distance pool")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    rows, cols = np.tril_indices(n, k=-1)
    d = np.zeros((n, n), dtype=np.int64)
    d[rows, cols] = rng.choice(pool, size=rows.size, replace=True)
    d[cols, rows] = d[rows, cols]
    return d


def corpus_mean_distance(items: Iterable) -> float:
    """Mean of all strictly lower-triangular distances over a corpus.

    ``items`` may be trees or precomputed matrices.
    """
    total = 0
    count = 0
    for item in items:
        m = item if isinstance(item, np.ndarray) else distance_matrix(item)
        low = m[np.tril_indices(len(m), k=-1)]
        total += int(low.sum())
        count += low.size
    if count == 0:
        raise ValueError("corpus has no word pairs")
    return total / count


def matrix_to_json(d: np.ndarray) -> str:
    return json.dumps({"n": int(len(d)), "d": np.asarray(d).tolist()})


def matrix_from_json(line: str) -> np.ndarray:
    obj = json.loads(line)
    d = np.asarray(obj["d"], dtype=np.int64)
    if d.shape != (obj["n"], obj["n"]):
        raise ValueError(f"matrix shape {d.shape} does not match n={obj['n']}")
    return d
