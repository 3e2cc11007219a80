from pathlib import Path

import numpy as np
import pytest

from treeplant.treebank import ConstituencyTree, DependencyTree, Node, parse_bracketed, parse_conllu

FIXTURES = Path(__file__).parent / "fixtures"

REF_WORDS = ("The", "author", "next", "to", "the", "senators", "is", "good.")
REF_DEP_TO_IS = [2, 1, 2, 3, 5, 4, 0, 1]
REF_CONS_TO_IS = [7, 7, 7, 8, 9, 9, 0, 5]


@pytest.fixture
def ref_dep() -> DependencyTree:
    return parse_conllu((FIXTURES / "author_senators.conllu").read_text())[0]


@pytest.fixture
def ref_cons() -> ConstituencyTree:
    return parse_bracketed((FIXTURES / "author_senators.mrg").read_text())[0]


def random_dependency_tree(rng: np.random.Generator, n: int) -> DependencyTree:
    """Uniformly ordered attachment: each word picks a head among words placed before it."""
    order = rng.permutation(n) + 1
    heads = [0] * n
    for k in range(1, n):
        heads[order[k] - 1] = int(order[rng.integers(k)])
    return DependencyTree([f"w{i}" for i in range(n)], heads)


def random_constituency_tree(rng: np.random.Generator, n: int, p_preterminal: float = 0.7) -> ConstituencyTree:
    words = [f"w{i}" for i in range(n)]

    def build(lo: int, hi: int, depth: int):
        if hi - lo == 1:
            w = words[lo]
            return Node("X", (w,)) if rng.random() < p_preterminal else w
        k = int(rng.integers(2, min(4, hi - lo) + 1))
        cuts = sorted(rng.choice(np.arange(lo + 1, hi), size=k - 1, replace=False).tolist())
        bounds = [lo, *cuts, hi]
        node = Node(f"N{depth}", tuple(build(a, b, depth + 1) for a, b in zip(bounds, bounds[1:])))
        if rng.random() < 0.15:
            node = Node("U", (node,))
        return node

    root = build(0, n, 0)
    if isinstance(root, str):
        root = Node("X", (root,))
    return ConstituencyTree(root)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record the outcome line of an acceptance criterion for the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        ACCEPTANCE[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
