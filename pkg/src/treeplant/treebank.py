"""Reading, writing and transforming dependency and constituency treebanks.

Dependency trees are read from CoNLL-U (only ID, FORM and HEAD matter) and
constituency trees from PTB-style labelled bracketings.  Both structure types
can be wrapped with BOS/EOS boundary tokens so that the language model's
boundary symbols take part in the syntactic distance computation.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence, Union

BOS = "<bos>"
EOS = "<eos>"
ROOT = 0
AUGMENTED_ROOT_LABEL = "TOP"


class TreebankError(ValueError):
    """Base class for malformed treebank input."""


class ParseError(TreebankError):
    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.reason = message
        self.line = line
        self.offset = offset


class StructureError(TreebankError):
    """The input parsed, but does not describe a valid tree."""


class AugmentationError(TreebankError):
    """BOS/EOS augmentation was applied twice."""


@dataclass(frozen=True)
class Sentence:
    words: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        for w in self.words:
            if not w or any(c.isspace() for c in w):
                raise StructureError(f"invalid word {w!r}: words must be non-empty and contain no whitespace")

    def __len__(self) -> int:
        return len(self.words)

    @property
    def augmented(self) -> bool:
        return len(self.words) >= 3 and self.words[0] == BOS and self.words[-1] == EOS


# ---------------------------------------------------------------------------
# Dependency trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DependencyTree:
    """Words plus 1-based head indices; ``0`` denotes the virtual ROOT node.

    An augmented tree carries BOS as word 1 and EOS as word n, both headed by
    ROOT, so it has exactly three ROOT dependents (BOS, the real root, EOS).
    """

    words: tuple[str, ...]
    heads: tuple[int, ...]
    augmented: bool = False

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        Sentence(self.words)
        _check_dependency(self.words, self.heads, self.augmented)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def sentence(self) -> Sentence:
        return Sentence(self.words)

    @property
    def root(self) -> int:
        """1-based index of the (content) root word."""
        lo, hi = (1, len(self.words) - 1) if self.augmented else (0, len(self.words))
        return next(i + 1 for i in range(lo, hi) if self.heads[i] == ROOT)


def _check_dependency(words: Sequence[str], heads: Sequence[int], augmented: bool) -> None:
    n = len(words)
    if n == 0:
        raise StructureError("dependency tree has no words")
    if len(heads) != n:
        raise StructureError(f"{n} words but {len(heads)} heads")
    for i, h in enumerate(heads, start=1):
        if not 0 <= h <= n:
            raise StructureError(f"word {i} has head {h} outside 0..{n}")
        if h == i:
            raise StructureError(f"word {i} heads itself")
    roots = [i for i, h in enumerate(heads, start=1) if h == ROOT]
    if augmented:
        if n < 3 or words[0] != BOS or words[-1] != EOS:
            raise StructureError("augmented tree must start with BOS and end with EOS")
        if heads[0] != ROOT or heads[-1] != ROOT:
            raise StructureError("BOS and EOS must attach to ROOT")
        content_roots = [r for r in roots if r not in (1, n)]
        if len(content_roots) != 1:
            raise StructureError(f"expected one content root, found {len(content_roots)}")
    elif len(roots) != 1:
        raise StructureError(f"expected exactly one root, found {len(roots)}")
    # Every word must reach ROOT without revisiting a node.
    for start in range(1, n + 1):
        seen = set()
        node = start
        while node != ROOT:
            if node in seen:
                raise StructureError(f"cycle through word {node}")
            seen.add(node)
            node = heads[node - 1]


def _split_conllu_line(line: str) -> list[str]:
    return line.split("\t") if "\t" in line else line.split()


def parse_conllu(text: str) -> list[DependencyTree]:
    """Parse CoNLL-U text into dependency trees.

    Ten-column CoNLL-U is read from columns ID, FORM and HEAD; a compact
    three-column ``ID FORM HEAD`` layout is accepted as well.  Comment lines,
    multiword-token ranges (``3-4``) and empty nodes (``5.1``) are skipped.
    """
    trees: list[DependencyTree] = []
    words: list[str] = []
    heads: list[int] = []
    start_line = 1

    def flush():
        if not words:
            return
        augmented = (
            len(words) >= 3
            and words[0] == BOS
            and words[-1] == EOS
            and heads[0] == ROOT
            and heads[-1] == ROOT
        )
        try:
            trees.append(DependencyTree(words, heads, augmented=augmented))
        except StructureError as exc:
            raise StructureError(f"sentence starting at line {start_line}: {exc}") from None
        words.clear()
        heads.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if line.lstrip().startswith("#"):
            continue
        cols = _split_conllu_line(line)
        if len(cols) == 10:
            tok_id, form, head = cols[0], cols[1], cols[6]
        elif len(cols) == 3:
            tok_id, form, head = cols
        else:
            raise ParseError(f"expected 10 (or 3) columns, got {len(cols)}", line=lineno)
        if "-" in tok_id or "." in tok_id:
            continue
        if not words:
            start_line = lineno
        try:
            idx, head_idx = int(tok_id), int(head)
        except ValueError:
            raise ParseError(f"non-integer ID or HEAD in {line!r}", line=lineno) from None
        if idx != len(words) + 1:
            raise ParseError(f"token ID {idx} out of sequence (expected {len(words) + 1})", line=lineno)
        words.append(form)
        heads.append(head_idx)
    flush()
    return trees


def to_conllu(trees: DependencyTree | Sequence[DependencyTree]) -> str:
    if isinstance(trees, DependencyTree):
        trees = [trees]
    blocks = []
    for tree in trees:
        lines = [
            "\t".join([str(i), w, "_", "_", "_", "_", str(h), "_", "_", "_"])
            for i, (w, h) in enumerate(zip(tree.words, tree.heads), start=1)
        ]
        blocks.append("\n".join(lines) + "\n\n")
    return "".join(blocks)


# ---------------------------------------------------------------------------
# Constituency trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    """Internal constituent; children are nodes or word strings."""

    label: str
    children: tuple[Union["Node", str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise StructureError(f"empty constituent {self.label!r}")

    def leaves(self) -> list[str]:
        out: list[str] = []
        stack: list[Node | str] = [self]
        while stack:
            item = stack.pop()
            if isinstance(item, str):
                out.append(item)
            else:
                stack.extend(reversed(item.children))
        return out

    def max_arity(self) -> int:
        return max([len(self.children)] + [c.max_arity() for c in self.children if isinstance(c, Node)])

    def to_bracketed(self) -> str:
        inner = " ".join(c if isinstance(c, str) else c.to_bracketed() for c in self.children)
        return f"({self.label} {inner})"


@dataclass(frozen=True)
class ConstituencyTree:
    root: Node
    augmented: bool = False

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(self.root.leaves())

    @property
    def sentence(self) -> Sentence:
        return Sentence(self.words)

    def __len__(self) -> int:
        return len(self.words)

    def to_bracketed(self) -> str:
        return self.root.to_bracketed()


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def _line_of(text: str, offset: int) -> int:
    return text.count("\n", 0, offset) + 1


def parse_bracketed(text: str) -> list[ConstituencyTree]:
    """Parse PTB-style bracketed trees (one per line, or whitespace separated).

    A nameless outer wrapper such as ``( (S ...) )`` is removed.  Trees whose
    outermost node is the BOS/EOS wrapper are marked as augmented.
    """
    trees: list[ConstituencyTree] = []
    # stack entries: (label, children, offset of "(")
    stack: list[tuple[str | None, list, int]] = []
    tokens = list(_TOKEN.finditer(text))
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        value, pos = tok.group(), tok.start()
        if value == "(":
            label = None
            if i + 1 < len(tokens) and tokens[i + 1].group() not in "()":
                label = tokens[i + 1].group()
                i += 1
            stack.append((label, [], pos))
        elif value == ")":
            if not stack:
                raise ParseError("unbalanced ')'", line=_line_of(text, pos), offset=pos)
            label, children, open_pos = stack.pop()
            if not children:
                raise StructureError(
                    f"empty constituent at offset {open_pos} (line {_line_of(text, open_pos)})"
                )
            if label is None:
                if len(children) != 1 or not isinstance(children[0], Node):
                    raise StructureError(f"unlabelled constituent at offset {open_pos}")
                node = children[0]
            else:
                node = Node(label, tuple(children))
            if stack:
                stack[-1][1].append(node)
            else:
                trees.append(_wrap(node))
        else:
            if not stack:
                raise ParseError(f"word {value!r} outside any constituent", line=_line_of(text, pos), offset=pos)
            stack[-1][1].append(value)
        i += 1
    if stack:
        pos = stack[-1][2]
        raise ParseError("unbalanced '('", line=_line_of(text, pos), offset=pos)
    return trees


def _wrap(node: Node) -> ConstituencyTree:
    ch = node.children
    augmented = (
        node.label == AUGMENTED_ROOT_LABEL
        and len(ch) == 3
        and ch[0] == BOS
        and ch[-1] == EOS
        and isinstance(ch[1], Node)
    )
    tree = ConstituencyTree(node, augmented=augmented)
    tree.sentence  # validates words
    return tree


def to_bracketed(trees: ConstituencyTree | Sequence[ConstituencyTree]) -> str:
    if isinstance(trees, ConstituencyTree):
        trees = [trees]
    return "".join(t.to_bracketed() + "\n" for t in trees)


def binarize(tree: ConstituencyTree) -> ConstituencyTree:
    """Right-factored binarization.

    ``A -> c1 c2 ... ck`` (k > 2) becomes ``A -> c1 A|<c2-...-ck>`` and the
    introduced node is factored the same way; introduced labels always
    derive from the original parent label.  Unary chains are kept.
    """

    def child_label(c: Node | str) -> str:
        return c if isinstance(c, str) else c.label

    def factor(label: str, children: Sequence[Node | str]) -> tuple[Node | str, ...]:
        if len(children) <= 2:
            return tuple(children)
        rest = children[1:]
        introduced = f"{label}|<{'-'.join(child_label(c) for c in rest)}>"
        return (children[0], Node(introduced, factor(label, rest)))

    def rebuild(node: Node) -> Node:
        children = [c if isinstance(c, str) else rebuild(c) for c in node.children]
        return Node(node.label, factor(node.label, children))

    root = tree.root
    if tree.augmented:
        # The BOS/EOS wrapper keeps its arity of three.
        return ConstituencyTree(Node(root.label, (BOS, rebuild(root.children[1]), EOS)), augmented=True)
    return ConstituencyTree(rebuild(root))


# ---------------------------------------------------------------------------
# BOS / EOS augmentation
# ---------------------------------------------------------------------------


def augment_bos_eos(tree):
    """Insert BOS/EOS boundary tokens.

    Dependency trees gain BOS and EOS as ROOT dependents; constituency trees
    are wrapped in a new ``TOP`` node with children ``[BOS, old root, EOS]``.
    """
    if tree.augmented:
        raise AugmentationError("tree is already augmented with BOS/EOS")
    if isinstance(tree, DependencyTree):
        heads = [ROOT] + [h + 1 if h != ROOT else ROOT for h in tree.heads] + [ROOT]
        return DependencyTree((BOS,) + tree.words + (EOS,), heads, augmented=True)
    if isinstance(tree, ConstituencyTree):
        return ConstituencyTree(Node(AUGMENTED_ROOT_LABEL, (BOS, tree.root, EOS)), augmented=True)
    raise TypeError(f"cannot augment {type(tree).__name__}")


def augment_sentence(words: Sequence[str]) -> Sentence:
    words = tuple(words)
    if words and words[0] == BOS:
        raise AugmentationError("sentence is already augmented with BOS/EOS")
    return Sentence((BOS,) + words + (EOS,))


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def sniff_format(text: str) -> str:
    """Return ``"conllu"`` or ``"bracketed"`` for treebank text."""
    for line in text.splitlines():
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        return "bracketed" if s.startswith("(") else "conllu"
    return "conllu"


def read_treebank(path: str | Path, fmt: str | None = None) -> list:
    text = Path(path).read_text(encoding="utf-8")
    fmt = fmt or sniff_format(text)
    if fmt == "conllu":
        return parse_conllu(text)
    if fmt == "bracketed":
        return parse_bracketed(text)
    raise ValueError(f"unknown treebank format {fmt!r}")


def iter_words(trees) -> Iterator[tuple[str, ...]]:
    for t in trees:
        yield t.words
