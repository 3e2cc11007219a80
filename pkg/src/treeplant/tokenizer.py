"""Byte-level BPE with exact word-to-subword alignment.

Merges are learned inside words only, so every subword belongs to exactly
one treebank word and word-level attention can be recovered by summing
over each word's subword span.
"""
from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .treebank import BOS, EOS, Sentence

N_BYTES = 256
BOS_ID = 256
EOS_ID = 257
ALPHABET_SIZE = 258

Span = tuple[int, int]


@dataclass
class Vocabulary:
    """Ordered merge list plus the derived id -> bytes table.

    Ids ``0..255`` are raw bytes, 256 is BOS, 257 is EOS and merge ``k``
    produces id ``258 + k``.
    """

    merges: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.merges = [tuple(m) for m in self.merges]
        self._bytes: list[bytes] = [bytes([b]) for b in range(N_BYTES)] + [BOS.encode(), EOS.encode()]
        self._rank: dict[tuple[int, int], int] = {}
        for k, (a, b) in enumerate(self.merges):
            if not (0 <= a < len(self._bytes) and 0 <= b < len(self._bytes)) or a in (BOS_ID, EOS_ID) or b in (BOS_ID, EOS_ID):
                raise ValueError(f"merge {k} refers to invalid ids ({a}, {b})")
            self._rank[(a, b)] = k
            self._bytes.append(self._bytes[a] + self._bytes[b])
        self._cache: dict[str, tuple[int, ...]] = {}

    def __len__(self) -> int:
        return ALPHABET_SIZE + len(self.merges)

    @property
    def size(self) -> int:
        return len(self)

    def token_bytes(self, idx: int) -> bytes:
        return self._bytes[idx]

    def encode_word(self, word: str) -> tuple[int, ...]:
        if word == BOS:
            return (BOS_ID,)
        if word == EOS:
            return (EOS_ID,)
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        ids = list(word.encode("utf-8"))
        none = len(self._rank)
        while len(ids) > 1:
            ranks = [self._rank.get(pair, none) for pair in zip(ids, ids[1:])]
            best = min(ranks)
            if best == none:
                break
            ids = _merge(ids, self.merges[best], ALPHABET_SIZE + best)
        out = tuple(ids)
        self._cache[word] = out
        return out

    def encode_with_alignment(self, sentence: Sentence | Sequence[str]) -> tuple[list[int], list[Span]]:
        words = sentence.words if isinstance(sentence, Sentence) else tuple(sentence)
        ids: list[int] = []
        spans: list[Span] = []
        for w in words:
            piece = self.encode_word(w)
            spans.append((len(ids), len(ids) + len(piece) - 1))
            ids.extend(piece)
        return ids, spans

    def decode_words(self, ids: Sequence[int], spans: Sequence[Span]) -> list[str]:
        return [b"".join(self._bytes[i] for i in ids[s : e + 1]).decode("utf-8") for s, e in spans]

    def to_dict(self) -> dict:
        return {"format": "treeplant-bpe/1", "alphabet_size": ALPHABET_SIZE, "merges": [list(m) for m in self.merges]}

    @classmethod
    def from_dict(cls, obj: dict) -> "Vocabulary":
        if obj.get("alphabet_size", ALPHABET_SIZE) != ALPHABET_SIZE:
            raise ValueError("vocabulary was built for a different alphabet")
        return cls([tuple(m) for m in obj["merges"]])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def _merge(ids: Sequence[int], pair: tuple[int, int], new_id: int) -> list[int]:
    out = []
    i = 0
    while i < len(ids):
        if i + 1 < len(ids) and ids[i] == pair[0] and ids[i + 1] == pair[1]:
            out.append(new_id)
            i += 2
        else:
            out.append(ids[i])
            i += 1
    return out


def train_vocab(corpus: Iterable[Sentence | Sequence[str]], vocab_size: int) -> Vocabulary:
    """Learn ``vocab_size - 258`` merges greedily by within-word pair frequency.

    Ties go to the lexicographically smallest ``(bytes_a, bytes_b)`` pair.
    Training stops early once no word has two adjacent subwords left.
    """
    if vocab_size < ALPHABET_SIZE:
        raise ValueError(f"vocab_size must be >= {ALPHABET_SIZE} (bytes + BOS/EOS)")
    counts: Counter[str] = Counter()
    for sent in corpus:
        words = sent.words if isinstance(sent, Sentence) else sent
        counts.update(w for w in words if w not in (BOS, EOS))
    if not counts:
        raise ValueError("cannot train a vocabulary on an empty corpus")

    table: list[bytes] = [bytes([b]) for b in range(N_BYTES)] + [BOS.encode(), EOS.encode()]
    words = [(list(w.encode("utf-8")), c) for w, c in sorted(counts.items())]
    merges: list[tuple[int, int]] = []
    for _ in range(vocab_size - ALPHABET_SIZE):
        pairs: Counter[tuple[int, int]] = Counter()
        for ids, c in words:
            for a, b in zip(ids, ids[1:]):
                pairs[(a, b)] += c
        if not pairs:
            break
        best = min(pairs, key=lambda p: (-pairs[p], table[p[0]], table[p[1]]))
        new_id = len(table)
        merges.append(best)
        table.append(table[best[0]] + table[best[1]])
        words = [(_merge(ids, best, new_id), c) for ids, c in words]
    return Vocabulary(merges)


def encode_with_alignment(sentence: Sentence | Sequence[str], vocab: Vocabulary) -> tuple[list[int], list[Span]]:
    """Encode words and return ``(ids, spans)`` with inclusive 0-based spans."""
    return vocab.encode_with_alignment(sentence)
