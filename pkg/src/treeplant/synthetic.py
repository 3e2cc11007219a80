"""A toy English fragment with subject-verb agreement and gold trees.

Sentences follow ``NP_subj (PP | RC)* VP .`` where prepositional phrases and
object relative clauses introduce attractor nouns between the subject and
its verb.  Every sentence comes with a spaCy-style dependency tree and a
PTB-style constituency tree, so the same corpus can feed every supervision
kind.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluation import Criterion, Item, Suite
from .treebank import ConstituencyTree, DependencyTree, Node

NOUNS = [
    ("author", "authors"), ("senator", "senators"), ("dog", "dogs"), ("cat", "cats"),
    ("teacher", "teachers"), ("pilot", "pilots"), ("farmer", "farmers"), ("doctor", "doctors"),
    ("student", "students"), ("painter", "painters"), ("officer", "officers"), ("manager", "managers"),
    ("singer", "singers"), ("lawyer", "lawyers"), ("baker", "bakers"), ("guard", "guards"),
    ("nurse", "nurses"), ("driver", "drivers"), ("writer", "writers"), ("clerk", "clerks"),
]
PREPS = ["near", "behind", "beside", "with", "from", "under"]
ADJS = ["old", "young", "tall", "quiet"]
PRED_ADJS = ["good", "happy", "tired", "late", "ready"]
INTRANS = [("smiles", "smile"), ("laughs", "laugh"), ("waits", "wait"), ("sleeps", "sleep")]
TRANS = [("likes", "like"), ("sees", "see"), ("knows", "know"), ("helps", "help")]
COPULA = ("is", "are")


class _Builder:
    """Accumulates words and their heads (1-based, 0 = ROOT)."""

    def __init__(self):
        self.words: list[str] = []
        self.heads: list[int | None] = []

    def add(self, word: str, head: int | None = None) -> int:
        self.words.append(word)
        self.heads.append(head)
        return len(self.words)

    def set_head(self, idx: int, head: int):
        self.heads[idx - 1] = head


@dataclass
class GeneratedSentence:
    dependency: DependencyTree
    constituency: ConstituencyTree
    subject_plural: bool
    verb_index: int  # 0-based position of the main verb
    verb_forms: tuple[str, str]  # (singular, plural)

    @property
    def words(self) -> tuple[str, ...]:
        return self.dependency.words


class AgreementGrammar:
    def __init__(self, p_pp: float = 0.6, p_rc: float = 0.25, p_adj: float = 0.2, max_modifiers: int = 2):
        self.p_pp = p_pp
        self.p_rc = p_rc
        self.p_adj = p_adj
        self.max_modifiers = max_modifiers

    def _np(self, b: _Builder, rng, plural: bool, noun_idx: int | None = None):
        """Determiner (+ adjective) + noun; returns (noun index, node)."""
        det = b.add("the")
        children = [Node("DT", ("the",))]
        adj = None
        if rng.random() < self.p_adj:
            a = ADJS[rng.integers(len(ADJS))]
            adj = b.add(a)
            children.append(Node("JJ", (a,)))
        k = rng.integers(len(NOUNS)) if noun_idx is None else noun_idx
        word = NOUNS[k][int(plural)]
        noun = b.add(word)
        children.append(Node("NNS" if plural else "NN", (word,)))
        b.set_head(det, noun)
        if adj is not None:
            b.set_head(adj, noun)
        return noun, Node("NP", tuple(children))

    def sample(self, rng: np.random.Generator, subject_plural: bool | None = None,
               attractors: int | None = None, attractor_mismatch: bool | None = None) -> GeneratedSentence:
        b = _Builder()
        plural = bool(rng.integers(2)) if subject_plural is None else subject_plural
        subj, subj_node = self._np(b, rng, plural)
        if attractors is None:
            attractors = 0
            while attractors < self.max_modifiers and rng.random() < (self.p_pp + self.p_rc):
                attractors += 1

        np_node = subj_node
        for _ in range(attractors):
            if attractor_mismatch is None:
                a_plural = bool(rng.integers(2))
            else:
                a_plural = plural != attractor_mismatch
            if rng.random() < self.p_pp / (self.p_pp + self.p_rc):
                p = PREPS[rng.integers(len(PREPS))]
                prep = b.add(p, head=subj)
                obj, obj_node = self._np(b, rng, a_plural)
                b.set_head(obj, prep)
                np_node = Node("NP", (np_node, Node("PP", (Node("IN", (p,)), obj_node))))
            else:
                that = b.add("that")
                rc_subj, rc_node = self._np(b, rng, a_plural)
                v = TRANS[rng.integers(len(TRANS))][int(a_plural)]
                rc_verb = b.add(v, head=subj)
                b.set_head(that, rc_verb)
                b.set_head(rc_subj, rc_verb)
                sbar = Node("SBAR", (Node("WHNP", (Node("WDT", ("that",)),)),
                                     Node("S", (rc_node, Node("VP", (Node("VBP" if a_plural else "VBZ", (v,)),))))))
                np_node = Node("NP", (np_node, sbar))

        kind = rng.integers(3)
        vtag = "VBP" if plural else "VBZ"
        if kind == 0:
            forms = COPULA
            verb = b.add(forms[int(plural)], head=0)
            a = PRED_ADJS[rng.integers(len(PRED_ADJS))]
            b.add(a, head=verb)
            vp = Node("VP", (Node(vtag, (forms[int(plural)],)), Node("ADJP", (Node("JJ", (a,)),))))
        elif kind == 1:
            forms = INTRANS[rng.integers(len(INTRANS))]
            verb = b.add(forms[int(plural)], head=0)
            vp = Node("VP", (Node(vtag, (forms[int(plural)],)),))
        else:
            forms = TRANS[rng.integers(len(TRANS))]
            verb = b.add(forms[int(plural)], head=0)
            obj, obj_node = self._np(b, rng, bool(rng.integers(2)))
            b.set_head(obj, verb)
            vp = Node("VP", (Node(vtag, (forms[int(plural)],)), obj_node))
        b.set_head(subj, verb)
        b.add(".", head=verb)
        root = Node("S", (np_node, vp, Node(".", (".",))))
        dep = DependencyTree(b.words, b.heads)
        const = ConstituencyTree(root)
        assert const.words == dep.words
        return GeneratedSentence(dep, const, plural, verb - 1, (forms[0], forms[1]))


def generate_corpus(n: int, seed: int = 0, grammar: AgreementGrammar | None = None) -> list[GeneratedSentence]:
    grammar = grammar or AgreementGrammar()
    rng = np.random.default_rng(seed)
    return [grammar.sample(rng) for _ in range(n)]


def agreement_suite(n_items: int = 40, seed: int = 1, attractors: int = 1,
                    grammar: AgreementGrammar | None = None, name: str | None = None) -> Suite:
    """Minimal pairs differing only in main-verb number, with mismatched attractors.

    Each item has conditions ``match`` and ``mismatch`` split into regions
    ``prefix``, ``verb`` and ``rest``; the verb must be less surprising in
    the grammatical condition.
    """
    grammar = grammar or AgreementGrammar()
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(n_items):
        g = grammar.sample(rng, attractors=attractors, attractor_mismatch=True)
        words = g.words
        v = g.verb_index
        right = g.verb_forms[int(g.subject_plural)]
        wrong = g.verb_forms[int(not g.subject_plural)]
        prefix = " ".join(words[:v])
        rest = " ".join(w for w in words[v + 1 :])
        items.append(Item(conditions={
            "match": [("prefix", prefix), ("verb", right), ("rest", rest)],
            "mismatch": [("prefix", prefix), ("verb", wrong), ("rest", rest)],
        }))
    return Suite(
        name=name or f"agreement_{attractors}_attractor",
        circuit="Agreement",
        items=items,
        criterion=Criterion(("match", "verb"), ("mismatch", "verb")),
    )
