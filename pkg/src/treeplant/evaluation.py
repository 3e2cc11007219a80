"""Targeted syntactic evaluation with minimal pairs, and word-level perplexity.

A scorer is any object with

* ``vocab``: something with ``encode_with_alignment(words) -> (ids, spans)``
* ``token_logprobs(ids) -> np.ndarray``: ``log p(ids[t] | ids[:t])`` for
  ``t = 1 .. len(ids) - 1``.

:class:`TransformerScorer` adapts a trained model; tests plug in analytic
dummy models.
"""
from __future__ import annotations

import csv
import io
import json
import math
from importlib import resources
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from .treebank import BOS, EOS


class SuiteError(ValueError):
    pass


@dataclass(frozen=True)
class Criterion:
    """Passes iff surprisal at ``lesser`` < surprisal at ``greater``; each is ``(condition, region)``."""

    lesser: tuple[str, str]
    greater: tuple[str, str]

    @classmethod
    def from_dict(cls, obj: dict) -> "Criterion":
        try:
            return cls(
                (obj["lesser"]["condition"], obj["lesser"]["region"]),
                (obj["greater"]["condition"], obj["greater"]["region"]),
            )
        except (KeyError, TypeError) as exc:
            raise SuiteError(f"malformed criterion {obj!r}") from exc

    def to_dict(self) -> dict:
        return {
            "lesser": {"condition": self.lesser[0], "region": self.lesser[1]},
            "greater": {"condition": self.greater[0], "region": self.greater[1]},
        }


@dataclass
class Item:
    conditions: dict[str, list[tuple[str, str]]]
    criterion: Criterion | None = None

    def words(self, condition: str) -> list[str]:
        return [w for _, text in self.conditions[condition] for w in text.split()]


@dataclass
class Suite:
    name: str
    circuit: str
    items: list[Item]
    criterion: Criterion | None = None

    def __post_init__(self):
        self.validate()

    def criterion_for(self, item: Item) -> Criterion:
        crit = item.criterion or self.criterion
        if crit is None:
            raise SuiteError(f"suite {self.name!r}: item has no success criterion")
        return crit

    def validate(self) -> None:
        if not self.items:
            raise SuiteError(f"suite {self.name!r} has no items")
        for k, item in enumerate(self.items):
            region_names = None
            for cond, regions in item.conditions.items():
                names = [r for r, _ in regions]
                if len(set(names)) != len(names):
                    raise SuiteError(f"suite {self.name!r} item {k}: duplicate region in condition {cond!r}")
                if region_names is None:
                    region_names = names
                elif names != region_names:
                    raise SuiteError(f"suite {self.name!r} item {k}: conditions disagree on region names")
            crit = self.criterion_for(item)
            for cond, region in (crit.lesser, crit.greater):
                if cond not in item.conditions:
                    raise SuiteError(f"suite {self.name!r} item {k}: criterion names missing condition {cond!r}")
                if region not in (region_names or []):
                    raise SuiteError(f"suite {self.name!r} item {k}: criterion names missing region {region!r}")

    def to_dict(self) -> dict:
        def item_dict(item: Item) -> dict:
            out = {"conditions": {c: [{"region": r, "text": t} for r, t in regs] for c, regs in item.conditions.items()}}
            out["criterion"] = self.criterion_for(item).to_dict()
            return out

        return {"name": self.name, "circuit": self.circuit, "items": [item_dict(i) for i in self.items]}

    @classmethod
    def from_dict(cls, obj: dict) -> "Suite":
        try:
            default = Criterion.from_dict(obj["criterion"]) if "criterion" in obj else None
            items = [
                Item(
                    conditions={c: [(r["region"], r["text"]) for r in regs] for c, regs in it["conditions"].items()},
                    criterion=Criterion.from_dict(it["criterion"]) if "criterion" in it else None,
                )
                for it in obj["items"]
            ]
            return cls(name=obj["name"], circuit=obj.get("circuit", "Uncategorized"), items=items, criterion=default)
        except (KeyError, TypeError) as exc:
            raise SuiteError(f"malformed suite: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_suite(path) -> Suite:
    return Suite.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def bundled_suites() -> dict[str, Suite]:
    """The small fixture suites shipped with the package, keyed by file stem."""
    root = resources.files("treeplant") / "data" / "suites"
    return {
        entry.name[: -len(".json")]: Suite.from_dict(json.loads(entry.read_text(encoding="utf-8")))
        for entry in sorted(root.iterdir(), key=lambda e: e.name)
        if entry.name.endswith(".json")
    }


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


class TransformerScorer:
    """Read-only wrapper turning a trained model into a scorer."""

    def __init__(self, model, vocab):
        self.model = model
        self.vocab = vocab

    @torch.no_grad()
    def token_logprobs(self, ids: Sequence[int]) -> np.ndarray:
        was_training = self.model.training
        self.model.eval()
        try:
            x = torch.as_tensor(list(ids), dtype=torch.long)
            logits, _ = self.model(x)
            logp = torch.log_softmax(logits[:-1].double(), dim=-1)
            return logp.gather(1, x[1:, None]).squeeze(1).numpy()
        finally:
            self.model.train(was_training)


def word_surprisals(scorer, words: Sequence[str]) -> np.ndarray:
    """Surprisal (nats) of every word given ``BOS`` and the words before it."""
    ids, spans = scorer.vocab.encode_with_alignment([BOS, *words])
    lp = np.asarray(scorer.token_logprobs(ids), dtype=np.float64)
    return np.array([-lp[s - 1 : e].sum() for s, e in spans[1:]])


def region_surprisals(scorer, regions: Sequence[tuple[str, str]]) -> dict[str, float]:
    """Summed surprisal of each ``(region, text)`` span; regions follow each other in order."""
    words, owner = [], []
    for name, text in regions:
        for w in text.split():
            words.append(w)
            owner.append(name)
    if not words:
        raise SuiteError("regions contain no words")
    per_word = word_surprisals(scorer, words)
    out = {name: 0.0 for name, _ in regions}
    for name, s in zip(owner, per_word):
        out[name] += float(s)
    return out


@dataclass
class SuiteResult:
    name: str
    circuit: str
    accuracy: float
    passes: list[bool]


def evaluate_suite(scorer, suite: Suite) -> SuiteResult:
    passes = []
    for item in suite.items:
        crit = suite.criterion_for(item)
        cache: dict[str, dict[str, float]] = {}
        for cond in {crit.lesser[0], crit.greater[0]}:
            cache[cond] = region_surprisals(scorer, item.conditions[cond])
        lesser = cache[crit.lesser[0]][crit.lesser[1]]
        greater = cache[crit.greater[0]][crit.greater[1]]
        passes.append(bool(lesser < greater))
    return SuiteResult(suite.name, suite.circuit, sum(passes) / len(passes), passes)


def word_perplexity(scorer, corpus: Iterable[Sequence[str]]) -> float:
    """``exp(total token NLL / word count)``, counting EOS but not BOS as a word."""
    nll = 0.0
    n_words = 0
    for words in corpus:
        words = [w for w in words if w not in (BOS, EOS)]
        ids, _ = scorer.vocab.encode_with_alignment([BOS, *words, EOS])
        nll -= float(np.sum(np.asarray(scorer.token_logprobs(ids), dtype=np.float64)))
        n_words += len(words) + 1
    if n_words == 0:
        raise ValueError("perplexity needs a non-empty corpus")
    return math.exp(nll / n_words)


@dataclass
class EvalReport:
    suites: dict[str, float] = field(default_factory=dict)
    suite_circuits: dict[str, str] = field(default_factory=dict)
    perplexity: float | None = None

    @property
    def circuits(self) -> dict[str, float]:
        groups: dict[str, list[float]] = defaultdict(list)
        for name, acc in self.suites.items():
            groups[self.suite_circuits[name]].append(acc)
        return {c: float(np.mean(v)) for c, v in sorted(groups.items())}

    @property
    def overall(self) -> float | None:
        return float(np.mean(list(self.suites.values()))) if self.suites else None

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "circuits": self.circuits,
            "suites": {n: {"circuit": self.suite_circuits[n], "accuracy": a} for n, a in self.suites.items()},
            "perplexity": self.perplexity,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "name", "circuit", "accuracy"])
        for n, a in self.suites.items():
            w.writerow(["suite", n, self.suite_circuits[n], f"{a:.6f}"])
        for c, a in self.circuits.items():
            w.writerow(["circuit", c, c, f"{a:.6f}"])
        if self.overall is not None:
            w.writerow(["overall", "overall", "", f"{self.overall:.6f}"])
        return buf.getvalue()

    def format_table(self) -> str:
        lines = [f"{'circuit':<28}{'accuracy':>10}"]
        for c, a in self.circuits.items():
            lines.append(f"{c:<28}{a:>10.3f}")
        if self.overall is not None:
            lines.append(f"{'overall':<28}{self.overall:>10.3f}")
        if self.perplexity is not None:
            lines.append(f"{'word perplexity':<28}{self.perplexity:>10.3f}")
        return "\n".join(lines)


def evaluate(scorer, suites: Sequence[Suite] = (), corpus: Sequence[Sequence[str]] | None = None) -> EvalReport:
    report = EvalReport()
    for suite in suites:
        if suite.name in report.suites:
            raise SuiteError(f"duplicate suite name {suite.name!r}")
        report.suites[suite.name] = evaluate_suite(scorer, suite).accuracy
        report.suite_circuits[suite.name] = suite.circuit
    if corpus:
        report.perplexity = word_perplexity(scorer, corpus)
    return report
