import json
import math
import random

import mpmath
import numpy as np
import pytest
import torch

from treeplant.evaluation import (
    Criterion,
    EvalReport,
    Item,
    Suite,
    SuiteError,
    TransformerScorer,
    bundled_suites,
    evaluate,
    evaluate_suite,
    load_suite,
    region_surprisals,
    word_perplexity,
)
from treeplant.model import ModelConfig, TreePlantedTransformer
from treeplant.tokenizer import Vocabulary
from treeplant.treebank import BOS, EOS


class WordVocab:
    """One id per word type, so every word is exactly one subword."""

    def __init__(self):
        self.ids = {BOS: 0, EOS: 1}
        self.words = [BOS, EOS]

    def encode_with_alignment(self, words):
        ids = []
        for w in words:
            if w not in self.ids:
                self.ids[w] = len(self.words)
                self.words.append(w)
            ids.append(self.ids[w])
        return ids, [(k, k) for k in range(len(ids))]


class UniformScorer:
    def __init__(self, vocab, size):
        self.vocab, self.size = vocab, size

    def token_logprobs(self, ids):
        return np.full(len(ids) - 1, -math.log(self.size))


class BigramScorer:
    """``log p(word | previous word)`` from a table, defaulting to ``default``."""

    def __init__(self, table, default=-3.0):
        self.vocab = WordVocab()
        self.table = table
        self.default = default

    def token_logprobs(self, ids):
        words = [self.vocab.words[i] for i in ids]
        return np.array([self.table.get((a, b), self.default) for a, b in zip(words, words[1:])])


SINGULAR = {"teacher", "pilot", "farmer", "singer", "lawyer", "village"}


def agreement_table():
    nouns = SINGULAR | {"students", "doctors", "painters", "dancers", "cities", "guards", "city"}
    table = {}
    for n in nouns:
        sg = n in SINGULAR
        table[(n, "is")] = math.log(0.7 if sg else 0.3)
        table[(n, "are")] = math.log(0.3 if sg else 0.7)
    return table


def test_uniform_region_surprisal_is_k_log_v():
    vocab = Vocabulary()
    scorer = UniformScorer(vocab, len(vocab))
    out = region_surprisals(scorer, [("a", "hello there"), ("b", "x")])
    assert out["a"] == pytest.approx(len("hellothere") * math.log(len(vocab)), rel=1e-12)
    assert out["b"] == pytest.approx(math.log(len(vocab)), rel=1e-12)


def test_single_region_is_sentence_nll():
    scorer = BigramScorer(agreement_table())
    words = "The teacher near the students is tired .".split()
    ids, _ = scorer.vocab.encode_with_alignment([BOS, *words])
    nll = -scorer.token_logprobs(ids).sum()
    assert region_surprisals(scorer, [("all", " ".join(words))])["all"] == pytest.approx(nll, abs=1e-12)


def test_region_additivity():
    scorer = BigramScorer(agreement_table())
    rng = random.Random(0)
    words = "The teacher near the students is tired .".split()
    whole = region_surprisals(scorer, [("all", " ".join(words))])["all"]
    for _ in range(20):
        cut = rng.randrange(1, len(words))
        parts = region_surprisals(scorer, [("x", " ".join(words[:cut])), ("y", " ".join(words[cut:]))])
        assert parts["x"] + parts["y"] == pytest.approx(whole, abs=1e-12)


def test_empty_regions_rejected():
    with pytest.raises(SuiteError):
        region_surprisals(UniformScorer(WordVocab(), 5), [("a", "  ")])


def test_bigram_oracle_on_agreement_suite():
    suite = bundled_suites()["agreement_pp"]
    # every attractor disagrees with its subject, so a bigram model follows the attractor
    assert evaluate_suite(BigramScorer(agreement_table()), suite).accuracy == 0.0
    # a model that simply prefers "is" passes exactly the singular-subject items
    nouns = {noun for noun, _ in agreement_table()}
    biased = {(n, v): math.log(p) for n in nouns for v, p in (("is", 0.6), ("are", 0.4))}
    assert evaluate_suite(BigramScorer(biased), suite).accuracy == 0.5


def test_preferred_condition_gives_full_accuracy_and_ties_fail():
    suite = bundled_suites()["agreement_pp"]
    table = {(n, v): math.log(0.9 if (n in SINGULAR) == (v == "is") else 0.1)
             for n in ["teacher", "pilot", "farmer", "singer", "lawyer", "students", "doctors", "painters", "dancers", "guards"]
             for v in ("is", "are")}
    # the verb follows the attractor, so condition on the subject via a fake "previous word" lookup
    class SubjectScorer(BigramScorer):
        def token_logprobs(self, ids):
            words = [self.vocab.words[i] for i in ids]
            subj = words[2]
            return np.array([self.table.get((subj, b), -1.0) if b in ("is", "are") else -1.0 for b in words[1:]])

    assert evaluate_suite(SubjectScorer(table), suite).accuracy == 1.0
    result = evaluate_suite(UniformScorer(WordVocab(), 50), suite)
    assert result.accuracy == 0.0 and not any(result.passes)


def test_item_order_invariance():
    suite = bundled_suites()["agreement_pp"]
    scorer = BigramScorer({(a, "is"): -0.5 for a in ("students", "teacher", "village")})
    base = evaluate_suite(scorer, suite).accuracy
    rng = random.Random(3)
    for _ in range(5):
        items = suite.items[:]
        rng.shuffle(items)
        shuffled = Suite(suite.name, suite.circuit, items, suite.criterion)
        assert evaluate_suite(scorer, shuffled).accuracy == base


def test_uniform_perplexity_equals_vocab_size():
    scorer = UniformScorer(WordVocab(), 37)
    corpus = [("a", "b", "c"), ("d",), ("e", "f")]
    assert word_perplexity(scorer, corpus) == pytest.approx(37, rel=1e-12)


def test_perplexity_counts_words_not_subwords():
    vocab = Vocabulary()
    scorer = UniformScorer(vocab, len(vocab))
    corpus = [("abc", "de")]
    # 5 bytes + EOS are predicted, normalised by 2 words + EOS
    expected = math.exp(6 * math.log(len(vocab)) / 3)
    assert word_perplexity(scorer, corpus) == pytest.approx(expected, rel=1e-12)


def test_duplicated_corpus_same_perplexity():
    scorer = BigramScorer(agreement_table())
    corpus = [tuple("The teacher near the students is tired .".split()), ("The", "guards", "are", "quiet")]
    assert word_perplexity(scorer, corpus * 3) == pytest.approx(word_perplexity(scorer, corpus), rel=1e-12)


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        word_perplexity(UniformScorer(WordVocab(), 3), [])


def test_transformer_perplexity_matches_high_precision():
    vocab = Vocabulary([(104, 101)])
    torch.manual_seed(0)
    model = TreePlantedTransformer(ModelConfig(len(vocab), 2, 2, 16, 32, 32, 0.0)).eval()
    scorer = TransformerScorer(model, vocab)
    corpus = [("the", "hen"), ("he", "ate", "it")]
    total, words = mpmath.mpf(0), 0
    mpmath.mp.dps = 40
    for sent in corpus:
        ids, _ = vocab.encode_with_alignment([BOS, *sent, EOS])
        with torch.no_grad():
            logits = model(torch.tensor(ids))[0].double().numpy()
        for t in range(1, len(ids)):
            row = [mpmath.mpf(float(x)) for x in logits[t - 1]]
            total -= row[ids[t]] - mpmath.log(mpmath.fsum(mpmath.exp(x) for x in row))
        words += len(sent) + 1
    ref = float(mpmath.exp(total / words))
    assert word_perplexity(scorer, corpus) == pytest.approx(ref, rel=1e-6)


def test_suite_validation_errors():
    crit = Criterion(("a", "verb"), ("b", "verb"))
    good = {"a": [("x", "one"), ("verb", "is")], "b": [("x", "one"), ("verb", "are")]}
    Suite("s", "c", [Item(good)], crit)
    with pytest.raises(SuiteError, match="missing region"):
        Suite("s", "c", [Item(good)], Criterion(("a", "nope"), ("b", "verb")))
    with pytest.raises(SuiteError, match="missing condition"):
        Suite("s", "c", [Item(good)], Criterion(("z", "verb"), ("b", "verb")))
    with pytest.raises(SuiteError, match="disagree"):
        Suite("s", "c", [Item({"a": [("x", "one")], "b": [("y", "one")]})], Criterion(("a", "x"), ("b", "x")))
    with pytest.raises(SuiteError, match="no items"):
        Suite("s", "c", [], crit)
    with pytest.raises(SuiteError, match="no success criterion"):
        Suite("s", "c", [Item(good)])


def test_suite_json_round_trip(tmp_path):
    for suite in bundled_suites().values():
        suite.save(tmp_path / "s.json")
        back = load_suite(tmp_path / "s.json")
        assert back.to_dict() == suite.to_dict()
        assert back.name == suite.name and back.circuit == suite.circuit
    with pytest.raises(SuiteError):
        (tmp_path / "bad.json").write_text(json.dumps({"name": "x", "items": [{"conditions": {}}]}))
        load_suite(tmp_path / "bad.json")


def test_report_aggregation():
    report = EvalReport({"s1": 1.0, "s2": 0.5, "s3": 0.0}, {"s1": "A", "s2": "A", "s3": "B"}, 12.5)
    assert report.circuits == {"A": 0.75, "B": 0.0}
    assert report.overall == pytest.approx(0.5)
    lines = report.to_csv().splitlines()
    assert lines[0] == "level,name,circuit,accuracy"
    assert "overall,overall,,0.500000" in lines
    table = report.format_table()
    assert "word perplexity" in table and "A" in table


def test_evaluate_combines_suites_and_perplexity():
    scorer = UniformScorer(WordVocab(), 10)
    suites = list(bundled_suites().values())
    report = evaluate(scorer, suites, [("a", "b")])
    assert set(report.suites) == {"agreement_pp", "mvrr"}
    assert set(report.circuits) == {"Agreement", "Garden-Path Effects"}
    assert report.perplexity == pytest.approx(10)
    with pytest.raises(SuiteError, match="duplicate"):
        evaluate(scorer, suites + suites[:1])
