"""scikit-learn compatible front ends.

``SyntacticSupervision`` maps trees to supervision matrices and slots into
a :class:`~sklearn.pipeline.Pipeline`; ``TreePlantedLM`` wraps tokenizer
training, dataset preparation and optimisation behind ``fit``/``score``.
"""
from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .distance import distance_matrix_dep, distance_pool
from .evaluation import TransformerScorer, evaluate, word_perplexity
from .loss import aggregate_word_attention
from .model import load_checkpoint, save_checkpoint
from .supervision import supervision_matrix
from .tokenizer import Vocabulary, train_vocab
from .trainer import TreePlantConfig, mean_tree_loss, prepare_dataset, sentence_distances, train
from .treebank import BOS, augment_bos_eos, augment_sentence
from .validation import check_kind, check_lambda, check_sentences, check_trees


class SyntacticSupervision(BaseEstimator, TransformerMixin):
    """Turn trees into row-stochastic attention targets.

    Parameters
    ----------
    kind : {'dep', 'cons', 'bin', 'rand', 'seq'}
        Which distance to supervise with.  ``'rand'`` learns its pool of
        dependency distances during ``fit``.
    seed : int
        Seed for the ``'rand'`` generator.
    """

    def __init__(self, kind="dep", seed=0):
        self.kind = kind
        self.seed = seed

    def fit(self, X, y=None):
        kind = check_kind(self.kind)
        if kind == "zero":
            raise ValueError("kind='zero' carries no supervision to transform into")
        trees = check_trees(X, kind)
        if kind == "rand":
            self.pool_ = distance_pool(
                distance_matrix_dep(t if t.augmented else augment_bos_eos(t)) for t in trees
            )
        else:
            self.pool_ = None
        self.n_features_in_ = 1
        return self

    def distances(self, X):
        check_is_fitted(self, "n_features_in_")
        return sentence_distances(check_trees(X), self.kind, seed=self.seed, pool=self.pool_)

    def transform(self, X):
        """List of ``(n - 1, n)`` arrays, one per sentence (sentences differ in ``n``)."""
        return [supervision_matrix(d) for d in self.distances(X)]


class TreePlantedLM(BaseEstimator):
    """Causal transformer LM trained with tree-planted attention heads.

    Parameters mirror :class:`~treeplant.trainer.TreePlantConfig`; ``vocab``
    may hold a pre-trained :class:`~treeplant.tokenizer.Vocabulary`,
    otherwise one of ``vocab_size`` entries is learned from the training
    sentences.
    """

    def __init__(self, kind="dep", lam=0.5, heads=None, vocab_size=512, n_layer=4, n_head=4,
                 d_model=128, d_ff=512, max_len=128, dropout=0.1, lr=5e-4, weight_decay=0.01,
                 epochs=20, batch_size=16, seed=0, grad_clip=None, max_steps=None, vocab=None):
        self.kind = kind
        self.lam = lam
        self.heads = heads
        self.vocab_size = vocab_size
        self.n_layer = n_layer
        self.n_head = n_head
        self.d_model = d_model
        self.d_ff = d_ff
        self.max_len = max_len
        self.dropout = dropout
        self.lr = lr
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.grad_clip = grad_clip
        self.max_steps = max_steps
        self.vocab = vocab

    def _config(self) -> TreePlantConfig:
        return TreePlantConfig(
            kind=check_kind(self.kind), lam=check_lambda(self.lam), heads=self.heads,
            n_layer=self.n_layer, n_head=self.n_head, d_model=self.d_model, d_ff=self.d_ff,
            max_len=self.max_len, dropout=self.dropout, lr=self.lr, weight_decay=self.weight_decay,
            epochs=self.epochs, batch_size=self.batch_size, seed=self.seed,
            grad_clip=self.grad_clip, max_steps=self.max_steps,
        )

    def fit(self, X, y=None):
        config = self._config()
        trees = check_trees(X, config.kind)
        self.vocab_ = self.vocab if self.vocab is not None else train_vocab([t.words for t in trees], self.vocab_size)
        self.dataset_ = prepare_dataset(trees, config.kind, self.vocab_, seed=config.seed)
        result = train(config, self.dataset_, self.vocab_)
        self.model_ = result.model
        self.selection_ = result.selection
        self.history_ = result.history
        self.config_ = config
        return self

    @property
    def scorer_(self) -> TransformerScorer:
        check_is_fitted(self, "model_")
        return TransformerScorer(self.model_, self.vocab_)

    def perplexity(self, X) -> float:
        return word_perplexity(self.scorer_, check_sentences(X))

    def score(self, X, y=None) -> float:
        """Negative word-level perplexity, so that larger is better."""
        return -self.perplexity(X)

    def evaluate(self, suites, corpus=None):
        return evaluate(self.scorer_, suites, None if corpus is None else check_sentences(corpus))

    def tree_loss(self, X=None) -> list[float]:
        """Per-head tree-planting loss on ``X`` (default: the training set)."""
        check_is_fitted(self, "model_")
        data = self.dataset_ if X is None else prepare_dataset(check_trees(X, self.kind), self.kind, self.vocab_, seed=self.seed)
        return mean_tree_loss(self.model_, data, self.selection_)

    @torch.no_grad()
    def word_attention(self, sentence) -> dict:
        """Word-level attention of every tree-planted head for one sentence."""
        check_is_fitted(self, "model_")
        (words,) = check_sentences([sentence])
        if words[0] != BOS:
            words = augment_sentence(words).words
        ids, spans = self.vocab_.encode_with_alignment(words)
        self.model_.eval()
        _, record = self.model_(torch.tensor(ids), self.selection_)
        return {key: aggregate_word_attention(a.double(), spans).numpy() for key, a in record.items()}

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        save_checkpoint(path, self.model_, self.vocab_, self.selection_, self.config_.to_dict())

    @classmethod
    def load(cls, path) -> "TreePlantedLM":
        model, vocab, selection, payload = load_checkpoint(path)
        cfg = TreePlantConfig.from_dict(payload["train_config"])
        est = cls(**{k: v for k, v in cfg.to_dict().items() if k != "betas"}, vocab=vocab)
        est.vocab_ = vocab
        est.model_ = model
        est.selection_ = selection
        est.config_ = cfg
        est.history_ = []
        return est
