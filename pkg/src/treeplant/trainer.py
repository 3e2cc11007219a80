"""Dataset preparation, the training loop and hyperparameter sweeps."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch

from .distance import (
    distance_matrix_const,
    distance_matrix_dep,
    distance_pool,
    random_distances,
    sequential_distances,
)
from .evaluation import TransformerScorer, evaluate
from .loss import ConfigError, tree_planting_loss, nwp_loss, total_loss, word_attention
from .model import HeadSelection, ModelConfig, TreePlantedTransformer, config_hash
from .supervision import supervision_matrix
from .tokenizer import Vocabulary
from .treebank import ConstituencyTree, DependencyTree, augment_bos_eos, augment_sentence, binarize

log = logging.getLogger(__name__)

KINDS = ("dep", "cons", "bin", "zero", "rand", "seq")
TREE_KINDS = {"dep": DependencyTree, "rand": DependencyTree, "cons": ConstituencyTree, "bin": ConstituencyTree}


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, record: dict):
        super().__init__(f"non-finite loss at step {step}: {record}")
        self.step = step
        self.record = record


@dataclass
class TreePlantConfig:
    """Everything that determines a training run (together with the corpus)."""

    kind: str = "dep"
    lam: float = 0.5
    heads: tuple | None = None  # None: head 0 of the last layer
    n_layer: int = 4
    n_head: int = 4
    d_model: int = 128
    d_ff: int = 512
    max_len: int = 128
    dropout: float = 0.1
    lr: float = 5e-4
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 0.01
    epochs: int = 20
    batch_size: int = 16
    seed: int = 0
    grad_clip: float | None = None
    max_steps: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown supervision kind {self.kind!r}; expected one of {KINDS}")
        if self.lam < 0:
            raise ConfigError(f"tree-planting weight must be non-negative, got {self.lam}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        self.betas = tuple(self.betas)
        if self.heads is not None:
            self.heads = tuple(tuple(h) for h in self.heads)

    @classmethod
    def published(cls, **overrides) -> "TreePlantConfig":
        """GPT-2 small geometry with the published optimisation settings."""
        base = dict(n_layer=12, n_head=12, d_model=768, d_ff=3072, max_len=1024, dropout=0.1,
                    lr=5e-5, epochs=10, batch_size=256, lam=0.5)
        base.update(overrides)
        return cls(**base)

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size, self.n_layer, self.n_head, self.d_model, self.d_ff, self.max_len, self.dropout)

    def selection(self, model_config: ModelConfig) -> HeadSelection:
        if self.kind == "zero":
            return HeadSelection()
        if self.heads is None:
            return HeadSelection.last_layer(model_config, 1)
        return HeadSelection(self.heads).validate(model_config)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["heads"] = None if self.heads is None else [list(h) for h in self.heads]
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> "TreePlantConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "TreePlantConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def hash(self) -> str:
        return config_hash(self.to_dict())


@dataclass
class Example:
    words: tuple[str, ...]
    ids: list[int]
    spans: list[tuple[int, int]]
    distances: np.ndarray | None = None
    supervision: np.ndarray | None = None


def _augment(tree):
    return tree if tree.augmented else augment_bos_eos(tree)


def sentence_distances(trees: Sequence, kind: str, seed: int = 0, pool=None) -> list[np.ndarray | None]:
    """Distance matrix of every (augmented) sentence for a supervision kind."""
    if kind not in KINDS:
        raise ConfigError(f"unknown supervision kind {kind!r}")
    expected = TREE_KINDS.get(kind)
    if expected is not None:
        for k, t in enumerate(trees):
            if not isinstance(t, expected):
                raise ConfigError(f"kind {kind!r} needs {expected.__name__} input, sentence {k} is {type(t).__name__}")
    if kind == "zero":
        return [None] * len(trees)
    if kind == "dep":
        return [distance_matrix_dep(_augment(t)) for t in trees]
    if kind == "cons":
        return [distance_matrix_const(_augment(t)) for t in trees]
    if kind == "bin":
        return [distance_matrix_const(binarize(t) if t.augmented else augment_bos_eos(binarize(t))) for t in trees]
    lengths = [len(t.words) + (0 if getattr(t, "augmented", False) else 2) for t in trees]
    if kind == "seq":
        return [sequential_distances(n) for n in lengths]
    # rand
    if pool is None:
        pool = distance_pool(distance_matrix_dep(_augment(t)) for t in trees)
    return [random_distances(n, pool, seed=(seed, k)) for k, n in enumerate(lengths)]


def prepare_dataset(trees: Sequence, kind: str, vocab: Vocabulary, seed: int = 0, pool=None) -> list[Example]:
    """Augment, measure, supervise and tokenize every sentence."""
    distances = sentence_distances(trees, kind, seed=seed, pool=pool)
    out = []
    for tree, d in zip(trees, distances):
        words = tree.words if getattr(tree, "augmented", False) else augment_sentence(tree.words).words
        ids, spans = vocab.encode_with_alignment(words)
        s = None if d is None else supervision_matrix(d)
        out.append(Example(tuple(words), ids, spans, d, s))
    return out


def collate(batch: Sequence[Example], with_supervision: bool = True) -> dict:
    b = len(batch)
    t = max(len(e.ids) for e in batch)
    n = max(len(e.words) for e in batch)
    ids = torch.zeros(b, t, dtype=torch.long)
    member = torch.zeros(b, n, t)
    lengths = torch.tensor([len(e.ids) for e in batch])
    n_words = torch.tensor([len(e.words) for e in batch])
    sup = torch.zeros(b, n - 1, n) if with_supervision else None
    for k, e in enumerate(batch):
        ids[k, : len(e.ids)] = torch.tensor(e.ids)
        for w, (s, last) in enumerate(e.spans):
            member[k, w, s : last + 1] = 1
        if sup is not None:
            m = len(e.words)
            sup[k, : m - 1, :m] = torch.from_numpy(e.supervision)
    return {"ids": ids, "lengths": lengths, "member": member, "n_words": n_words, "supervision": sup}


def batch_losses(model, batch: dict, selection: HeadSelection, lam: float, track_tree: bool = True):
    logits, record = model(batch["ids"], selection)
    nwp = nwp_loss(logits, batch["ids"], batch["lengths"])
    tree = []
    if batch["supervision"] is not None and track_tree:
        with torch.set_grad_enabled(torch.is_grad_enabled() and lam > 0):
            for key in selection:
                w = word_attention(record[key], batch["member"])
                tree.append(tree_planting_loss(batch["supervision"], w, batch["n_words"]).mean())
    return total_loss(nwp, tree, lam)


@dataclass
class TrainResult:
    model: TreePlantedTransformer
    selection: HeadSelection
    history: list[dict] = field(default_factory=list)
    config: TreePlantConfig | None = None

    @property
    def losses(self) -> list[float]:
        return [r["total"] for r in self.history]


def train(config: TreePlantConfig, dataset: Sequence[Example], vocab: Vocabulary,
          log_path=None, callback: Callable[[dict], None] | None = None) -> TrainResult:
    """Optimise the tree-planting objective; fully determined by ``config.seed``."""
    if not dataset:
        raise ConfigError("training dataset is empty")
    supervised = config.kind != "zero"
    if supervised and any(e.supervision is None for e in dataset):
        raise ConfigError(f"kind {config.kind!r} needs supervision matrices in every example")
    mcfg = config.model_config(len(vocab))
    too_long = [k for k, e in enumerate(dataset) if len(e.ids) > mcfg.max_len]
    if too_long:
        raise ConfigError(f"{len(too_long)} sentences exceed max_len={mcfg.max_len} (first: #{too_long[0]})")

    torch.manual_seed(config.seed)
    model = TreePlantedTransformer(mcfg)
    selection = config.selection(mcfg)
    optim = torch.optim.AdamW(model.parameters(), lr=config.lr, betas=config.betas, weight_decay=config.weight_decay)
    result = TrainResult(model, selection, config=config)
    sink = open(log_path, "w", encoding="utf-8") if log_path else None
    step = 0
    try:
        model.train()
        for epoch in range(config.epochs):
            order = np.random.default_rng((config.seed, epoch)).permutation(len(dataset))
            for start in range(0, len(order), config.batch_size):
                batch = collate([dataset[i] for i in order[start : start + config.batch_size]], supervised)
                parts = batch_losses(model, batch, selection, config.lam)
                record = {"step": step, "epoch": epoch, **parts.as_floats()}
                if not math.isfinite(record["total"]):
                    raise TrainingDiverged(step, record)
                optim.zero_grad(set_to_none=True)
                parts.total.backward()
                if config.grad_clip:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
                optim.step()
                result.history.append(record)
                if sink:
                    sink.write(json.dumps(record) + "\n")
                if callback:
                    callback(record)
                step += 1
                if config.max_steps is not None and step >= config.max_steps:
                    return result
        return result
    finally:
        model.eval()
        if sink:
            sink.close()


@torch.no_grad()
def mean_tree_loss(model, dataset: Sequence[Example], selection: HeadSelection, batch_size: int = 64) -> list[float]:
    """Per-head tree-planting loss averaged over sentences, dropout off."""
    was = model.training
    model.eval()
    totals = torch.zeros(len(selection), dtype=torch.float64)
    for start in range(0, len(dataset), batch_size):
        batch = collate(dataset[start : start + batch_size])
        _, record = model(batch["ids"], selection)
        for h, key in enumerate(selection):
            w = word_attention(record[key].double(), batch["member"].double())
            totals[h] += tree_planting_loss(batch["supervision"].double(), w, batch["n_words"]).sum()
    model.train(was)
    return (totals / len(dataset)).tolist()


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

AXES = ("head-direction", "layer-direction", "weight")


@dataclass
class SweepSpec:
    axis: str
    values: tuple

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; expected one of {AXES}")
        if not self.values:
            raise ConfigError("sweep grid is empty")
        self.values = tuple(self.values)

    def point_config(self, base: TreePlantConfig, value) -> TreePlantConfig:
        if self.axis == "weight":
            if value < 0:
                raise ConfigError(f"negative weight {value} in sweep grid")
            return replace(base, lam=float(value))
        k = int(value)
        if self.axis == "head-direction":
            if not 0 <= k <= base.n_head:
                raise ConfigError(f"head count {k} outside 0..{base.n_head}")
            heads = tuple((base.n_layer - 1, h) for h in range(k))
        else:
            if not 0 <= k <= base.n_layer:
                raise ConfigError(f"layer count {k} outside 0..{base.n_layer}")
            heads = tuple((l, 0) for l in range(k))
        return replace(base, heads=heads)


SWEEP_FIELDS = ["value", "sg_accuracy", "ppl", "seed"]


def run_sweep(spec: SweepSpec, base: TreePlantConfig, dataset: Sequence[Example], vocab: Vocabulary,
              suites=(), eval_corpus=None, out_csv=None) -> list[dict]:
    """Train and evaluate one model per grid value; failed points yield NaN metrics."""
    rows = []
    for value in spec.values:
        try:
            cfg = spec.point_config(base, value)
            result = train(cfg, dataset, vocab)
            report = evaluate(TransformerScorer(result.model, vocab), suites, eval_corpus)
            acc = report.overall if report.overall is not None else float("nan")
            ppl = report.perplexity if report.perplexity is not None else float("nan")
        except Exception as exc:  # a failed grid point must not stop the sweep
            log.error("sweep %s=%s failed: %s", spec.axis, value, exc)
            acc = ppl = float("nan")
        rows.append({"value": value, "sg_accuracy": acc, "ppl": ppl, "seed": base.seed})
    if out_csv is not None:
        write_sweep_csv(rows, out_csv)
    return rows


def write_sweep_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in SWEEP_FIELDS})
