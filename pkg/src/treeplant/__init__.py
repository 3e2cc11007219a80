"""Tree-planted transformers: attention heads supervised by syntactic distance."""

from .distance import (
    corpus_mean_distance,
    distance_matrix_const,
    distance_matrix_dep,
    random_distances,
    sequential_distances,
)
from .estimator import SyntacticSupervision, TreePlantedLM
from .evaluation import EvalReport, Suite, bundled_suites, evaluate, evaluate_suite, load_suite, region_surprisals, word_perplexity
from .loss import LossBreakdown, aggregate_word_attention, total_loss, tree_planting_loss
from .model import HeadSelection, ModelConfig, TreePlantedTransformer, causal_attention
from .supervision import supervision_matrix
from .tokenizer import Vocabulary, encode_with_alignment, train_vocab
from .trainer import SweepSpec, TreePlantConfig, prepare_dataset, run_sweep, train
from .treebank import (
    BOS,
    EOS,
    ConstituencyTree,
    DependencyTree,
    Sentence,
    augment_bos_eos,
    binarize,
    parse_bracketed,
    parse_conllu,
    read_treebank,
)

__version__ = "0.1.0"
