import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import Pipeline

from conftest import REF_DEP_TO_IS
from treeplant.estimator import SyntacticSupervision, TreePlantedLM
from treeplant.evaluation import bundled_suites
from treeplant.loss import ConfigError
from treeplant.supervision import supervision_matrix
from treeplant.synthetic import generate_corpus
from treeplant.treebank import Sentence
from treeplant.validation import check_distance_matrix, check_lambda, check_sentences, check_trees

SMALL = dict(n_layer=2, n_head=2, d_model=16, d_ff=32, max_len=64, epochs=1, batch_size=4, vocab_size=300)


def test_supervision_transformer(ref_dep):
    est = SyntacticSupervision(kind="dep").fit([ref_dep])
    (s,) = est.transform([ref_dep])
    assert s.shape == (9, 10)
    d = est.distances([ref_dep])[0]
    assert list(d[7, 1:9]) == REF_DEP_TO_IS
    assert np.allclose(s, supervision_matrix(d))


def test_supervision_params_and_pipeline(ref_dep):
    est = SyntacticSupervision(kind="rand", seed=4)
    assert est.get_params() == {"kind": "rand", "seed": 4}
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est
    trees = [g.dependency for g in generate_corpus(10, seed=0)]
    out = Pipeline([("sup", est)]).fit_transform(trees)
    again = clone(est).fit(trees).transform(trees)
    assert all(np.array_equal(a, b) for a, b in zip(out, again))


def test_supervision_errors(ref_dep, ref_cons):
    with pytest.raises(NotFittedError):
        SyntacticSupervision().transform([ref_dep])
    with pytest.raises(ConfigError):
        SyntacticSupervision(kind="dep").fit([ref_cons])
    with pytest.raises(ValueError):
        SyntacticSupervision(kind="zero").fit([ref_dep])
    with pytest.raises(TypeError):
        SyntacticSupervision().fit(["not a tree"])


def test_validation_helpers(ref_dep):
    assert check_sentences(["a b", ("c",), Sentence(("d", "e")), ref_dep])[0] == ("a", "b")
    with pytest.raises(ValueError):
        check_sentences([""])
    with pytest.raises(ValueError):
        check_sentences([])
    with pytest.raises(TypeError):
        check_sentences([3])
    with pytest.raises(ValueError):
        check_trees([])
    with pytest.raises(ConfigError):
        check_lambda(float("nan"))
    with pytest.raises(ValueError):
        check_distance_matrix([[0, 1], [2, 0]])
    check_distance_matrix([[0, 1], [1, 0]])


@pytest.fixture(scope="module")
def fitted():
    corpus = generate_corpus(20, seed=2)
    return TreePlantedLM(**SMALL).fit([g.dependency for g in corpus]), corpus


def test_lm_params_clone():
    est = TreePlantedLM(kind="cons", lam=0.25, **SMALL)
    params = est.get_params()
    assert params["kind"] == "cons" and params["lam"] == 0.25 and params["vocab"] is None
    assert clone(est).get_params() == params
    est.set_params(lam=1.0)
    assert est.lam == 1.0


def test_lm_fit_score_evaluate(fitted):
    est, corpus = fitted
    assert len(est.history_) == 5
    sentences = [g.words for g in corpus[:5]]
    ppl = est.perplexity(sentences)
    assert ppl > 1 and est.score(sentences) == -ppl
    report = est.evaluate(list(bundled_suites().values()), sentences)
    assert 0 <= report.overall <= 1 and report.perplexity == pytest.approx(ppl)
    (loss,) = est.tree_loss()
    assert loss > 0
    att = est.word_attention("the dog is good .")
    (w,) = att.values()
    assert w.shape == (6, 7) and np.allclose(w.sum(1), 1)


def test_lm_save_load(fitted, tmp_path):
    est, corpus = fitted
    est.save(tmp_path / "m.pt")
    back = TreePlantedLM.load(tmp_path / "m.pt")
    sentences = [g.words for g in corpus[:3]]
    assert back.perplexity(sentences) == est.perplexity(sentences)
    assert back.get_params()["kind"] == "dep"


def test_lm_errors():
    with pytest.raises(NotFittedError):
        TreePlantedLM().perplexity(["a b"])
    with pytest.raises(ConfigError):
        TreePlantedLM(lam=-1, **SMALL).fit([g.dependency for g in generate_corpus(3)])
    with pytest.raises(ConfigError):
        TreePlantedLM(kind="bin", **SMALL).fit([g.dependency for g in generate_corpus(3)])
