import csv
import json
from pathlib import Path

import pytest

from conftest import REF_CONS_TO_IS, REF_DEP_TO_IS, FIXTURES
from treeplant import cli
from treeplant.synthetic import generate_corpus
from treeplant.treebank import to_conllu

SUITES = Path(cli.__file__).parent / "data" / "suites"
TINY = ["--max-steps", "3", "--batch-size", "4"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = generate_corpus(16, seed=0)
    (root / "train.conllu").write_text(to_conllu([g.dependency for g in corpus]))
    (root / "train.mrg").write_text("\n".join(g.constituency.root.to_bracketed() for g in corpus) + "\n")
    (root / "test.txt").write_text("\n".join(" ".join(g.words) for g in generate_corpus(4, seed=1)) + "\n")
    (root / "config.json").write_text(json.dumps({"n_layer": 2, "n_head": 2, "d_model": 16, "d_ff": 32, "max_len": 96}))
    assert cli.main(["train-vocab", "--trees", str(root / "train.conllu"), "--vocab-size", "300",
                     "--out", str(root / "vocab.json")]) == 0
    assert cli.main(["train", "--trees", str(root / "train.conllu"), "--kind", "dep", "--vocab", str(root / "vocab.json"),
                     "--config", str(root / "config.json"), *TINY, "--out", str(root / "m.pt"),
                     "--log", str(root / "log.jsonl")]) == 0
    return root


def test_preprocess_dep_matches_reference(capsys, tmp_path):
    code, out, _ = run(capsys, "preprocess", "--trees", FIXTURES / "author_senators.conllu", "--kind", "dep", "--out", tmp_path / "s.jsonl")
    assert code == 0 and json.loads(out)["sentences"] == 1
    rec = json.loads((tmp_path / "s.jsonl").read_text().splitlines()[0])
    assert rec["D"][7][1:9] == REF_DEP_TO_IS
    assert len(rec["S"]) == len(rec["words"]) - 1


def test_preprocess_cons_matches_reference(capsys, tmp_path):
    assert run(capsys, "preprocess", "--trees", FIXTURES / "author_senators.mrg", "--kind", "cons", "--out", tmp_path / "c.jsonl")[0] == 0
    rec = json.loads((tmp_path / "c.jsonl").read_text())
    assert rec["D"][7][1:9] == REF_CONS_TO_IS


def test_preprocess_zero_is_words_only(capsys, tmp_path):
    run(capsys, "preprocess", "--trees", FIXTURES / "author_senators.conllu", "--kind", "zero", "--out", tmp_path / "z.jsonl")
    rec = json.loads((tmp_path / "z.jsonl").read_text())
    assert set(rec) == {"words"} and rec["words"][0] == "<bos>"


def test_preprocess_rand_is_reproducible(capsys, workspace, tmp_path):
    for name, seed in (("a", 3), ("b", 3), ("c", 4)):
        run(capsys, "preprocess", "--trees", workspace / "train.conllu", "--kind", "rand", "--seed", seed, "--out", tmp_path / name)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes() != (tmp_path / "c").read_bytes()


def test_parse_errors_report_location(capsys, tmp_path):
    bad = tmp_path / "bad.conllu"
    bad.write_text("1\tThe\t_\t_\t_\t_\t2\t_\t_\t_\n2\tdog\t_\t_\t_\t_\tx\t_\t_\t_\n")
    code, _, err = run(capsys, "preprocess", "--trees", bad, "--kind", "dep", "--out", tmp_path / "o")
    assert code == 1 and f"{bad}:2" in err
    code, _, err = run(capsys, "preprocess", "--trees", FIXTURES / "author_senators.conllu", "--kind", "cons", "--out", tmp_path / "o")
    assert code == 1 and "error:" in err


def test_train_outputs(workspace):
    log = [json.loads(x) for x in (workspace / "log.jsonl").read_text().splitlines()]
    assert [r["step"] for r in log] == [0, 1, 2]
    assert (workspace / "m.pt").stat().st_size > 0


def test_train_rejects_bad_heads(capsys, workspace, tmp_path):
    code, _, err = run(capsys, "train", "--trees", workspace / "train.conllu", "--kind", "dep", "--vocab", workspace / "vocab.json",
                       "--heads", "0-1", "--out", tmp_path / "x.pt")
    assert code == 1 and "--heads" in err and not (tmp_path / "x.pt").exists()


def test_evaluate(capsys, workspace, tmp_path):
    code, out, err = run(capsys, "evaluate", "--checkpoint", workspace / "m.pt", "--suites", *sorted(SUITES.glob("*.json")),
                         "--corpus", workspace / "test.txt", "--report", tmp_path / "r.json", "--csv", tmp_path / "r.csv")
    assert code == 0
    report = json.loads(out)
    assert set(report["circuits"]) == {"Agreement", "Garden-Path Effects"}
    assert report["perplexity"] > 1
    assert json.loads((tmp_path / "r.json").read_text()) == report
    assert (tmp_path / "r.csv").read_text().startswith("level,name,circuit,accuracy")
    assert "overall" in err and "word perplexity" in err


def test_evaluate_errors(capsys, workspace, tmp_path):
    assert run(capsys, "evaluate", "--checkpoint", tmp_path / "missing.pt", "--corpus", workspace / "test.txt")[0] == 1
    assert run(capsys, "evaluate", "--checkpoint", workspace / "m.pt")[0] == 1


def test_sweep(capsys, workspace, tmp_path):
    code, out, _ = run(capsys, "sweep", "--trees", workspace / "train.conllu", "--kind", "dep", "--vocab", workspace / "vocab.json",
                       "--config", workspace / "config.json", *TINY, "--axis", "head-direction", "--grid", "0,2",
                       "--corpus", workspace / "test.txt", "--out", tmp_path / "s.csv")
    assert code == 0 and len(json.loads(out)["rows"]) == 2
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert [r["value"] for r in rows] == ["0", "2"]
    assert run(capsys, "sweep", "--trees", workspace / "train.conllu", "--kind", "dep", "--vocab", workspace / "vocab.json",
               "--config", workspace / "config.json", "--axis", "weight", "--grid", "0,-1", "--out", tmp_path / "t.csv")[0] == 1
    assert not (tmp_path / "t.csv").exists()


def test_inspect(capsys, workspace):
    sentence = (workspace / "train.conllu").read_text().split("\n\n")[0]
    words = [line.split("\t")[1] for line in sentence.splitlines()]
    code, out, err = run(capsys, "inspect", "--checkpoint", workspace / "m.pt", "--sentence", " ".join(words),
                         "--trees", workspace / "train.conllu")
    assert code == 0
    (head,) = json.loads(out)["heads"]
    assert len(head["W"]) == len(words) + 1 and len(head["row_kl"]) == len(words) + 1
    assert "KL=" in err


def test_inspect_single_word(capsys, workspace):
    code, out, _ = run(capsys, "inspect", "--checkpoint", workspace / "m.pt", "--sentence", "dog")
    assert code == 0
    w = json.loads(out)["heads"][0]["W"]
    assert w[0][:1] == [1.0]


def test_inspect_errors(capsys, workspace, tmp_path):
    assert run(capsys, "inspect", "--checkpoint", tmp_path / "none.pt", "--sentence", "a")[0] == 1
    code, _, err = run(capsys, "inspect", "--checkpoint", workspace / "m.pt", "--sentence", "not in the bank",
                       "--trees", workspace / "train.conllu")
    assert code == 1 and "no tree" in err


def test_missing_flags_exit_nonzero():
    with pytest.raises(SystemExit) as info:
        cli.main(["train"])
    assert info.value.code != 0
