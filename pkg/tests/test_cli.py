import json
import subprocess
import sys

import pytest

from mogkan.cli import main


def run(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "mogkan", *map(str, args)], capture_output=True, text=True, cwd=cwd)


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    d = tmp_path_factory.mktemp("small")
    assert main(["synth", "--samples", "60", "--features", "8", "--classes", "2", "--informative", "3",
                 "--seed", "1", "--out", str(d)]) == 0
    return d


def test_synth_writes_four_files_deterministically(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("synth", "--samples", 30, "--features", 6, "--classes", 3, "--informative", 2,
                   "--seed", 7, "--out", d).returncode == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["interactions.tsv", "labels.csv", "matrix.csv", "truth.txt"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_synth_usage_errors(tmp_path):
    r = run("synth", "--features", 50, "--classes", 3, "--out", tmp_path)
    assert r.returncode == 2 and "usage" in r.stderr
    r = run("synth", "--samples", 10, "--features", 50, "--classes", 3, "--informative", 60, "--out", tmp_path)
    assert r.returncode == 2


def test_select_huge_lambda_warns(small, tmp_path):
    r = run("select", "--matrix", small / "matrix.csv", "--labels", small / "labels.csv", "--lambda", 1e9,
            "--out", tmp_path)
    assert r.returncode == 0
    assert "warning" in r.stderr
    assert (tmp_path / "selected.txt").read_text() == ""


def test_select_recovers_planted(small, tmp_path):
    assert main(["select", "--matrix", str(small / "matrix.csv"), "--labels", str(small / "labels.csv"),
                 "--lambda", "5", "--out", str(tmp_path)]) == 0
    selected = set((tmp_path / "selected.txt").read_text().split())
    assert selected >= set((small / "truth.txt").read_text().split())


def test_select_bad_csv(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("sample_id,a\nS1,1\nS2,oops\n")
    labels = tmp_path / "l.csv"
    labels.write_text("sample_id,label\nS1,x\nS2,y\n")
    r = run("select", "--matrix", bad, "--labels", labels, "--lambda", 1, "--out", tmp_path)
    assert r.returncode == 1
    assert "line 3" in r.stderr


def test_filter(small, tmp_path):
    assert main(["filter", "--matrix", str(small / "matrix.csv"), "--labels", str(small / "labels.csv"),
                 "--p-threshold", "0.001", "--out", str(tmp_path)]) == 0
    kept = set((tmp_path / "selected.txt").read_text().split())
    assert kept and kept <= {f"F{i:02d}" for i in range(8)}


def test_integrate_cli(tmp_path):
    (tmp_path / "a.csv").write_text("sample_id,g\nS1,1\nS2,2\n")
    (tmp_path / "b.csv").write_text("sample_id,g\nS2,5\nS3,6\n")
    assert main(["integrate", "--matrix", str(tmp_path / "a.csv"), "--prefix", "rna", "--matrix",
                 str(tmp_path / "b.csv"), "--prefix", "meth", "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "integrated.csv").read_text() == "sample_id,rna:g,meth:g\nS2,2,5\n"


def test_build_graph_cli(tmp_path):
    (tmp_path / "i.tsv").write_text("protein1\tprotein2\tcombined_score\nA\tB\t900\nB\tC\t900\n")
    assert main(["build-graph", "--interactions", str(tmp_path / "i.tsv"), "--min-degree", "2",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "graph.json").read_text())
    assert doc["node_ids"] == ["B"] and doc["edges"] == []


def test_cv_rejects_one_fold(small, tmp_path):
    r = run("cv", "--matrix", small / "matrix.csv", "--labels", small / "labels.csv", "--folds", 1,
            "--out", tmp_path)
    assert r.returncode == 2


def test_cv_outputs_and_determinism(small, tmp_path):
    cfg = {"data": {"matrix": str(small / "matrix.csv"), "labels": str(small / "labels.csv")},
           "train": {"epochs": 3, "folds": 3}, "graph": {"interactions": str(small / "interactions.tsv"),
                                                         "min_degree": 0}}
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    outs = []
    for name in ("r1", "r2"):
        assert main(["cv", "--config", str(tmp_path / "run.json"), "--out", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name / "metrics.json").read_bytes())
    assert outs[0] == outs[1]
    names = {p.name for p in (tmp_path / "r1").iterdir()}
    assert {"metrics.json", "summary.tsv", "fold0.json", "fold2.json", "run.log"} <= names
    assert main(["report", str(tmp_path / "r1" / "metrics.json"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "report.tsv").read_text().startswith("Data\tAccuracy")


def test_train_then_importance(small, tmp_path):
    assert main(["train", "--matrix", str(small / "matrix.csv"), "--labels", str(small / "labels.csv"),
                 "--epochs", "2", "--out", str(tmp_path)]) == 0
    assert len(json.loads((tmp_path / "trace.json").read_text())["loss"]) == 2
    mapping = tmp_path / "genes.tsv"
    mapping.write_text("feature_id\tgene_stable_id\tgene_name\nF00\tENSG1\tTP53\n")
    assert main(["importance", "--checkpoint", str(tmp_path / "model.json"), "--mapping", str(mapping),
                 "--top-k", "100", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "importance.tsv").read_text().splitlines()
    assert lines[0] == "feature_id\tgene_name\tscore"
    assert len(lines) == 9
    assert any(line.startswith("F00\tTP53\t") for line in lines)


def test_importance_missing_checkpoint(tmp_path):
    assert run("importance", "--checkpoint", tmp_path / "none.json", "--out", tmp_path).returncode == 1


def test_bad_config_is_usage_error(tmp_path):
    (tmp_path / "c.json").write_text('{"model": {"widht": 3}}')
    assert main(["cv", "--config", str(tmp_path / "c.json")]) == 2
    assert main(["cv", "--config", str(tmp_path / "missing.json")]) == 2
