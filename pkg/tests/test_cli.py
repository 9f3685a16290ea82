import json
import subprocess
import sys

import pytest

from affectpipe.cli import run


def pipeline(root, seed=5, subjects=23):
    data, out = root / "data", root / "out"
    assert run(["synth", "--subjects", str(subjects), "--interval", "20", "--seed", str(seed),
                "-o", str(data)]) == 0
    assert run(["validate", str(data), "-o", str(out)]) == 0
    assert run(["features", str(data), "--devices", "empatica", "-o", str(out)]) == 0
    assert run(["label", str(data), "--dataset", str(out / "features.csv"),
                "--overrides", str(data / "overrides.csv"), "-o", str(out)]) == 0
    assert run(["evaluate", str(out / "dataset.csv"), "--setting", "loso", "--devices",
                "empatica", "--alg", "nb", "--target", "valence", "--seed", str(seed),
                "-o", str(out)]) == 0
    assert run(["lmm", str(data), "-o", str(out)]) == 0
    assert run(["report", str(out), "-o", str(out / "report")]) == 0
    return data, out


def tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes()
            for p in sorted(path.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    a = pipeline(tmp_path_factory.mktemp("a"))
    b = pipeline(tmp_path_factory.mktemp("b"))
    return a, b


def test_byte_identical_outputs(runs):
    (da, oa), (db, ob) = runs
    assert tree(da) == tree(db)
    assert tree(oa) == tree(ob)


def test_loso_report_has_23_folds(runs):
    (_, out), _ = runs
    doc = json.loads((out / "eval_loso_empatica_valence_nb.json").read_text())
    assert len(doc["runs"]) + len(doc["skipped"]) == 23
    assert doc["provenance"]["seed"] == 5
    assert doc["provenance"]["input0"].startswith("dataset.csv sha256:")


def test_text_outputs_carry_provenance(runs):
    (_, out), _ = runs
    for name in ("lmm_table.txt", "report/report.txt"):
        head = (out / name).read_text().splitlines()[0]
        assert head == "# tool: affectpipe"


def test_help_and_version():
    assert run(["--help"]) == 0
    assert run(["evaluate", "--help"]) == 0
    res = subprocess.run([sys.executable, "-m", "affectpipe.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "affectpipe" in res.stdout


def test_exit_codes(tmp_path):
    assert run(["evaluate", str(tmp_path / "missing.csv"), "--seed", "1",
                "-o", str(tmp_path)]) == 1
    assert run(["evaluate", "x.csv", "--bogus"]) == 2
    assert run(["synth", "-o", str(tmp_path)]) == 2          # seed is required
    assert run(["features", str(tmp_path / "nothing"), "-o", str(tmp_path)]) == 1


def test_single_class_dataset_fails_cleanly(tmp_path, runs):
    (_, out), _ = runs
    lines = (out / "dataset.csv").read_text().splitlines()
    header = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    cols = body[0].split(",")
    iv = cols.index("valence_label")
    rows = [r.split(",") for r in body[1:]]
    keep = [r for r in rows if r[iv] == "Positive"]
    (tmp_path / "one.csv").write_text("\n".join(header + [body[0]] + [",".join(r) for r in keep])
                                      + "\n")
    assert run(["evaluate", str(tmp_path / "one.csv"), "--alg", "nb", "--target", "valence",
                "--runs", "1", "--seed", "0", "-o", str(tmp_path)]) == 1
