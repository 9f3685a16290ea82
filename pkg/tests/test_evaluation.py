import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affectpipe import classifiers, evaluation as E
from affectpipe.dataset import LabeledDataset
from affectpipe.errors import ClassTooSmall, InsufficientData
from affectpipe.features import feature_names
from affectpipe.model import SensorConfig

NAMES = feature_names(SensorConfig.EMPATICA_ONLY)


def dataset(valence, n_subjects=None, sep=1.5, seed=0, arousal=None):
    valence = np.asarray(valence, dtype=object)
    n = len(valence)
    n_subjects = n_subjects or n
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, len(NAMES))) + sep * (valence == "Positive")[:, None]
    sids = [f"S{i % n_subjects:02d}" for i in range(n)]
    obs = [i // n_subjects for i in range(n)]
    return LabeledDataset(sids, obs, NAMES, X, valence,
                          arousal if arousal is not None else np.full(n, "", dtype=object))


def counts(pos, neg, **kw):
    return dataset(["Positive"] * pos + ["Negative"] * neg, **kw)


@pytest.mark.parametrize("pos,neg,expected", [(94, 44, (.34, .50, .41, .68)),
                                              (85, 53, (.31, .50, .38, .62))])
def test_majority_baselines(pos, neg, expected):
    m = E.majority_baseline(counts(pos, neg), "valence")
    assert np.allclose(m.as_tuple(), expected, atol=0.005)


def _oracle(pred, truth, classes):
    p, r, f = [], [], []
    for c in classes:
        tp = sum(a == c and b == c for a, b in zip(pred, truth))
        fp = sum(a == c and b != c for a, b in zip(pred, truth))
        fn = sum(a != c and b == c for a, b in zip(pred, truth))
        pc = tp / (tp + fp) if tp + fp else 0.0
        rc = tp / (tp + fn) if tp + fn else 0.0
        p.append(pc)
        r.append(rc)
        f.append(2 * pc * rc / (pc + rc) if pc + rc else 0.0)
    acc = sum(a == b for a, b in zip(pred, truth)) / len(truth)
    return np.mean(p), np.mean(r), np.mean(f), acc


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("AB"), st.sampled_from("AB")), min_size=1, max_size=40))
def test_metrics_match_confusion_oracle(pairs):
    pred, truth = zip(*pairs)
    got = E.compute_metrics(pred, truth, ["A", "B"]).as_tuple()
    assert np.allclose(got, _oracle(pred, truth, ["A", "B"]), atol=1e-12)
    assert all(0.0 <= v <= 1.0 for v in got)


def test_stratified_split_sizes():
    d = counts(94, 44)
    for seed in range(5):
        train, test = E.stratified_split(d, "valence", 0.1, seed)
        y = test.labels("valence")
        assert len(test) == 14 and len(train) == 124
        assert 9 <= np.sum(y == "Positive") <= 10 and 4 <= np.sum(y == "Negative") <= 5
        keys = set(zip(train.subject_ids, train.obs_idx)) | set(zip(test.subject_ids, test.obs_idx))
        assert len(keys) == 138
    a = E.stratified_split(d, "valence", 0.1, 0)[1]
    b = E.stratified_split(d, "valence", 0.1, 1)[1]
    assert set(a.subject_ids) != set(b.subject_ids)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 60), st.integers(2, 60), st.floats(0.0, 0.5), st.integers(0, 100))
def test_split_stays_stratified(pos, neg, frac, seed):
    d = counts(pos, neg)
    train, test = E.stratified_split(d, "valence", frac, seed)
    y = test.labels("valence")
    assert abs(np.sum(y == "Positive") - pos * frac) <= 1 + 1e-9
    assert abs(np.sum(y == "Negative") - neg * frac) <= 1 + 1e-9
    assert set(train.labels("valence")) == {"Positive", "Negative"}


def test_zero_fraction_and_small_class():
    train, test = E.stratified_split(counts(10, 5), "valence", 0.0, 0)
    assert len(test) == 0 and len(train) == 15
    with pytest.raises(ClassTooSmall):
        E.stratified_split(counts(10, 1), "valence", 0.1, 0)


def test_loo_uses_n_fits(monkeypatch):
    calls = []
    real = classifiers.fit

    def spy(*a, **kw):
        calls.append(1)
        return real(*a, **kw)

    monkeypatch.setattr(classifiers, "fit", spy)
    E.loo_cv_select("nb", [{}], counts(8, 7), "valence")
    assert len(calls) == 15


def test_loo_prefers_memorizer():
    d = counts(12, 12, sep=6.0)
    hp, accs = E.loo_cv_select("knn", [{"k": 1}, {"k": 23}], d, "valence")
    assert hp == {"k": 1} and accs[0] > accs[1]


def test_loo_ties_go_to_first_candidate():
    d = counts(10, 10, sep=8.0)
    hp, accs = E.loo_cv_select("knn", [{"k": 3}, {"k": 1}], d, "valence")
    assert accs[0] == accs[1] and hp == {"k": 3}


def test_holdout_runs_and_determinism():
    d = counts(30, 20, sep=2.0)
    one = E.holdout_eval(d, "nb", target="valence", runs=1, seed=3)
    assert len(one.runs) == 1
    a = E.holdout_eval(d, "knn", [{"k": 1}, {"k": 3}], "valence", runs=4, seed=5)
    b = E.holdout_eval(d, "knn", [{"k": 1}, {"k": 3}], "valence", runs=4, seed=5)
    assert a.to_json() == b.to_json()
    arr = np.array([m.as_tuple() for m in a.runs])
    assert np.allclose(a.mean.as_tuple(), arr.sum(axis=0) / len(arr), atol=1e-12)
    assert E.EvalReport.from_dict(a.to_dict()).to_json() == a.to_json()


def test_loso_folds_do_not_leak():
    rng = np.random.default_rng(4)
    d = dataset(rng.choice(["Positive", "Negative"], 138), n_subjects=23)
    folds = list(E.loso_folds(d))
    assert len(folds) == 23
    for sid, tr, te in folds:
        assert len(te) == 6 and len(tr) == 132
        assert sid not in set(d.subject_ids[tr])
        assert set(d.subject_ids[te]) == {sid}


def test_loso_eval_two_subjects():
    d = dataset(["Positive", "Negative"] * 4, n_subjects=2)
    d = LabeledDataset(["A"] * 4 + ["B"] * 4, list(range(4)) * 2, NAMES, d.X,
                       ["Positive", "Negative"] * 4, [""] * 8)
    rep = E.loso_eval(d, "nb", target="valence")
    assert rep.run_ids == ["A", "B"] and rep.skipped == []
    with pytest.raises(InsufficientData):
        E.loso_eval(d.subset(np.arange(4)), "nb", target="valence")


def test_loso_skips_single_class_training():
    y = ["Positive"] * 3 + ["Negative"] + ["Positive"] * 3
    d = LabeledDataset(["A", "A", "A", "B", "C", "C", "C"], [0, 1, 2, 0, 0, 1, 2], NAMES,
                       np.random.default_rng(0).normal(size=(7, len(NAMES))), y, [""] * 7)
    rep = E.loso_eval(d, "nb", target="valence")
    assert rep.skipped == ["B"] and rep.run_ids == ["A", "C"]


def test_render_table_has_baseline_row():
    d = counts(30, 20)
    rep = E.holdout_eval(d, "nb", target="valence", runs=2)
    text = E.render_table([rep])
    assert "baseline" in text and "nb" in text
    csv = E.render_table([rep], fmt="csv")
    assert csv.splitlines()[0].startswith("setting,")
