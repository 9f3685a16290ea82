import dataclasses
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from affectpipe import labeling
from affectpipe.errors import MissingProfile, OutOfRange, ParseError, UnresolvedAmbiguity, WrongCount
from affectpipe.labeling import Arousal, Valence, build_gold, discretize, elicitation_means
from affectpipe.model import SamRating
from conftest import make_session


def oracle(score: int, mean: Fraction):
    label = Valence.POSITIVE if score > mean else Valence.NEGATIVE
    return label, abs(score - mean) <= Fraction(1, 2)


def test_brute_force_oracle():
    for score in range(1, 10):
        for k in range(10, 91):
            assert discretize(score, k / 10) == oracle(score, Fraction(k, 10)), (score, k)


@pytest.mark.parametrize("score,mean,expected", [
    (8, 5.0, (Valence.POSITIVE, False)),
    (5, 4.7, (Valence.POSITIVE, True)),
    (5, 5.0, (Valence.NEGATIVE, True)),
])
def test_discretize_examples(score, mean, expected):
    assert discretize(score, mean) == expected


def test_arousal_labels():
    assert discretize(7, 5.0, "arousal") == (Arousal.HIGH, False)
    assert discretize(5, 5.0, "arousal") == (Arousal.LOW, True)


means = st.integers(10, 90).map(lambda k: k / 10)


@given(st.integers(1, 9), st.integers(1, 9), means)
def test_monotone_in_score(s1, s2, mean):
    lo, hi = sorted((s1, s2))
    assert not (discretize(lo, mean)[0] is Valence.POSITIVE and
                discretize(hi, mean)[0] is Valence.NEGATIVE)


@given(st.integers(1, 9), st.integers(10, 90), st.integers(-3, 3))
def test_shift_invariance(score, k, c):
    if not 1 <= score + c <= 9:
        return
    assert discretize(score, k / 10) == discretize(score + c, (k + 10 * c) / 10)


def test_elicitation_examples():
    assert elicitation_means([(5, 5)] * 16) == labeling.ElicitationProfile("", 5.0, 5.0)
    half = [(3, 1)] * 8 + [(7, 1)] * 8
    assert elicitation_means(half).mean_valence == 5.0
    with pytest.raises(WrongCount):
        elicitation_means([(5, 5)] * 15)
    with pytest.raises(OutOfRange):
        elicitation_means([(5, 10)] * 16)


def _subject(sid, scores, elic=((5, 5),) * 16):
    s = make_session(sid=sid, elicitation=elic)
    ints = tuple(SamRating(v, a, 3, r.t_ms) for (v, a), r in zip(scores, s.interruptions))
    return dataclasses.replace(s, interruptions=ints)


def test_study_shape():
    sessions = [_subject(f"s{i:02d}", [(1 + (i + j) % 9, 9 - (i * j) % 9) for j in range(6)])
                for i in range(23)]
    gold = build_gold(sessions)
    assert len(gold.labels) == 138
    # class counts equal a brute-force recount
    val = Counter(("Positive" if v > 5 else "Negative") for s in sessions
                  for v in (r.valence for r in s.interruptions))
    assert gold.counts()["valence"] == {"Positive": val["Positive"], "Negative": val["Negative"]}


def test_all_clear_scores():
    gold = build_gold([_subject("a", [(9, 9)] * 6)])
    assert all(g.valence is Valence.POSITIVE and g.arousal is Arousal.HIGH
               for g in gold.labels.values())
    assert gold.ambiguous_counts() == {"valence": 0, "arousal": 0} and not gold.unresolved


def test_strict_mode_and_overrides():
    s = _subject("a", [(5, 9)] * 6)
    with pytest.raises(UnresolvedAmbiguity) as err:
        build_gold([s], strict=True)
    assert len(err.value.instances) == 6
    ov = {("a", i): ("Positive", "High") for i in range(6)}
    gold = build_gold([s], overrides=ov, strict=True)
    assert all(g.valence is Valence.POSITIVE and g.resolution is labeling.Resolution.MANUAL_OVERRIDE
               for g in gold.labels.values())


def test_pooled_threshold():
    a = _subject("a", [(7, 5)] * 6, ((3, 3),) * 16)
    b = _subject("b", [(7, 5)] * 6, ((9, 9),) * 16)
    per_subject = build_gold([a, b])
    pooled = build_gold([a, b], pooled=True)
    assert per_subject.labels[("b", 0)].valence is Valence.NEGATIVE
    assert pooled.labels[("b", 0)].valence is Valence.POSITIVE


def test_missing_profile():
    s = _subject("a", [(6, 5)] * 6)
    with pytest.raises(MissingProfile):
        build_gold([s], profiles={})


def test_overrides_round_trip(tmp_path):
    ov = {("s01", 2): ("Positive", "Low"), ("s02", 0): ("Negative", "High")}
    labeling.store_overrides(ov, tmp_path / "o.csv")
    assert labeling.load_overrides(tmp_path / "o.csv") == ov
    (tmp_path / "bad.csv").write_text("subject_id,obs_idx,valence_label,arousal_label\ns,0,Happy,High\n")
    with pytest.raises(ParseError):
        labeling.load_overrides(tmp_path / "bad.csv")
