import json

import numpy as np
import pytest

from affectpipe.eda import cvxeda_decompose, driver_bursts
from affectpipe.ingest import load_session
from affectpipe.labeling import build_gold, load_overrides
from affectpipe.model import SensorConfig, SignalKind, validate_session
from affectpipe.synth import SynthConfig, generate_study, write_study

SMALL = SynthConfig(n_subjects=3, n_interruptions=4, interval_s=20.0, seed=7)


def test_same_seed_same_study():
    a, b = generate_study(SMALL), generate_study(SMALL)
    assert a.truth == b.truth
    for s, t in zip(a.sessions, b.sessions):
        for k in s.traces:
            assert np.array_equal(s.traces[k].samples, t.traces[k].samples)
        assert s.interruptions == t.interruptions
    c = generate_study(SynthConfig(**{**SMALL.to_dict(), "seed": 8}))
    assert not np.array_equal(a.sessions[0].traces[SignalKind.EDA].samples,
                              c.sessions[0].traces[SignalKind.EDA].samples)


def test_subjects_do_not_depend_on_study_size():
    big = generate_study(SynthConfig(**{**SMALL.to_dict(), "n_subjects": 5}))
    small = generate_study(SMALL)
    assert np.array_equal(big.sessions[1].traces[SignalKind.HR].samples,
                          small.sessions[1].traces[SignalKind.HR].samples)


def test_sessions_are_valid():
    study = generate_study(SMALL)
    for s in study.sessions:
        assert validate_session(s, SensorConfig.FULL_SET).ok
        assert len(s.interruptions) == 4 and len(s.elicitation_ratings) == 16
        assert all(1 <= r.progress <= 5 and 1 <= r.valence <= 9 for r in s.interruptions)


def test_null_config_turns_effects_off():
    n = SMALL.null()
    assert n.eda_scr_rate_high_arousal == 0 and n.hr_delta_high_arousal == 0
    assert n.alpha_suppression_negative_valence == 0 and n.bvp_amplitude_negative_valence == 0
    assert n.seed == SMALL.seed and n.n_subjects == SMALL.n_subjects


@pytest.mark.parametrize("bad", [{"n_subjects": 0}, {"interval_s": 5.0},
                                 {"hr_noise": -1.0}, {"alpha_suppression_negative_valence": 1.0},
                                 {"lmm_beta": (1.0, 2.0)}])
def test_config_rejects_bad_values(bad):
    with pytest.raises(ValueError):
        SynthConfig(**{**SMALL.to_dict(), **bad})


def test_overrides_resolve_gold():
    study = generate_study(SMALL)
    gold = build_gold(study.sessions, overrides=study.overrides)
    assert not gold.unresolved
    for key, lab in gold.labels.items():
        assert lab.valence == study.truth[key].valence
        assert lab.arousal == study.truth[key].arousal


def test_scr_counts_recoverable():
    c = SynthConfig(n_subjects=4, interval_s=20.0, eda_noise=0.0, seed=3)
    study = generate_study(c)
    for s in study.sessions:
        tr = s.traces[SignalKind.EDA]
        for i, r in enumerate(s.interruptions):
            k = int(round((r.t_ms - tr.start_ms) / 1000.0 * tr.sample_rate_hz))
            seg = np.asarray(tr.samples)[k - int(10 * tr.sample_rate_hz):k]
            d = cvxeda_decompose(seg, rate_hz=tr.sample_rate_hz)
            found = len(driver_bursts(d.driver, tr.sample_rate_hz))
            assert abs(found - study.truth[(s.subject_id, i)].n_scr) <= 1


def test_written_study_round_trips(tmp_path):
    study = generate_study(SMALL)
    paths = write_study(study, tmp_path)
    assert len(paths) == 3
    back = load_session(paths[0])
    s = study.sessions[0]
    assert back.subject_id == s.subject_id and back.interruptions == s.interruptions
    assert np.allclose(back.traces[SignalKind.EDA].samples, s.traces[SignalKind.EDA].samples)
    assert load_overrides(tmp_path / "overrides.csv") == dict(study.overrides)
    doc = json.loads((tmp_path / "study.json").read_text())
    assert SynthConfig.from_dict(doc["config"]) == SMALL
