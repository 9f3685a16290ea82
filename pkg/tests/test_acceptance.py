"""Acceptance suite: one PASS/FAIL line per criterion, with measured values and runtimes.

Run with ``pytest tests/test_acceptance.py -v`` (the lines appear in the
terminal summary) or directly with ``python tests/test_acceptance.py``.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from affectpipe import classifiers, dsp, eda, evaluation, features, lmm
from affectpipe.dataset import LabeledDataset, from_features
from affectpipe.dsp import DEFAULT_BANDS, Segment
from affectpipe.labeling import Valence, build_gold, discretize
from affectpipe.model import SensorConfig, SignalKind
from affectpipe.synth import SynthConfig, generate_study

RESULTS: dict[int, str] = {}
SEED = 2024


def record(n, ok, detail, seconds, budget=None):
    over = budget is not None and seconds > budget
    status = "PASS" if ok and not over else "FAIL"
    limit = f" (limit {budget:g} s)" if budget is not None else ""
    RESULTS[n] = f"criterion {n}: {status}  {detail}  [{seconds:.1f} s{limit}]"
    return status == "PASS"


def study_dataset(config):
    study = generate_study(config)
    vecs = [v for s in study.sessions for v in features.session_features(s, SensorConfig.EMPATICA_ONLY)]
    return from_features(vecs, build_gold(study.sessions, overrides=study.overrides))


_CACHE = {}


def effect_dataset():
    if "effect" not in _CACHE:
        _CACHE["effect"] = study_dataset(SynthConfig(seed=SEED))
    return _CACHE["effect"]


# --- 1 -----------------------------------------------------------------------------

def criterion_1():
    t = time.perf_counter()
    names = features.feature_names(SensorConfig.EMPATICA_ONLY)
    got = []
    for pos, neg in ((94, 44), (85, 53)):
        y = ["Positive"] * pos + ["Negative"] * neg
        d = LabeledDataset([f"s{i}" for i in range(len(y))], [0] * len(y), names,
                           np.zeros((len(y), len(names))), y, [""] * len(y))
        got.append(tuple(round(v, 2) for v in evaluation.majority_baseline(d, "valence").as_tuple()))
    ok = got == [(.34, .50, .41, .68), (.31, .50, .38, .62)]
    return record(1, ok, f"94/44 -> {got[0]}, 85/53 -> {got[1]}", time.perf_counter() - t, 1.0)


# --- 2 -----------------------------------------------------------------------------

def criterion_2():
    t = time.perf_counter()
    d = effect_dataset()
    ok = len(d) == 138 and len(d.subjects) == 23
    folds = list(evaluation.loso_folds(d))
    ok &= len(folds) == 23
    for sid, tr, te in folds:
        ok &= len(te) == 6 and not set(d.subject_ids[tr]) & set(d.subject_ids[te])
    rep = evaluation.loso_eval(d, "nb", target="valence", seed=SEED)
    ok &= len(rep.runs) + len(rep.skipped) == 23
    worst = 0.0
    for target in ("valence", "arousal"):
        dl = d.labeled(target)
        y = dl.labels(target)
        hold = evaluation.holdout_eval(dl, "nb", target=target, runs=10, seed=SEED)
        ok &= len(hold.runs) == 10
        for r in range(10):
            _, test = evaluation.stratified_split(dl, target, 0.1, SEED + r)
            yt = test.labels(target)
            for c in set(y):
                worst = max(worst, abs(np.sum(yt == c) - 0.1 * np.sum(y == c)))
    ok &= worst <= 1.0
    detail = (f"{len(folds)} LOSO folds of size 6, no shared subjects; "
              f"hold-out 10 runs, max per-class deviation {worst:.2f}")
    return record(2, ok, detail, time.perf_counter() - t, 300.0)


# --- 3 -----------------------------------------------------------------------------

def _accuracy_table(d, runs):
    out = {}
    for target in ("valence", "arousal"):
        for alg in classifiers.AlgorithmId:
            rep = evaluation.holdout_eval(d, alg, target=target, runs=runs, seed=SEED)
            out[target, alg.value] = (rep.mean.accuracy, rep.baseline.accuracy)
    return out


def criterion_3(runs=5):
    t = time.perf_counter()
    eff = _accuracy_table(effect_dataset(), runs)
    null = _accuracy_table(study_dataset(SynthConfig(seed=SEED).null()), runs)
    ok, parts = True, []
    for target in ("valence", "arousal"):
        best, alg = max((eff[k][0], k[1]) for k in eff if k[0] == target)
        base = eff[target, "nb"][1]
        ok &= best - base >= 0.15
        nbest, nalg = max((null[k][0], k[1]) for k in null if k[0] == target)
        nbase = null[target, "nb"][1]
        ok &= abs(nbest - nbase) <= 0.10
        spread = [null[k][0] - nbase for k in null if k[0] == target]
        parts.append(f"{target}: effect best {alg} {best:.3f} vs {base:.3f}, "
                     f"null best {nalg} {nbest:.3f} vs {nbase:.3f} "
                     f"(all algorithms {min(spread):+.3f}..{max(spread):+.3f})")
    return record(3, ok, "; ".join(parts), time.perf_counter() - t, 600.0)


# --- 4 -----------------------------------------------------------------------------

def _dense_objective(y, rate):
    from cvxopt import matrix, solvers
    prob = eda.build_problem(y, rate)
    solvers.options.update(show_progress=False, abstol=1e-12, reltol=1e-12, feastol=1e-12,
                           maxiters=200)
    sol = solvers.qp(matrix(prob.P.toarray()), matrix(prob.f), matrix(-prob.E.toarray()),
                     matrix(np.zeros(prob.E.shape[0])))
    return prob.objective(np.array(sol["x"]).ravel())


def criterion_4(trials=20):
    t = time.perf_counter()
    rate, n = 4.0, 480
    rng = np.random.default_rng(SEED)
    ok = True
    worst = dict(count=0, amp=0.0, time=0.0, rms=0.0, driver=0.0, obj=0.0)
    for _ in range(trials):
        k = int(rng.integers(1, 5))
        # onsets at least 22 s apart so every response peaks on its own
        slots = np.sort(rng.choice(4, size=k, replace=False))
        onsets = 20 + 100 * slots + rng.integers(0, 12, size=k)
        amps = rng.uniform(0.2, 0.8, size=k)
        scrs = [eda.scr_response(n, rate, int(o), float(a)) for o, a in zip(onsets, amps)]
        tonic = rng.uniform(1, 4) + 0.005 * np.arange(n) / rate
        y = tonic + sum(scrs) + rng.normal(0, 1e-3, n)
        d = eda.cvxeda_decompose(y, rate_hz=rate)
        found = len(eda.driver_bursts(d.driver, rate))
        worst["count"] = max(worst["count"], abs(found - k))
        for s in scrs:
            p = int(np.argmax(s))
            lo, hi = max(p - 8, 0), min(p + 8, n)
            q = lo + int(np.argmax(d.phasic[lo:hi]))
            worst["amp"] = max(worst["amp"], abs(d.phasic[q] - sum(scrs)[p]))
            worst["time"] = max(worst["time"], abs(q - p) / rate)
        worst["rms"] = max(worst["rms"], np.sqrt(np.mean(d.residual ** 2)) / np.ptp(y))
        worst["driver"] = min(worst["driver"], float(d.driver.min()))
    for seed in range(5):
        r = np.random.default_rng(seed)
        m = 64
        y = 1.0 + 0.02 * np.arange(m) / rate + r.normal(0, 0.01, m)
        y += eda.scr_response(m, rate, int(r.integers(5, 40)), r.uniform(0.1, 0.6))
        obj = eda.cvxeda_decompose(y, rate_hz=rate).solver_stats.objective
        worst["obj"] = max(worst["obj"], abs(obj - _dense_objective(y, rate)))
    ok = (worst["count"] <= 1 and worst["amp"] <= 0.05 and worst["time"] <= 0.5
          and worst["rms"] <= 0.01 and worst["driver"] >= -1e-6 and worst["obj"] <= 1e-6)
    detail = (f"{trials} injections: burst count off by <= {worst['count']}, peak error "
              f"{worst['amp']:.4f} uS, timing {worst['time']:.2f} s, residual RMS "
              f"{100 * worst['rms']:.3f}% of range, driver min {worst['driver']:.1e}; "
              f"dense QP objective gap {worst['obj']:.1e}")
    return record(4, ok, detail, time.perf_counter() - t)


# --- 5 -----------------------------------------------------------------------------

def _tone(f, seconds=20.0, rate=512.0):
    return np.sin(2 * np.pi * f * np.arange(int(seconds * rate)) / rate)


def criterion_5():
    t = time.perf_counter()
    rate, core = 512.0, slice(1024, -1024)
    pass_min, att_max = 1.0, -math.inf
    for band in DEFAULT_BANDS:
        x = _tone(band.center_hz)
        y = dsp.band_filter(x, rate, band)
        pass_min = min(pass_min, np.mean(y[core] ** 2) / np.mean(x[core] ** 2))
        for other in DEFAULT_BANDS:
            if other is not band:
                z = dsp.band_filter(_tone(other.center_hz), rate, band)
                att_max = max(att_max, 10 * np.log10(np.mean(z[core] ** 2) / np.mean(x[core] ** 2)))
    hr_err = 0.0
    for f, bpm in ((1.0, 60.0), (1.5, 90.0)):
        tt = np.arange(640) / 64.0
        beats = np.arange(0.3, 10.0, 1.0 / f)
        x = np.exp(-0.5 * ((tt[:, None] - beats[None]) / 0.08) ** 2).sum(axis=1)
        hr = dsp.derive_hr(Segment(SignalKind.BVP, 64.0, x, (0.0, 10_000.0)))
        hr_err = max(hr_err, float(np.max(np.abs(hr.samples - bpm))))
    ok = pass_min >= 0.9 and att_max <= -20.0 and hr_err <= 1.0
    detail = (f"min pass-band power {100 * pass_min:.1f}%, weakest rejection {-att_max:.1f} dB, "
              f"HR error {hr_err:.2f} bpm")
    return record(5, ok, detail, time.perf_counter() - t)


# --- 6 -----------------------------------------------------------------------------

def criterion_6():
    t = time.perf_counter()
    counts = tuple(len(features.feature_names(c)) for c in
                   (SensorConfig.FULL_SET, SensorConfig.EMPATICA_ONLY, SensorConfig.BRAINLINK_ONLY))
    study = generate_study(SynthConfig(n_subjects=3, interval_s=20.0, seed=SEED))
    exact = True
    for cfg in (SensorConfig.EMPATICA_ONLY, SensorConfig.BRAINLINK_ONLY):
        full = [v for s in study.sessions for v in features.session_features(s)]
        direct = [v for s in study.sessions for v in features.session_features(s, cfg)]
        proj = from_features(full).project(cfg)
        exact &= proj == from_features(direct)
        exact &= np.array_equal(proj.X.view(np.uint64), from_features(direct).X.view(np.uint64))
    ok = counts == (32, 11, 21) and exact
    return record(6, ok, f"feature counts {counts}, projection bit-exact: {exact}",
                  time.perf_counter() - t)


# --- 7 -----------------------------------------------------------------------------

def criterion_7():
    t = time.perf_counter()
    agree = total = 0
    for score in range(1, 10):
        for k in range(10, 91):
            mean = Fraction(k, 10)
            want = (Valence.POSITIVE if score > mean else Valence.NEGATIVE,
                    abs(score - mean) <= Fraction(1, 2))
            agree += discretize(score, k / 10) == want
            total += 1
    return record(7, agree == total, f"oracle agreement {agree}/{total}", time.perf_counter() - t)


# --- 8 -----------------------------------------------------------------------------

def criterion_8(seeds=100):
    t = time.perf_counter()
    obs = lmm.simulate(seed=SEED)
    X = lmm.design(obs)
    y = np.array([o.progress for o in obs])
    ols_gap = float(np.max(np.abs(lmm.fit_lmm(obs, theta=0.0, analyses=False).beta
                                  - np.linalg.lstsq(X, y, rcond=None)[0])))
    truth = np.array(lmm.REFERENCE_BETA)
    est = np.array([lmm.fit_lmm(lmm.simulate(seed=s), analyses=False).beta for s in range(seeds)])
    bias_mae = float(np.mean(np.abs(est.mean(axis=0) - truth)))
    per_seed_mae = float(np.mean(np.abs(est - truth)))
    strong = lmm.fit_lmm(lmm.simulate((3.0, 0.6, 0.3, -0.2, 0.1, 0.1), seed=SEED)).lr
    null_p = [lmm.lr_test_vs_null(lmm.fit_lmm(o, "ML", analyses=False), o)["p"]
              for o in (lmm.simulate((3.0, 0, 0, 0, 0, 0), seed=s) for s in range(seeds))]
    null_rate = float(np.mean(np.array(null_p) > 0.05))
    ok = (ols_gap <= 1e-6 and bias_mae <= 0.05 and strong["dof"] == 5 and strong["p"] < 1e-3
          and null_rate >= 0.9)
    detail = (f"OLS gap {ols_gap:.1e}; |mean estimate - truth| averaged over terms "
              f"{bias_mae:.4f} (per-seed MAE {per_seed_mae:.4f}); strong LR dof {strong['dof']} "
              f"p {strong['p']:.1e}; null p > .05 in {100 * null_rate:.0f}% of seeds")
    return record(8, ok, detail, time.perf_counter() - t, 120.0)


# --- 9 -----------------------------------------------------------------------------

def _cli_tree(root):
    from affectpipe.cli import run
    data, out = root / "data", root / "out"
    steps = [
        ["synth", "--subjects", "8", "--interval", "20", "--seed", str(SEED), "-o", str(data)],
        ["synth", "--subjects", "8", "--interval", "20", "--null", "--seed", str(SEED),
         "-o", str(root / "null")],
        ["validate", str(data), "-o", str(out)],
        ["features", str(data), "-o", str(out)],
        ["label", str(data), "--dataset", str(out / "features.csv"), "--overrides",
         str(data / "overrides.csv"), "-o", str(out)],
        ["evaluate", str(out / "dataset.csv"), "--setting", "holdout", "--runs", "3",
         "--devices", "empatica", "--alg", "nb", "knn", "j48", "--seed", str(SEED), "-o", str(out)],
        ["evaluate", str(out / "dataset.csv"), "--setting", "loso", "--devices", "brainlink",
         "--alg", "nb", "svm", "--seed", str(SEED), "-o", str(out)],
        ["lmm", str(data), "--method", "ML", "-o", str(out)],
        ["report", str(out), "-o", str(out / "report")],
    ]
    for argv in steps:
        if run(argv) != 0:
            raise RuntimeError(f"command failed: {argv}")
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def criterion_9(tmp):
    t = time.perf_counter()
    a = _cli_tree(tmp / "first")
    b = _cli_tree(tmp / "second")
    same = [k for k in a if a[k] == b.get(k)]
    ok = a.keys() == b.keys() and len(same) == len(a)
    return record(9, ok, f"{len(same)}/{len(a)} output files byte-identical across two runs",
                  time.perf_counter() - t)


# --- pytest entry points -------------------------------------------------------------

@pytest.mark.parametrize("n", range(1, 9))
def test_criterion(n):
    assert globals()[f"criterion_{n}"](), RESULTS[n]


def test_criterion_9(tmp_path):
    assert criterion_9(tmp_path), RESULTS[9]


if __name__ == "__main__":
    import tempfile
    from pathlib import Path
    for n in range(1, 9):
        globals()[f"criterion_{n}"]()
        print(RESULTS[n], flush=True)
    with tempfile.TemporaryDirectory() as tmp:
        criterion_9(Path(tmp))
    print(RESULTS[9])
