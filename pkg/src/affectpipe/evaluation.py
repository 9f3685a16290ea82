"""Hold-out and leave-one-subject-out evaluation, metrics and the majority baseline."""

from __future__ import annotations

import enum
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from . import classifiers
from .classifiers import AlgorithmId
from .dataset import LabeledDataset
from .errors import ClassTooSmall, EmptyDataset, InsufficientData, LengthMismatch, SingleClass

log = logging.getLogger(__name__)

THREADS_ENV = "AFFECTPIPE_THREADS"


def n_jobs() -> int:
    """Worker count from ``AFFECTPIPE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


class Setting(str, enum.Enum):
    HOLDOUT = "HoldOut"
    LOSO = "Loso"


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    accuracy: float

    def as_tuple(self):
        return (self.precision, self.recall, self.f1, self.accuracy)


def compute_metrics(pred: Sequence[str], truth: Sequence[str], classes=None) -> Metrics:
    """Macro-averaged precision, recall and F1 over both classes, plus accuracy.

    Per-class ratios with a zero denominator count as 0. ``classes`` defaults
    to the union of labels seen in ``pred`` and ``truth``.
    """
    pred = np.asarray(pred, dtype=object)
    truth = np.asarray(truth, dtype=object)
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions for {len(truth)} labels")
    if len(pred) == 0:
        raise EmptyDataset("no predictions to score")
    if classes is None:
        classes = sorted(set(truth) | set(pred))
    ps, rs, fs = [], [], []
    for c in classes:
        tp = int(np.sum((pred == c) & (truth == c)))
        fp = int(np.sum((pred == c) & (truth != c)))
        fn = int(np.sum((pred != c) & (truth == c)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        ps.append(p)
        rs.append(r)
        fs.append(2 * p * r / (p + r) if p + r else 0.0)
    return Metrics(float(np.mean(ps)), float(np.mean(rs)), float(np.mean(fs)),
                   float(np.mean(pred == truth)))


def majority_label(labels: Sequence[str]) -> str:
    vals, counts = np.unique(np.asarray(labels, dtype=str), return_counts=True)
    # np.unique sorts, so argmax picks the lexicographically first among ties
    return str(vals[np.argmax(counts)])


def majority_baseline(d: LabeledDataset, target: str, classes=None) -> Metrics:
    """Score of always predicting the most frequent ``target`` class of ``d``."""
    truth = d.labeled(target).labels(target)
    if len(truth) == 0:
        raise EmptyDataset(f"no {target} labels")
    pred = np.full(len(truth), majority_label(truth), dtype=object)
    if classes is None:
        classes = sorted(set(truth))
        if len(classes) == 1:
            from .labeling import LABELS
            classes = sorted(LABELS[target])
    return compute_metrics(pred, truth, classes)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(d: LabeledDataset, target: str, test_fraction: float = 0.1, seed: int = 0):
    """Split ``d`` (rows labeled for ``target``) into train and test by class.

    Each class contributes ``round(count * fraction)`` test rows; if these do
    not add up to ``round(n * fraction)`` the classes with the largest
    rounding remainders give or take one row.
    """
    d = d.labeled(target)
    y = d.labels(target)
    classes = sorted(set(y))
    counts = {c: int(np.sum(y == c)) for c in classes}
    small = [c for c in classes if counts[c] < 2]
    if small:
        raise ClassTooSmall(f"class {small[0]!r} has fewer than 2 members")
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must be in [0, 1)")
    want = {c: _round_half_up(counts[c] * test_fraction) for c in classes}
    total = _round_half_up(len(y) * test_fraction)
    rem = {c: counts[c] * test_fraction - want[c] for c in classes}
    while sum(want.values()) < total:
        c = max(classes, key=lambda c: (rem[c], -classes.index(c)))
        want[c] += 1
        rem[c] -= 1.0
    while sum(want.values()) > total:
        c = min(classes, key=lambda c: (rem[c], classes.index(c)))
        want[c] -= 1
        rem[c] += 1.0
    rng = np.random.default_rng(seed)
    test = []
    for c in classes:
        rows = np.flatnonzero(y == c)
        test.extend(rng.choice(rows, size=min(want[c], len(rows) - 1), replace=False).tolist())
    test_mask = np.zeros(len(y), dtype=bool)
    test_mask[test] = True
    return d.subset(np.flatnonzero(~test_mask)), d.subset(np.flatnonzero(test_mask))


def _loo_accuracy(alg, hp, X, y, names, seed) -> float:
    hits, folds = 0, 0
    for i in range(len(y)):
        keep = np.arange(len(y)) != i
        try:
            m = classifiers.fit(alg, hp, X[keep], y[keep], seed, names)
        except SingleClass:
            log.info("leave-one-out fold %d skipped: single class", i)
            continue
        hits += classifiers.predict_many(m, X[i:i + 1])[0] == y[i]
        folds += 1
    return hits / folds if folds else 0.0


def loo_cv_select(alg, grid: Sequence[dict], train: LabeledDataset, target: str, seed: int = 0):
    """Grid candidate with the best leave-one-out accuracy (first wins ties).

    Returns
    -------
    (best_hp, accuracies)
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    d = train.labeled(target)
    X, y = d.X, d.labels(target)
    accs = [_loo_accuracy(alg, hp, X, y, d.feature_names, seed) for hp in grid]
    return dict(grid[int(np.argmax(accs))]), accs


@dataclass
class EvalReport:
    setting: Setting
    target: str
    config: str
    algorithm: str
    seed: int
    runs: list[Metrics]
    chosen: list[dict]
    run_ids: list[str]
    baseline: Metrics
    skipped: list[str] = field(default_factory=list)

    @property
    def mean(self) -> Metrics:
        if not self.runs:
            return Metrics(math.nan, math.nan, math.nan, math.nan)
        arr = np.array([m.as_tuple() for m in self.runs])
        return Metrics(*(float(v) for v in arr.mean(axis=0)))

    @property
    def std_accuracy(self) -> float:
        acc = [m.accuracy for m in self.runs]
        return float(np.std(acc, ddof=1)) if len(acc) > 1 else 0.0

    def to_dict(self) -> dict:
        return {"setting": self.setting.value, "target": self.target, "config": self.config,
                "algorithm": self.algorithm, "seed": self.seed,
                "runs": [dict(id=i, hyperparameters=h, **asdict(m))
                         for i, h, m in zip(self.run_ids, self.chosen, self.runs)],
                "mean": asdict(self.mean), "std_accuracy": self.std_accuracy,
                "baseline": asdict(self.baseline), "skipped": list(self.skipped)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc) -> "EvalReport":
        fields = ("precision", "recall", "f1", "accuracy")
        return cls(Setting(doc["setting"]), doc["target"], doc["config"], doc["algorithm"],
                   doc["seed"], [Metrics(*(r[f] for f in fields)) for r in doc["runs"]],
                   [r["hyperparameters"] for r in doc["runs"]], [r["id"] for r in doc["runs"]],
                   Metrics(*(doc["baseline"][f] for f in fields)), list(doc["skipped"]))


def _config_name(d: LabeledDataset) -> str:
    return d.config.value


def _fit_and_score(alg, grid, train, test, target, seed, classes):
    hp, _ = loo_cv_select(alg, grid, train, target, seed)
    m = classifiers.train(alg, hp, train, target, seed)
    pred = classifiers.predict_many(m, test.X, test.feature_names)
    return hp, compute_metrics(pred, test.labels(target), classes)


def _holdout_run(d, alg, grid, target, seed, test_fraction, classes):
    train, test = stratified_split(d, target, test_fraction, seed)
    return _fit_and_score(alg, grid, train, test, target, seed, classes)


def holdout_eval(d: LabeledDataset, alg, grid=None, target: str = "valence", runs: int = 10,
                 seed: int = 0, test_fraction: float = 0.1) -> EvalReport:
    """Repeated stratified hold-out; run ``r`` uses seed ``seed + r``.

    Every run re-selects hyperparameters by leave-one-out on its training part.
    """
    alg = AlgorithmId(alg)
    grid = list(grid or classifiers.default_grid(alg))
    d = d.labeled(target)
    if len(d) == 0:
        raise EmptyDataset(f"no {target} labels")
    classes = sorted(set(d.labels(target)))
    out = Parallel(n_jobs=n_jobs())(
        delayed(_holdout_run)(d, alg, grid, target, seed + r, test_fraction, classes)
        for r in range(runs))
    return EvalReport(Setting.HOLDOUT, target, _config_name(d), alg.value, seed,
                      [m for _, m in out], [hp for hp, _ in out],
                      [f"run{r}" for r in range(runs)], majority_baseline(d, target, classes))


def loso_folds(d: LabeledDataset):
    """``(subject, train_rows, test_rows)`` per subject, in order of first appearance."""
    for sid in d.subjects:
        test = d.subject_ids == sid
        yield sid, np.flatnonzero(~test), np.flatnonzero(test)


def _loso_fold(d, alg, grid, target, seed, sid, tr, te, classes):
    train, test = d.subset(tr), d.subset(te)
    assert not set(train.subject_ids) & set(test.subject_ids)
    if len(set(train.labels(target))) < 2:
        return sid, None
    return sid, _fit_and_score(alg, grid, train, test, target, seed, classes)


def loso_eval(d: LabeledDataset, alg, grid=None, target: str = "valence",
              seed: int = 0) -> EvalReport:
    """One fold per subject: train on everyone else, test on that subject."""
    alg = AlgorithmId(alg)
    grid = list(grid or classifiers.default_grid(alg))
    d = d.labeled(target)
    if len(d.subjects) < 2:
        raise InsufficientData("leave-one-subject-out needs at least two subjects")
    classes = sorted(set(d.labels(target)))
    out = Parallel(n_jobs=n_jobs())(
        delayed(_loso_fold)(d, alg, grid, target, seed, sid, tr, te, classes)
        for sid, tr, te in loso_folds(d))
    runs, chosen, ids, skipped = [], [], [], []
    for sid, res in out:
        if res is None:
            log.warning("fold %s skipped: training set holds one class", sid)
            skipped.append(sid)
            continue
        chosen.append(res[0])
        runs.append(res[1])
        ids.append(sid)
    return EvalReport(Setting.LOSO, target, _config_name(d), alg.value, seed, runs, chosen, ids,
                      majority_baseline(d, target, classes), skipped)


def render_table(reports: Sequence[EvalReport], fmt: str = "text") -> str:
    """Summary with one baseline row per (setting, config, target) and one row per algorithm."""
    header = ["setting", "config", "target", "algorithm", "precision", "recall", "f1",
              "accuracy", "sd_accuracy"]
    rows, seen = [], set()
    ordered = sorted(reports, key=lambda r: (r.setting.value, r.config, r.target, r.algorithm))
    for r in ordered:
        key = (r.setting.value, r.config, r.target)
        if key not in seen:
            seen.add(key)
            b = r.baseline
            rows.append([*key, "baseline", b.precision, b.recall, b.f1, b.accuracy, ""])
        m = r.mean
        rows.append([*key, r.algorithm, m.precision, m.recall, m.f1, m.accuracy, r.std_accuracy])
    cells = [[c if isinstance(c, str) else f"{c:.2f}" for c in row] for row in rows]
    if fmt == "csv":
        return "\n".join(",".join(r) for r in [header] + cells) + "\n"
    widths = [max(len(x) for x in col) for col in zip(header, *cells)]
    lines = ["  ".join(x.ljust(w) for x, w in zip(row, widths)).rstrip()
             for row in [header] + cells]
    return "\n".join(lines) + "\n"
