"""The labeled feature matrix shared by ingest, classifiers and evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SchemaMismatch
from .features import FeatureVector, feature_names
from .labeling import GoldStandard
from .model import SensorConfig


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Rows are observations ``(subject_id, obs_idx)``.

    Label columns hold class names (``"Positive"``/``"Negative"``,
    ``"High"``/``"Low"``) or ``""`` where no label is known yet.
    """

    subject_ids: np.ndarray
    obs_idx: np.ndarray
    feature_names: tuple[str, ...]
    X: np.ndarray
    valence: np.ndarray
    arousal: np.ndarray

    def __post_init__(self):
        n = len(self.subject_ids)
        object.__setattr__(self, "subject_ids", _frozen(self.subject_ids, dtype=object))
        object.__setattr__(self, "obs_idx", _frozen(self.obs_idx, dtype=np.int64))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        X = np.array(self.X, dtype=float).reshape(n, len(self.feature_names))
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        for name in ("valence", "arousal"):
            col = getattr(self, name)
            if col is None:
                col = [""] * n
            object.__setattr__(self, name, _frozen(col, dtype=object))
        if not (len(self.obs_idx) == len(self.valence) == len(self.arousal) == n):
            raise ValueError("column lengths differ")

    def __len__(self):
        return len(self.subject_ids)

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (self.feature_names == other.feature_names
                and np.array_equal(self.subject_ids, other.subject_ids)
                and np.array_equal(self.obs_idx, other.obs_idx)
                and np.array_equal(self.X, other.X)
                and np.array_equal(self.valence, other.valence)
                and np.array_equal(self.arousal, other.arousal))

    @property
    def config(self) -> SensorConfig:
        for c in SensorConfig:
            if feature_names(c) == self.feature_names:
                return c
        raise SchemaMismatch("feature columns match no sensor configuration")

    @property
    def subjects(self) -> tuple[str, ...]:
        """Distinct subjects in order of first appearance."""
        return tuple(dict.fromkeys(self.subject_ids))

    def labels(self, target: str) -> np.ndarray:
        if target not in ("valence", "arousal"):
            raise ValueError(f"target must be valence or arousal, got {target!r}")
        return getattr(self, target)

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows)
        return LabeledDataset(self.subject_ids[rows], self.obs_idx[rows], self.feature_names,
                              self.X[rows], self.valence[rows], self.arousal[rows])

    def project(self, config: SensorConfig) -> "LabeledDataset":
        """Keep only the columns of ``config`` (which must be a subset)."""
        names = feature_names(config)
        try:
            cols = [self.feature_names.index(n) for n in names]
        except ValueError:
            raise SchemaMismatch(f"dataset lacks features of {SensorConfig(config).value}") from None
        return LabeledDataset(self.subject_ids, self.obs_idx, names, self.X[:, cols],
                              self.valence, self.arousal)

    def with_labels(self, gold: GoldStandard) -> "LabeledDataset":
        val, aro = [], []
        for sid, idx in zip(self.subject_ids, self.obs_idx):
            g = gold.labels.get((sid, int(idx)))
            val.append(g.valence.value if g else "")
            aro.append(g.arousal.value if g else "")
        return LabeledDataset(self.subject_ids, self.obs_idx, self.feature_names, self.X, val, aro)

    def labeled(self, target: str) -> "LabeledDataset":
        """Rows that carry a label for ``target``."""
        return self.subset(np.flatnonzero(self.labels(target) != ""))

    @classmethod
    def empty(cls, config: SensorConfig = SensorConfig.FULL_SET) -> "LabeledDataset":
        names = feature_names(config)
        return cls([], [], names, np.empty((0, len(names))), [], [])


def from_features(vectors: Sequence[FeatureVector], gold: GoldStandard | None = None,
                  config: SensorConfig | None = None) -> LabeledDataset:
    """Stack feature vectors (all of one configuration) into a dataset."""
    if not vectors:
        return LabeledDataset.empty(config or SensorConfig.FULL_SET)
    names = vectors[0].names
    for v in vectors:
        if v.names != names:
            raise SchemaMismatch(f"feature vector {v.subject_id}/{v.obs_idx} has a different schema")
    d = LabeledDataset([v.subject_id for v in vectors], [v.obs_idx for v in vectors], names,
                       np.vstack([v.array() for v in vectors]), None, None)
    return d.with_labels(gold) if gold is not None else d
