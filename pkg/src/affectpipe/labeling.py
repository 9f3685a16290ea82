"""Gold valence/arousal labels from self-assessment scores."""

from __future__ import annotations

import csv
import enum
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (MissingProfile, OutOfRange, ParseError, UnresolvedAmbiguity, WrongCount)
from .model import N_ELICITATION, SessionRecord

log = logging.getLogger(__name__)

AMBIGUITY_BAND = 0.5


class Valence(str, enum.Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"


class Arousal(str, enum.Enum):
    HIGH = "High"
    LOW = "Low"


class Resolution(str, enum.Enum):
    AUTOMATIC = "Automatic"
    MANUAL_OVERRIDE = "ManualOverride"


TARGETS = ("valence", "arousal")
LABELS = {"valence": (Valence.NEGATIVE.value, Valence.POSITIVE.value),
          "arousal": (Arousal.HIGH.value, Arousal.LOW.value)}


@dataclass(frozen=True)
class ElicitationProfile:
    subject_id: str
    mean_valence: float
    mean_arousal: float


@dataclass(frozen=True)
class GoldLabel:
    valence: Valence
    arousal: Arousal
    ambiguous_valence: bool
    ambiguous_arousal: bool
    resolution: Resolution = Resolution.AUTOMATIC

    @property
    def unresolved(self) -> bool:
        return (self.ambiguous_valence or self.ambiguous_arousal) and \
            self.resolution is not Resolution.MANUAL_OVERRIDE


def elicitation_means(ratings: Sequence[tuple[int, int]], subject_id: str = "") -> ElicitationProfile:
    """Per-dimension mean of the sixteen elicitation ratings."""
    if len(ratings) != N_ELICITATION:
        raise WrongCount(f"expected {N_ELICITATION} elicitation pairs, got {len(ratings)}")
    arr = np.asarray(ratings, dtype=float).reshape(-1, 2)
    if arr.min() < 1 or arr.max() > 9 or np.any(arr != np.round(arr)):
        raise OutOfRange("elicitation ratings must be integers in 1..9")
    return ElicitationProfile(subject_id, float(arr[:, 0].mean()), float(arr[:, 1].mean()))


def pooled_profile(profiles: Sequence[ElicitationProfile]) -> ElicitationProfile:
    """A single global profile, for the pooled-mean variant of the adjustment."""
    return ElicitationProfile("*", float(np.mean([p.mean_valence for p in profiles])),
                              float(np.mean([p.mean_arousal for p in profiles])))


def discretize(score: int, mean: float, dimension: str = "valence"):
    """Binary label of a 1-9 score against a subject mean.

    Scores equal to the mean fall on the Negative/Low side; every score within
    0.5 of the mean (inclusive) is flagged ambiguous.

    Returns
    -------
    (label, ambiguous)
    """
    if not 1 <= score <= 9:
        raise OutOfRange(f"score {score} outside 1..9")
    if dimension == "valence":
        label = Valence.POSITIVE if score > mean else Valence.NEGATIVE
    elif dimension == "arousal":
        label = Arousal.HIGH if score > mean else Arousal.LOW
    else:
        raise ValueError(f"unknown dimension {dimension!r}")
    # tolerance keeps decimal means such as 4.7 on the inclusive side of the band
    return label, bool(abs(score - mean) <= AMBIGUITY_BAND + 1e-9)


@dataclass(frozen=True)
class GoldStandard:
    """Labels per ``(subject_id, obs_idx)`` plus bookkeeping."""

    labels: Mapping[tuple[str, int], GoldLabel]
    unresolved: tuple[tuple[str, int], ...]

    def counts(self) -> dict[str, dict[str, int]]:
        val = Counter(g.valence.value for g in self.labels.values())
        aro = Counter(g.arousal.value for g in self.labels.values())
        return {"valence": {k: val.get(k, 0) for k in (Valence.POSITIVE.value, Valence.NEGATIVE.value)},
                "arousal": {k: aro.get(k, 0) for k in (Arousal.HIGH.value, Arousal.LOW.value)}}

    def ambiguous_counts(self) -> dict[str, int]:
        return {"valence": sum(g.ambiguous_valence for g in self.labels.values()),
                "arousal": sum(g.ambiguous_arousal for g in self.labels.values())}


def build_gold(sessions: Sequence[SessionRecord],
               profiles: Mapping[str, ElicitationProfile] | None = None,
               overrides: Mapping[tuple[str, int], tuple[str, str]] | None = None,
               strict: bool = False, pooled: bool = False) -> GoldStandard:
    """One gold label per interruption of every session.

    Parameters
    ----------
    profiles : mapping subject_id -> ElicitationProfile, optional
        Computed from each session's elicitation ratings when omitted.
    overrides : mapping (subject_id, obs_idx) -> (valence_label, arousal_label)
        Manually assigned labels; they replace the automatic ones and resolve
        any ambiguity.
    strict : bool
        Raise ``UnresolvedAmbiguity`` if an ambiguous instance has no override.
    pooled : bool
        Threshold every subject at the mean over all subjects instead of
        their own.
    """
    overrides = dict(overrides or {})
    if profiles is None:
        profiles = {s.subject_id: elicitation_means(s.elicitation_ratings, s.subject_id)
                    for s in sessions}
    if pooled:
        glob = pooled_profile([profiles[s.subject_id] for s in sessions if s.subject_id in profiles])
        profiles = {s.subject_id: glob for s in sessions}

    labels: dict[tuple[str, int], GoldLabel] = {}
    unresolved = []
    for s in sessions:
        if s.subject_id not in profiles:
            raise MissingProfile(f"no elicitation profile for subject {s.subject_id}")
        prof = profiles[s.subject_id]
        for i, r in enumerate(s.interruptions):
            key = (s.subject_id, i)
            v, av = discretize(r.valence, prof.mean_valence, "valence")
            a, aa = discretize(r.arousal, prof.mean_arousal, "arousal")
            if key in overrides:
                ov, oa = overrides[key]
                gold = GoldLabel(Valence(ov), Arousal(oa), av, aa, Resolution.MANUAL_OVERRIDE)
            else:
                gold = GoldLabel(v, a, av, aa)
            if gold.unresolved:
                unresolved.append(key)
            labels[key] = gold
    unknown = sorted(set(overrides) - set(labels))
    if unknown:
        log.warning("overrides refer to unknown observations: %s", unknown)
    if unresolved and strict:
        raise UnresolvedAmbiguity(f"{len(unresolved)} ambiguous observations lack a manual label",
                                  unresolved)
    if unresolved:
        log.info("%d ambiguous observations kept with their automatic label", len(unresolved))
    return GoldStandard(labels, tuple(unresolved))


OVERRIDE_COLUMNS = ("subject_id", "obs_idx", "valence_label", "arousal_label")


def load_overrides(path) -> dict[tuple[str, int], tuple[str, str]]:
    path = Path(path)
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != OVERRIDE_COLUMNS:
            raise ParseError(f"header must be {','.join(OVERRIDE_COLUMNS)}", path, 1)
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError("expected 4 columns", path, row_no)
            sid, idx, v, a = (c.strip() for c in row)
            try:
                out[(sid, int(idx))] = (Valence(v).value, Arousal(a).value)
            except ValueError as exc:
                raise ParseError(str(exc), path, row_no) from None
    return out


def store_overrides(overrides: Mapping[tuple[str, int], tuple[str, str]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OVERRIDE_COLUMNS)
        for (sid, idx), (v, a) in sorted(overrides.items()):
            w.writerow([sid, idx, v, a])
