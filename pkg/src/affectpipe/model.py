"""Domain types shared across the pipeline and structural validation of sessions."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

BASELINE_MS = 30_000
WINDOW_MS = 10_000
NOMINAL_INTERRUPTIONS = 6
N_ELICITATION = 16


class SignalKind(str, enum.Enum):
    EEG_RAW = "eeg_raw"
    ATTENTION = "attention"
    MEDITATION = "meditation"
    EDA = "eda"
    BVP = "bvp"
    HR = "hr"

    @property
    def nominal_rate_hz(self) -> float:
        return _NOMINAL_RATES[self]

    @classmethod
    def parse(cls, name: str) -> "SignalKind":
        key = name.strip().lower().replace("-", "_")
        aliases = {"eegraw": "eeg_raw", "eeg": "eeg_raw"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown signal kind {name!r}") from None


_NOMINAL_RATES = {
    SignalKind.EEG_RAW: 512.0,
    SignalKind.ATTENTION: 1.0,
    SignalKind.MEDITATION: 1.0,
    SignalKind.EDA: 4.0,
    SignalKind.BVP: 64.0,
    SignalKind.HR: 1.0,
}

# canonical kind order, used wherever reports must be deterministic
KIND_ORDER = tuple(SignalKind)


class SensorConfig(str, enum.Enum):
    FULL_SET = "full"
    EMPATICA_ONLY = "empatica"
    BRAINLINK_ONLY = "brainlink"

    @property
    def kinds(self) -> tuple[SignalKind, ...]:
        if self is SensorConfig.EMPATICA_ONLY:
            return EMPATICA_KINDS
        if self is SensorConfig.BRAINLINK_ONLY:
            return BRAINLINK_KINDS
        return BRAINLINK_KINDS + EMPATICA_KINDS

    @classmethod
    def parse(cls, name: str) -> "SensorConfig":
        key = name.strip().lower()
        aliases = {"fullset": "full", "full_set": "full", "empaticaonly": "empatica",
                   "brainlinkonly": "brainlink"}
        return cls(aliases.get(key, key))


BRAINLINK_KINDS = (SignalKind.EEG_RAW, SignalKind.ATTENTION, SignalKind.MEDITATION)
# Hr may be derived from Bvp, so it is not strictly required (see required_kinds)
EMPATICA_KINDS = (SignalKind.EDA, SignalKind.BVP, SignalKind.HR)


def required_kinds(config: SensorConfig) -> tuple[SignalKind, ...]:
    """Kinds a session must carry for ``config``. Hr can be derived from Bvp."""
    return tuple(k for k in config.kinds if k is not SignalKind.HR)


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SignalTrace:
    """One sensor channel.

    ``timestamps_ms`` holds the epoch-millisecond time of every sample. When
    omitted, a uniform grid ``start_ms + i * 1000 / rate`` is assumed. ``gaps``
    lists ``(t0, t1)`` intervals where the recording was interrupted for more
    than two sample periods.
    """

    kind: SignalKind
    sample_rate_hz: float
    start_ms: float
    samples: np.ndarray
    timestamps_ms: np.ndarray | None = None
    gaps: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", SignalKind(self.kind))
        object.__setattr__(self, "samples", _frozen_array(self.samples))
        if self.timestamps_ms is None:
            ts = self.start_ms + np.arange(len(self.samples)) * (1000.0 / self.sample_rate_hz)
        else:
            ts = self.timestamps_ms
        object.__setattr__(self, "timestamps_ms", _frozen_array(ts))
        if len(self.timestamps_ms) != len(self.samples):
            raise ValueError("timestamps_ms and samples differ in length")
        object.__setattr__(self, "gaps", tuple((float(a), float(b)) for a, b in self.gaps))

    @property
    def end_ms(self) -> float:
        """Time just past the last sample."""
        if len(self.samples) == 0:
            return self.start_ms
        return float(self.timestamps_ms[-1]) + 1000.0 / self.sample_rate_hz

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.sample_rate_hz

    def covers(self, t0: float, t1: float) -> bool:
        """True when ``[t0, t1)`` lies inside the recording and touches no gap."""
        if len(self.samples) == 0:
            return False
        tol = 0.5 * self.period_ms
        if t0 < self.timestamps_ms[0] - tol or t1 > self.end_ms + tol:
            return False
        return not self.gap_overlaps(t0, t1)

    def gap_overlaps(self, t0: float, t1: float) -> bool:
        return any(g0 < t1 and g1 > t0 for g0, g1 in self.gaps)


@dataclass(frozen=True)
class SamRating:
    valence: int
    arousal: int
    progress: int
    t_ms: float


@dataclass(frozen=True, eq=False)
class SessionRecord:
    subject_id: str
    traces: Mapping[SignalKind, SignalTrace]
    baseline_interval: tuple[float, float]
    interruptions: tuple[SamRating, ...]
    elicitation_ratings: tuple[tuple[int, int], ...]

    def __post_init__(self):
        traces = {SignalKind(k): v for k, v in dict(self.traces).items()}
        object.__setattr__(self, "traces", dict(sorted(traces.items(),
                                                       key=lambda kv: KIND_ORDER.index(kv[0]))))
        object.__setattr__(self, "baseline_interval",
                           (float(self.baseline_interval[0]), float(self.baseline_interval[1])))
        object.__setattr__(self, "interruptions", tuple(self.interruptions))
        object.__setattr__(self, "elicitation_ratings",
                           tuple((int(v), int(a)) for v, a in self.elicitation_ratings))

    @property
    def kinds(self) -> tuple[SignalKind, ...]:
        return tuple(self.traces)

    @property
    def task_interval(self) -> tuple[float, float]:
        """From the end of the baseline to the last interruption."""
        end = self.interruptions[-1].t_ms if self.interruptions else self.baseline_interval[1]
        return self.baseline_interval[1], float(end)


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    value: object

    def __str__(self):
        return f"{self.field}: {self.rule} (got {self.value!r})"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()
    warnings: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return bool(self.violations)

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


def _in_range(x, lo, hi) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool) and lo <= x <= hi


def validate_session(s: SessionRecord, config: SensorConfig | None = None,
                     window_ms: float = WINDOW_MS) -> ValidationReport:
    """Check every structural invariant of a session.

    Violations are returned, never raised. They are ordered by field (the
    dataclass field order) and, within a field, by time. A session whose
    interruption count differs from the nominal six gets a warning only.

    Parameters
    ----------
    s : SessionRecord
    config : SensorConfig, optional
        When given, every kind the configuration needs must be present.
    window_ms : float
        Length of the observation window that must precede each interruption.
    """
    out: list[Violation] = []
    warn: list[Violation] = []

    if not str(s.subject_id):
        out.append(Violation("subject_id", "non-empty", s.subject_id))

    # traces
    if config is not None:
        for kind in required_kinds(config):
            if kind not in s.traces:
                out.append(Violation("traces", f"missing kind {_kind_label(kind)}", None))
    for kind, tr in s.traces.items():
        name = f"traces[{kind.value}]"
        if tr.kind is not kind:
            out.append(Violation(name, "kind matches key", tr.kind.value))
        if not tr.sample_rate_hz > 0:
            out.append(Violation(name, "sample_rate_hz > 0", tr.sample_rate_hz))
        if len(tr.samples) == 0:
            out.append(Violation(name, "samples non-empty", 0))
        elif not np.all(np.isfinite(tr.samples)):
            out.append(Violation(name, "samples finite", int(np.sum(~np.isfinite(tr.samples)))))
        elif len(tr.timestamps_ms) > 1 and np.any(np.diff(tr.timestamps_ms) <= 0):
            out.append(Violation(name, "timestamps strictly increasing", None))

    # baseline
    b0, b1 = s.baseline_interval
    if abs((b1 - b0) - BASELINE_MS) > 1e-6:
        out.append(Violation("baseline_interval", f"length {BASELINE_MS} ms", b1 - b0))
    if s.interruptions and b1 > min(r.t_ms for r in s.interruptions):
        out.append(Violation("baseline_interval", "precedes first interruption", (b0, b1)))
    for kind, tr in s.traces.items():
        if len(tr.samples) and not tr.covers(b0, b1):
            out.append(Violation("baseline_interval", f"covered by {kind.value} trace", (b0, b1)))

    # interruptions
    times = [r.t_ms for r in s.interruptions]
    if len(s.interruptions) != NOMINAL_INTERRUPTIONS:
        warn.append(Violation("interruptions", f"nominally {NOMINAL_INTERRUPTIONS}",
                              len(s.interruptions)))
    if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
        out.append(Violation("interruptions", "sorted by time", times))
    for i, r in enumerate(s.interruptions):
        name = f"interruptions[{i}]"
        if not _in_range(r.valence, 1, 9):
            out.append(Violation(name, "valence in 1..9", r.valence))
        if not _in_range(r.arousal, 1, 9):
            out.append(Violation(name, "arousal in 1..9", r.arousal))
        if not _in_range(r.progress, 1, 5):
            out.append(Violation(name, "progress in 1..5", r.progress))
        for kind, tr in s.traces.items():
            if len(tr.samples) == 0:
                continue
            t0 = r.t_ms - window_ms
            tol = 0.5 * tr.period_ms
            if t0 < tr.timestamps_ms[0] - tol or r.t_ms > tr.end_ms + tol:
                out.append(Violation(name, f"insufficient pre-interruption data ({kind.value})",
                                     r.t_ms))
            elif tr.gap_overlaps(t0, r.t_ms):
                out.append(Violation(name, f"gap in pre-interruption window ({kind.value})",
                                     r.t_ms))

    # elicitation
    if len(s.elicitation_ratings) != N_ELICITATION:
        out.append(Violation("elicitation_ratings", f"exactly {N_ELICITATION} pairs",
                             len(s.elicitation_ratings)))
    for i, (v, a) in enumerate(s.elicitation_ratings):
        if not (1 <= v <= 9 and 1 <= a <= 9):
            out.append(Violation(f"elicitation_ratings[{i}]", "ratings in 1..9", (v, a)))

    for w in warn:
        log.warning("session %s: %s", s.subject_id, w)
    return ValidationReport(tuple(out), tuple(warn))


def _kind_label(kind: SignalKind) -> str:
    return {"eeg_raw": "EegRaw", "eda": "Eda", "bvp": "Bvp", "hr": "Hr",
            "attention": "Attention", "meditation": "Meditation"}[kind.value]
