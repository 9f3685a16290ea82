"""Per-observation feature vectors for each sensor configuration."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import dsp
from .dsp import DEFAULT_BANDS, BaselineStats, Segment
from .eda import EdaDecomposition, EdaParams, cvxeda_decompose, phasic_auc
from .errors import GapInWindow, InsufficientData, MissingKind, TooShort
from .model import (SensorConfig, SessionRecord, SignalKind, SignalTrace, WINDOW_MS,
                    required_kinds)

log = logging.getLogger(__name__)

BAND_NAMES = tuple(sorted(b.name for b in DEFAULT_BANDS))
EEG_POWER_FEATURES = tuple(f"eeg_{b}" for b in BAND_NAMES)
EEG_RATIO_FEATURES = tuple(f"eeg_ratio_{a}_{b}" for a, b in itertools.combinations(BAND_NAMES, 2))
ATTENTION_FEATURES = ("attention_min", "attention_max", "attention_mean_diff")
MEDITATION_FEATURES = ("meditation_min", "meditation_max", "meditation_mean_diff")
EDA_FEATURES = ("eda_mean_tonic", "eda_phasic_auc", "eda_phasic_min_peak",
                "eda_phasic_max_peak", "eda_phasic_sum_peaks")
BVP_FEATURES = ("bvp_min_peak", "bvp_max_peak", "bvp_sum_peaks", "bvp_mean_peak_amp_diff")
HR_FEATURES = ("hr_mean_diff", "hr_variance_diff")

_BRAINLINK = EEG_POWER_FEATURES + EEG_RATIO_FEATURES + ATTENTION_FEATURES + MEDITATION_FEATURES
_EMPATICA = EDA_FEATURES + BVP_FEATURES + HR_FEATURES

PHASIC_MIN_AMP = 0.01
RATIO_GUARD = 1e-12


def feature_names(config: SensorConfig = SensorConfig.FULL_SET) -> tuple[str, ...]:
    config = SensorConfig(config)
    if config is SensorConfig.EMPATICA_ONLY:
        return _EMPATICA
    if config is SensorConfig.BRAINLINK_ONLY:
        return _BRAINLINK
    return _BRAINLINK + _EMPATICA


@dataclass(frozen=True, eq=False)
class ObservationWindow:
    """Baseline-normalized segments of every channel for one observation.

    ``eda`` optionally carries the slice of a cvxEDA decomposition computed on
    a longer stretch of the trace; without it the EDA segment is decomposed on
    its own.
    """

    subject_id: str
    obs_idx: int
    segments: Mapping[SignalKind, Segment]
    eda: EdaDecomposition | None = None

    def get(self, kind: SignalKind) -> Segment:
        try:
            return self.segments[kind]
        except KeyError:
            raise MissingKind(f"observation {self.subject_id}/{self.obs_idx} has no "
                              f"{kind.value} data") from None


@dataclass(frozen=True)
class FeatureVector:
    subject_id: str
    obs_idx: int
    config: SensorConfig
    values: Mapping[str, float]
    flags: frozenset = field(default_factory=frozenset)

    def array(self) -> np.ndarray:
        return np.array(list(self.values.values()), dtype=float)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.values)


def _peak_stats(amps):
    if len(amps) == 0:
        return 0.0, 0.0, 0.0, True
    a = np.asarray(amps, dtype=float)
    return float(a.min()), float(a.max()), float(a.sum()), False


def _pulse_amplitudes(seg: Segment) -> np.ndarray:
    return np.array([a for _, a in dsp.pulse_peaks(seg)], dtype=float)


def _heart_rate(win: ObservationWindow) -> np.ndarray:
    if SignalKind.HR in win.segments:
        return win.segments[SignalKind.HR].samples
    hr = dsp.derive_hr(win.get(SignalKind.BVP))
    return hr.samples[hr.mask] if hr.mask is not None and hr.mask.any() else hr.samples


def _eda_decomposition(win: ObservationWindow, params: EdaParams) -> EdaDecomposition:
    if win.eda is not None:
        return win.eda
    return cvxeda_decompose(win.get(SignalKind.EDA), params)


def extract_features(task_win: ObservationWindow, baseline_win: ObservationWindow,
                     config: SensorConfig = SensorConfig.FULL_SET,
                     eda_params: EdaParams | None = None) -> FeatureVector:
    """Compute the feature vector of one observation.

    Differences are always oriented baseline minus task. Features that cannot
    be computed (no peaks in the window, a vanishing ratio denominator, a
    non-finite value) are set to 0 and listed in ``flags``.
    """
    config = SensorConfig(config)
    names = feature_names(config)
    wanted = set(names)
    vals: dict[str, float] = {}
    flags: set[str] = set()

    if wanted & set(EEG_POWER_FEATURES):
        powers = dsp.band_powers(task_win.get(SignalKind.EEG_RAW))
        for b in BAND_NAMES:
            vals[f"eeg_{b}"] = powers[b]
        for a, b in itertools.combinations(BAND_NAMES, 2):
            key = f"eeg_ratio_{a}_{b}"
            if powers[b] < RATIO_GUARD:
                vals[key] = 0.0
                flags.add(key)
            else:
                vals[key] = powers[a] / powers[b]

    for kind, prefix in ((SignalKind.ATTENTION, "attention"), (SignalKind.MEDITATION, "meditation")):
        if f"{prefix}_min" not in wanted:
            continue
        task = task_win.get(kind).samples
        base = baseline_win.get(kind).samples
        vals[f"{prefix}_min"] = float(task.min())
        vals[f"{prefix}_max"] = float(task.max())
        vals[f"{prefix}_mean_diff"] = float(base.mean() - task.mean())

    if "eda_mean_tonic" in wanted:
        dec = _eda_decomposition(task_win, eda_params or EdaParams())
        peaks = dsp.detect_peaks(np.asarray(dec.phasic), min_amp=PHASIC_MIN_AMP)
        lo, hi, total, empty = _peak_stats([a for _, a in peaks])
        vals["eda_mean_tonic"] = float(np.mean(dec.tonic))
        vals["eda_phasic_auc"] = phasic_auc(dec)
        vals["eda_phasic_min_peak"] = lo
        vals["eda_phasic_max_peak"] = hi
        vals["eda_phasic_sum_peaks"] = total
        if empty:
            flags.update(("eda_phasic_min_peak", "eda_phasic_max_peak", "eda_phasic_sum_peaks"))

    if "bvp_min_peak" in wanted:
        task_amps = _pulse_amplitudes(task_win.get(SignalKind.BVP))
        base_amps = _pulse_amplitudes(baseline_win.get(SignalKind.BVP))
        lo, hi, total, empty = _peak_stats(task_amps)
        vals["bvp_min_peak"] = lo
        vals["bvp_max_peak"] = hi
        vals["bvp_sum_peaks"] = total
        if empty:
            flags.update(("bvp_min_peak", "bvp_max_peak", "bvp_sum_peaks"))
        if len(task_amps) and len(base_amps):
            vals["bvp_mean_peak_amp_diff"] = float(base_amps.mean() - task_amps.mean())
        else:
            vals["bvp_mean_peak_amp_diff"] = 0.0
            flags.add("bvp_mean_peak_amp_diff")

    if "hr_mean_diff" in wanted:
        task = _heart_rate(task_win)
        base = _heart_rate(baseline_win)
        vals["hr_mean_diff"] = float(base.mean() - task.mean())
        vals["hr_variance_diff"] = float(base.var() - task.var())

    ordered = {}
    for name in names:
        v = vals[name]
        if not np.isfinite(v):
            v = 0.0
            flags.add(name)
        ordered[name] = v
    return FeatureVector(task_win.subject_id, task_win.obs_idx, config, ordered, frozenset(flags))


def _contiguous_runs(trace: SignalTrace, t0: float, t1: float) -> list[tuple[float, float]]:
    """Gap-free sub-intervals of ``[t0, t1)``."""
    runs, start = [], t0
    for g0, g1 in sorted(trace.gaps):
        if g1 <= start or g0 >= t1:
            continue
        if g0 > start:
            runs.append((start, g0))
        start = max(start, g1)
    if start < t1:
        runs.append((start, t1))
    return runs


def _eda_slices(trace: SignalTrace, windows: Sequence[tuple[float, float]], span,
                params: EdaParams) -> list[EdaDecomposition | None]:
    """Decompose each gap-free run of the task span once and slice out the windows."""
    cache: dict[tuple[float, float], EdaDecomposition] = {}
    out = []
    period = trace.period_ms
    ts = trace.timestamps_ms
    for w0, w1 in windows:
        run = next((r for r in _contiguous_runs(trace, *span) if r[0] <= w0 + 0.5 * period
                    and w1 <= r[1] + 0.5 * period), None)
        if run is None:
            out.append(None)
            continue
        if run not in cache:
            seg = dsp.extract_window(trace, run[1], run[1] - run[0])
            cache[run] = cvxeda_decompose(seg, params)
        dec = cache[run]
        r_lo = np.searchsorted(ts, run[0] - 1e-6)
        lo = np.searchsorted(ts, w0 - 1e-6) - r_lo
        hi = np.searchsorted(ts, w1 - 1e-6) - r_lo
        out.append(dec.slice(int(lo), int(hi)))
    return out


def session_windows(s: SessionRecord, config: SensorConfig = SensorConfig.FULL_SET,
                    eda_scope: str = "trace", eda_params: EdaParams | None = None,
                    window_ms: float = WINDOW_MS, stats: BaselineStats | None = None):
    """Normalized baseline window and one task window per interruption.

    Parameters
    ----------
    eda_scope : {"trace", "window"}
        ``"trace"`` decomposes the normalized EDA over the whole task once
        (per gap-free run) and slices each window out of it; ``"window"``
        decomposes every 10 s window separately.

    Returns
    -------
    baseline : ObservationWindow
    task : list of ObservationWindow
    """
    config = SensorConfig(config)
    missing = [k for k in required_kinds(config) if k not in s.traces]
    if missing:
        raise MissingKind(f"subject {s.subject_id} lacks {', '.join(k.value for k in missing)}")
    kinds = [k for k in config.kinds if k in s.traces]
    params = eda_params or EdaParams()
    stats = stats or dsp.baseline_stats(s, kinds)
    b0, b1 = s.baseline_interval

    base_segs = {k: dsp.zscore_normalize(dsp.extract_window(s.traces[k], b1, b1 - b0), stats)
                 for k in kinds}
    baseline = ObservationWindow(s.subject_id, -1, base_segs)

    bounds = [(r.t_ms - window_ms, r.t_ms) for r in s.interruptions]
    eda = [None] * len(bounds)
    if SignalKind.EDA in kinds and eda_scope == "trace" and bounds:
        norm = dsp.normalize_trace(s.traces[SignalKind.EDA], stats)
        span = (min(b1, bounds[0][0]), bounds[-1][1])
        eda = _eda_slices(norm, bounds, span, params)
    elif eda_scope not in ("trace", "window"):
        raise ValueError(f"eda_scope must be 'trace' or 'window', got {eda_scope!r}")

    task = []
    for i, (r, (w0, w1)) in enumerate(zip(s.interruptions, bounds)):
        segs = {k: dsp.zscore_normalize(dsp.extract_window(s.traces[k], w1, w1 - w0), stats)
                for k in kinds}
        task.append(ObservationWindow(s.subject_id, i, segs, eda[i]))
    return baseline, task


def session_features(s: SessionRecord, config: SensorConfig = SensorConfig.FULL_SET,
                     eda_scope: str = "trace", eda_params: EdaParams | None = None
                     ) -> list[FeatureVector]:
    baseline, task = session_windows(s, config, eda_scope, eda_params)
    return [extract_features(w, baseline, config, eda_params) for w in task]
