"""Windowing, baseline normalization, EEG band powers, peak detection and heart rate."""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import signal as sps

from .errors import GapInWindow, InsufficientData, MissingBaseline, NoBeatsDetected, TooShort
from .model import SessionRecord, SignalKind, SignalTrace, WINDOW_MS

log = logging.getLogger(__name__)

_EPS_MS = 1e-6


@dataclass(frozen=True)
class BandSpec:
    name: str
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not 0 <= self.low_hz < self.high_hz:
            raise ValueError(f"band {self.name}: need 0 <= low < high, got "
                             f"[{self.low_hz}, {self.high_hz})")

    @property
    def center_hz(self) -> float:
        return 0.5 * (self.low_hz + self.high_hz)


# theta/alpha overlap in the published edges is resolved into contiguous bands
DEFAULT_BANDS = (
    BandSpec("delta", 0.5, 4.0),
    BandSpec("theta", 4.0, 7.5),
    BandSpec("alpha", 7.5, 12.5),
    BandSpec("beta", 12.5, 30.0),
    BandSpec("gamma", 30.0, 45.0),
)


@dataclass(frozen=True, eq=False)
class Segment:
    """A contiguous run of samples cut from one trace.

    ``mask`` marks samples that are physiologically plausible; it is only set
    by :func:`derive_hr`.
    """

    kind: SignalKind
    sample_rate_hz: float
    samples: np.ndarray
    interval: tuple[float, float]
    mask: np.ndarray | None = None

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "kind", SignalKind(self.kind))

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def replace(self, samples) -> "Segment":
        return Segment(self.kind, self.sample_rate_hz, samples, self.interval)


@dataclass(frozen=True)
class BaselineStats:
    mean: Mapping[SignalKind, float]
    std: Mapping[SignalKind, float]

    @property
    def degenerate(self) -> frozenset:
        return frozenset(k for k, s in self.std.items() if s == 0)


def extract_window(t: SignalTrace, t_end_ms: float, duration_ms: float = WINDOW_MS) -> Segment:
    """Samples of ``t`` with timestamps in ``[t_end - duration, t_end)``."""
    t_start = t_end_ms - duration_ms
    ts = t.timestamps_ms
    tol = 0.5 * t.period_ms
    if len(ts) == 0 or t_start < ts[0] - tol or t_end_ms > t.end_ms + tol:
        raise InsufficientData(
            f"{t.kind.value} trace does not cover [{t_start:.0f}, {t_end_ms:.0f}) ms")
    if t.gap_overlaps(t_start, t_end_ms):
        raise GapInWindow(f"{t.kind.value} trace has a gap inside [{t_start:.0f}, {t_end_ms:.0f}) ms")
    lo = np.searchsorted(ts, t_start - _EPS_MS, side="left")
    hi = np.searchsorted(ts, t_end_ms - _EPS_MS, side="left")
    return Segment(t.kind, t.sample_rate_hz, t.samples[lo:hi], (t_start, t_end_ms))


def baseline_stats(s: SessionRecord, kinds: Sequence[SignalKind] | None = None) -> BaselineStats:
    """Population mean and standard deviation of each trace over the baseline interval."""
    b0, b1 = s.baseline_interval
    means, stds = {}, {}
    for kind in (kinds or s.kinds):
        tr = s.traces[kind]
        seg = extract_window(tr, b1, b1 - b0)
        if len(seg) == 0:
            raise InsufficientData(f"no {kind.value} samples in the baseline interval")
        x = seg.samples
        means[kind] = float(np.mean(x))
        stds[kind] = float(np.std(x))
        if stds[kind] == 0:
            log.warning("subject %s: degenerate baseline for %s", s.subject_id, kind.value)
    return BaselineStats(means, stds)


def _stats_for(kind, b: BaselineStats):
    if kind not in b.mean:
        raise MissingBaseline(f"no baseline statistics for {kind.value}")
    return b.mean[kind], b.std[kind]


def zscore_normalize(seg: Segment, b: BaselineStats) -> Segment:
    """Z-score ``seg`` against its baseline.

    A degenerate (zero) baseline standard deviation falls back to plain mean
    subtraction.
    """
    mean, std = _stats_for(seg.kind, b)
    out = seg.samples - mean
    if std > 0:
        out = out / std
    return seg.replace(out)


def zscore_denormalize(seg: Segment, b: BaselineStats) -> Segment:
    mean, std = _stats_for(seg.kind, b)
    out = seg.samples * std if std > 0 else seg.samples
    return seg.replace(out + mean)


def normalize_trace(t: SignalTrace, b: BaselineStats) -> SignalTrace:
    """Whole-trace version of :func:`zscore_normalize`."""
    mean, std = _stats_for(t.kind, b)
    out = t.samples - mean
    if std > 0:
        out = out / std
    return SignalTrace(t.kind, t.sample_rate_hz, t.start_ms, out, t.timestamps_ms, t.gaps)


def band_filter(x, rate_hz: float, band: BandSpec, order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth band-pass (low-pass when the band starts at 0)."""
    nyq = 0.5 * rate_hz
    if band.high_hz >= nyq:
        raise ValueError(f"band {band.name} reaches Nyquist ({nyq} Hz)")
    if band.low_hz > 0:
        sos = sps.butter(order, [band.low_hz, band.high_hz], btype="bandpass", fs=rate_hz,
                         output="sos")
    else:
        sos = sps.butter(order, band.high_hz, btype="lowpass", fs=rate_hz, output="sos")
    return sps.sosfiltfilt(sos, np.asarray(x, dtype=float))


def welch_psd(x, rate_hz: float, segment_s: float = 2.0):
    """Welch periodogram with Hann windows of ``segment_s`` and 50% overlap."""
    nperseg = int(round(segment_s * rate_hz))
    return sps.welch(np.asarray(x, dtype=float), fs=rate_hz, window="hann", nperseg=nperseg,
                     noverlap=nperseg // 2, detrend="constant", scaling="density")


def band_powers(seg: Segment, bands: Sequence[BandSpec] = DEFAULT_BANDS,
                segment_s: float = 2.0) -> dict[str, float]:
    """Absolute power in each band, integrated from the Welch density.

    Bins are assigned to the half-open interval ``[low, high)`` so contiguous
    bands never share a bin.
    """
    rate = seg.sample_rate_hz
    top = max(b.high_hz for b in bands)
    if rate < 2 * top:
        raise ValueError(f"sample rate {rate} Hz too low for band edge {top} Hz")
    if seg.duration_s < segment_s:
        raise TooShort(f"need at least {segment_s} s of data, got {seg.duration_s:.2f} s")
    freqs, psd = welch_psd(seg.samples, rate, segment_s)
    df = freqs[1] - freqs[0]
    out = {}
    for b in bands:
        sel = (freqs >= b.low_hz) & (freqs < b.high_hz)
        out[b.name] = float(np.sum(psd[sel]) * df)
    return out


def total_power(seg: Segment, segment_s: float = 2.0) -> float:
    freqs, psd = welch_psd(seg.samples, seg.sample_rate_hz, segment_s)
    return float(np.sum(psd) * (freqs[1] - freqs[0]))


def detect_peaks(seg, min_amp: float = 0.0, min_dist_ms: float = 0.0,
                 rate_hz: float | None = None) -> list[tuple[int, float]]:
    """Strict local maxima at or above ``min_amp``, thinned by distance.

    Candidates are visited in descending amplitude (ties: lower index first);
    a candidate is kept only if it lies at least ``min_dist_ms`` from every
    peak already kept. Endpoints are never peaks.

    Returns
    -------
    list of (index, amplitude), ordered by index.
    """
    if min_amp < 0 or min_dist_ms < 0:
        raise ValueError("min_amp and min_dist_ms must be non-negative")
    if isinstance(seg, Segment):
        x, rate = seg.samples, seg.sample_rate_hz
    else:
        x = np.asarray(seg, dtype=float)
        rate = rate_hz
    if len(x) < 3:
        return []
    mid = x[1:-1]
    cand = np.flatnonzero((mid > x[:-2]) & (mid > x[2:]) & (mid >= min_amp)) + 1
    if len(cand) == 0:
        return []
    if min_dist_ms > 0:
        if rate is None:
            raise ValueError("rate_hz is required when min_dist_ms > 0")
        dist = min_dist_ms * rate / 1000.0
        order = cand[np.lexsort((cand, -x[cand]))]
        kept: list[int] = []
        for i in order:
            pos = bisect.bisect_left(kept, i)
            if pos > 0 and i - kept[pos - 1] < dist:
                continue
            if pos < len(kept) and kept[pos] - i < dist:
                continue
            kept.insert(pos, int(i))
        cand = np.array(kept)
    return [(int(i), float(x[i])) for i in cand]


HR_BAND = BandSpec("pulse", 0.7, 3.5)
HR_RANGE_BPM = (30.0, 220.0)


def pulse_peaks(seg: Segment) -> list[tuple[int, float]]:
    """Systolic peaks of a BVP segment after 0.7-3.5 Hz band limiting."""
    filt = band_filter(seg.samples, seg.sample_rate_hz, HR_BAND)
    if not np.std(filt) > 1e-9 * (1.0 + np.abs(seg.samples).max(initial=0.0)):
        return []
    return detect_peaks(filt, 0.0, 1000.0 / HR_BAND.high_hz, seg.sample_rate_hz)


def derive_hr(seg: Segment, window_s: float = 5.0, out_rate_hz: float = 1.0) -> Segment:
    """Heart rate from a blood volume pulse segment.

    The output is sampled at ``out_rate_hz``; each value is 60 over the mean
    inter-beat interval of beats within a ``window_s`` window centred on the
    sample. Values outside 30-220 bpm are kept but cleared in ``mask``.
    """
    if seg.duration_s < 10.0 - 1.0 / seg.sample_rate_hz:
        raise TooShort(f"need 10 s of BVP, got {seg.duration_s:.2f} s")
    peaks = pulse_peaks(seg)
    if len(peaks) < 2:
        raise NoBeatsDetected("fewer than two systolic peaks found")
    beat_t = np.array([i for i, _ in peaks]) / seg.sample_rate_hz
    ibi = np.diff(beat_t)
    ibi_t = 0.5 * (beat_t[1:] + beat_t[:-1])
    n_out = max(1, int(np.floor(seg.duration_s * out_rate_hz)))
    centers = (np.arange(n_out) + 0.5) / out_rate_hz
    hr = np.empty(n_out)
    for k, c in enumerate(centers):
        sel = np.abs(ibi_t - c) <= 0.5 * window_s
        if not sel.any():
            sel = np.abs(ibi_t - c) == np.abs(ibi_t - c).min()
        hr[k] = 60.0 / ibi[sel].mean()
    mask = (hr >= HR_RANGE_BPM[0]) & (hr <= HR_RANGE_BPM[1])
    if not mask.all():
        log.warning("derived heart rate outside %s bpm in %d samples", HR_RANGE_BPM,
                    int((~mask).sum()))
    return Segment(SignalKind.HR, out_rate_hz, hr, seg.interval, mask=mask)
