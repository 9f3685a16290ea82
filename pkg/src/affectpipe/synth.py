"""Synthetic studies with a known emotional state behind every observation window.

Each subject gets a 30 s resting baseline followed by ``n_interruptions``
work intervals. A latent (valence, arousal) state is drawn per interval and
shapes the signals recorded during it:

* high arousal adds skin conductance responses (driver impulses pushed through
  the same biexponential model the decomposition inverts) and raises the
  heart rate, which drives the pulse train of the BVP channel;
* negative valence scales the EEG alpha rhythm's power down and shrinks the
  pulse amplitude.

Self-assessment scores sit on the latent side of a per-subject offset, and
perceived progress follows the mixed-model equation. Everything is
deterministic per seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import signal

from .eda import phasic_from_driver, scr_impulse_gain
from .labeling import Arousal, Valence, store_overrides
from .lmm import REFERENCE_BETA, TIME_CENTER
from .model import (BASELINE_MS, N_ELICITATION, SamRating, SessionRecord, SignalKind,
                    SignalTrace)

EPOCH_MS = 1_600_000_000_000
SUBJECT_STRIDE_MS = 86_400_000


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    Effect sizes are zero for "no effect". ``interval_s`` is the spacing of
    interruptions; shorter intervals give smaller files with identical
    observation windows.
    """

    n_subjects: int = 23
    n_interruptions: int = 6
    seed: int = 0
    interval_s: float = 300.0
    p_positive: float = 0.5
    p_high: float = 0.5
    # effect sizes
    eda_scr_rate_high_arousal: float = 5.5   # extra SCRs per minute on top of the base rate
    hr_delta_high_arousal: float = 15.0      # bpm
    alpha_suppression_negative_valence: float = 0.5   # fraction of alpha power removed
    bvp_amplitude_negative_valence: float = 0.4       # fraction of pulse amplitude removed
    # resting physiology
    eda_scr_rate_base: float = 0.5           # SCRs per minute
    scr_amplitude: tuple[float, float] = (0.2, 0.6)   # uS
    hr_base: tuple[float, float] = (60.0, 80.0)       # range of subject resting bpm
    # noise levels per channel
    eda_noise: float = 0.002                 # uS
    hr_noise: float = 1.0                    # bpm
    bvp_noise: float = 0.02                  # fraction of pulse amplitude
    eeg_noise: float = 8.0                   # uV of background activity
    index_noise: float = 10.0                # attention / meditation points
    # self-assessment
    sam_shift: float = 2.0
    sam_noise: float = 0.5
    sam_offset_sd: float = 0.8
    # progress model
    lmm_beta: tuple[float, ...] = REFERENCE_BETA
    lmm_sigma_u: float = 0.5
    lmm_sigma_e: float = 0.8

    def __post_init__(self):
        if self.n_subjects < 1 or self.n_interruptions < 1:
            raise ValueError("need at least one subject and one interruption")
        if self.interval_s * 1000 < 10_000:
            raise ValueError("interval_s must leave room for a 10 s window")
        for name in ("eda_scr_rate_high_arousal", "hr_delta_high_arousal",
                     "alpha_suppression_negative_valence", "bvp_amplitude_negative_valence",
                     "eda_scr_rate_base", "eda_noise", "hr_noise", "bvp_noise", "eeg_noise",
                     "index_noise", "sam_noise", "sam_offset_sd", "lmm_sigma_u", "lmm_sigma_e"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("alpha_suppression_negative_valence", "bvp_amplitude_negative_valence"):
            if getattr(self, name) >= 1:
                raise ValueError(f"{name} must be < 1")
        if len(self.lmm_beta) != 6:
            raise ValueError("lmm_beta needs six coefficients")

    def null(self) -> "SynthConfig":
        """Same study with every effect switched off."""
        return replace(self, eda_scr_rate_high_arousal=0.0, hr_delta_high_arousal=0.0,
                       alpha_suppression_negative_valence=0.0,
                       bvp_amplitude_negative_valence=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthConfig":
        d = dict(d)
        for k in ("scr_amplitude", "hr_base", "lmm_beta"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass(frozen=True)
class WindowTruth:
    valence: Valence
    arousal: Arousal
    n_scr: int                       # SCR onsets inside the 10 s window


@dataclass(frozen=True, eq=False)
class Study:
    config: SynthConfig
    sessions: tuple[SessionRecord, ...]
    truth: Mapping[tuple[str, int], WindowTruth]
    truth_lmm: Mapping[str, object]
    overrides: Mapping[tuple[str, int], tuple[str, str]] = field(default_factory=dict)


def _subject_rngs(c: SynthConfig):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(c.seed).spawn(c.n_subjects)]


def _state_at(t_s, edges_s, values, default):
    """Piecewise-constant lookup: interval k is (edges[k], edges[k+1]]."""
    k = np.searchsorted(edges_s, t_s, side="left") - 1
    out = np.where((k >= 0) & (k < len(values)), np.asarray(values)[np.clip(k, 0, len(values) - 1)],
                   default)
    return out


def _sam(rng, positive: bool, offset: float, c: SynthConfig) -> int:
    shift = c.sam_shift if positive else -c.sam_shift
    return int(np.clip(np.rint(5.0 + offset + shift + rng.normal(0.0, c.sam_noise)), 1, 9))


def _eda(rng, n, fs, high, edges_s, t_s, c: SynthConfig):
    rate = c.eda_scr_rate_base + c.eda_scr_rate_high_arousal * high     # per minute, per sample
    lam = _state_at(t_s, edges_s, rate, c.eda_scr_rate_base) / 60.0 / fs
    onsets = np.flatnonzero(rng.random(n) < lam)
    amps = rng.uniform(*c.scr_amplitude, size=len(onsets))
    driver = np.zeros(n)
    driver[onsets] = amps / scr_impulse_gain(fs)
    phasic = phasic_from_driver(driver, fs)
    level = rng.uniform(1.0, 4.0)
    tonic = level + 0.1 * np.sin(2 * np.pi * t_s / 600.0 + rng.uniform(0, 2 * np.pi))
    x = tonic + phasic + rng.normal(0.0, c.eda_noise, n)
    return np.round(x, 6), onsets / fs


def _heart(rng, t_end_s, high, edges_s, c: SynthConfig, valence_neg):
    base = rng.uniform(*c.hr_base)
    t_hr = np.arange(int(math.ceil(t_end_s)))
    mean = base + c.hr_delta_high_arousal * _state_at(t_hr + 0.5, edges_s, high, 0.0)
    # slow wandering around the state mean
    wander = signal.lfilter([0.3], [1.0, -0.7], rng.normal(0.0, c.hr_noise, len(t_hr)))
    hr = np.round(mean + wander, 2)

    fs = SignalKind.BVP.nominal_rate_hz
    n = int(round(t_end_s * fs))
    t = np.arange(n) / fs
    inst = hr[np.minimum((t).astype(int), len(hr) - 1)]
    phase = np.cumsum(inst / 60.0 / fs) + rng.uniform()
    beats = np.flatnonzero(np.diff(np.floor(phase), prepend=np.floor(phase[0])) > 0)
    amp0 = rng.uniform(0.8, 1.2) * 50.0
    neg = _state_at(t[beats], edges_s, valence_neg, 0.0)
    amp = amp0 * (1.0 - c.bvp_amplitude_negative_valence * neg) * \
        (1.0 + 0.05 * rng.standard_normal(len(beats)))
    impulses = np.zeros(n)
    impulses[beats] = amp
    k_t = np.arange(-int(0.3 * fs), int(0.3 * fs) + 1) / fs
    kernel = np.exp(-0.5 * (k_t / 0.08) ** 2)
    bvp = np.convolve(impulses, kernel, mode="same") - 0.3 * amp0
    bvp += rng.normal(0.0, c.bvp_noise * amp0, n)
    return hr, np.round(bvp, 4)


def _eeg(rng, t_end_s, valence_neg, edges_s, c: SynthConfig):
    fs = SignalKind.EEG_RAW.nominal_rate_hz
    n = int(round(t_end_s * fs))
    t = np.arange(n) / fs
    # coloured background: integrated white noise leaks into low bands
    bg = signal.lfilter([1.0], [1.0, -0.95], rng.normal(0.0, c.eeg_noise * 0.3, n))
    bg += rng.normal(0.0, c.eeg_noise * 0.3, n)
    alpha_amp = rng.uniform(15.0, 25.0)
    neg = _state_at(t, edges_s, valence_neg, 0.0)
    scale = np.sqrt(1.0 - c.alpha_suppression_negative_valence * neg)
    f_alpha = rng.uniform(9.0, 11.0)
    alpha = alpha_amp * scale * np.sin(2 * np.pi * f_alpha * t + rng.uniform(0, 2 * np.pi))
    beta = 4.0 * np.sin(2 * np.pi * rng.uniform(18, 22) * t + rng.uniform(0, 2 * np.pi))
    return np.round(bg + alpha + beta, 3)


def _index(rng, t_end_s, c: SynthConfig):
    n = int(math.ceil(t_end_s))
    walk = signal.lfilter([1.0], [1.0, -0.8], rng.normal(0.0, c.index_noise * 0.6, n))
    return np.clip(np.rint(50.0 + walk), 0, 100)


def _subject(rng, k: int, c: SynthConfig):
    sid = f"s{k + 1:02d}"
    t0 = EPOCH_MS + k * SUBJECT_STRIDE_MS
    interval = c.interval_s
    base_s = BASELINE_MS / 1000.0
    edges_s = base_s + interval * np.arange(c.n_interruptions + 1)     # interval boundaries
    t_int_s = edges_s[1:]
    t_end_s = t_int_s[-1] + 1.0

    positive = rng.random(c.n_interruptions) < c.p_positive
    high = rng.random(c.n_interruptions) < c.p_high
    neg = (~positive).astype(float)

    # EDA
    fs_eda = SignalKind.EDA.nominal_rate_hz
    n_eda = int(round(t_end_s * fs_eda))
    t_eda = np.arange(n_eda) / fs_eda
    eda, scr_t = _eda(rng, n_eda, fs_eda, high.astype(float), edges_s, t_eda, c)
    hr, bvp = _heart(rng, t_end_s, high.astype(float), edges_s, c, neg)
    eeg = _eeg(rng, t_end_s, neg, edges_s, c)
    att = _index(rng, t_end_s, c)
    med = _index(rng, t_end_s, c)

    traces = {
        SignalKind.EEG_RAW: SignalTrace(SignalKind.EEG_RAW, 512.0, t0, eeg),
        SignalKind.ATTENTION: SignalTrace(SignalKind.ATTENTION, 1.0, t0, att),
        SignalKind.MEDITATION: SignalTrace(SignalKind.MEDITATION, 1.0, t0, med),
        SignalKind.EDA: SignalTrace(SignalKind.EDA, fs_eda, t0, eda),
        SignalKind.BVP: SignalTrace(SignalKind.BVP, 64.0, t0, bvp),
        SignalKind.HR: SignalTrace(SignalKind.HR, 1.0, t0, hr),
    }

    # self-assessment
    off_v, off_a = rng.normal(0.0, c.sam_offset_sd, 2)
    quadrants = [(p, h) for p in (True, False) for h in (True, False)]
    elic = [(_sam(rng, p, off_v, c), _sam(rng, h, off_a, c))
            for p, h in quadrants for _ in range(N_ELICITATION // 4)]
    vals = [_sam(rng, p, off_v, c) for p in positive]
    aros = [_sam(rng, h, off_a, c) for h in high]

    # progress from the mixed-model equation on within-subject z-scores
    vz, az = (np.asarray(x, float) for x in (vals, aros))
    vz = (vz - vz.mean()) / vz.std() if vz.std() > 0 else np.zeros_like(vz)
    az = (az - az.mean()) / az.std() if az.std() > 0 else np.zeros_like(az)
    tc = np.arange(1, c.n_interruptions + 1) - TIME_CENTER
    X = np.column_stack([np.ones_like(tc), vz, az, tc, vz * tc, az * tc])
    u = rng.normal(0.0, c.lmm_sigma_u)
    prog_cont = X @ np.asarray(c.lmm_beta) + u + rng.normal(0.0, c.lmm_sigma_e, len(tc))
    progress = np.clip(np.rint(prog_cont), 1, 5).astype(int)

    ratings = tuple(SamRating(int(v), int(a), int(p), float(t0 + 1000.0 * t))
                    for v, a, p, t in zip(vals, aros, progress, t_int_s))
    s = SessionRecord(sid, traces, (float(t0), float(t0 + BASELINE_MS)), ratings, tuple(elic))

    truth = {}
    for i, t in enumerate(t_int_s):
        n_scr = int(np.sum((scr_t >= t - 10.0) & (scr_t < t)))
        truth[(sid, i)] = WindowTruth(Valence.POSITIVE if positive[i] else Valence.NEGATIVE,
                                      Arousal.HIGH if high[i] else Arousal.LOW, n_scr)
    return s, truth, prog_cont


def generate_study(c: SynthConfig) -> Study:
    """Build every session of the study plus its ground truth."""
    sessions, truth = [], {}
    for k, rng in enumerate(_subject_rngs(c)):
        s, t, _ = _subject(rng, k, c)
        sessions.append(s)
        truth.update(t)
    study = Study(c, tuple(sessions), truth,
                  {"beta": list(c.lmm_beta), "sigma_u": c.lmm_sigma_u, "sigma_e": c.lmm_sigma_e})
    return replace(study, overrides=_overrides(study))


def _overrides(study: Study) -> dict:
    """Manual labels (the latent truth) for every ambiguous observation."""
    from .labeling import build_gold
    gold = build_gold(study.sessions)
    return {k: (study.truth[k].valence.value, study.truth[k].arousal.value)
            for k in gold.unresolved}


OVERRIDES_FILE = "overrides.csv"


def write_study(study: Study, directory) -> list[Path]:
    """Write manifests, trace CSVs, the overrides file and the ground truth.

    Returns the manifest paths in subject order.
    """
    from .ingest import store_session
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    store_overrides(study.overrides, directory / OVERRIDES_FILE)
    paths = [store_session(s, directory, OVERRIDES_FILE) for s in study.sessions]
    with open(directory / "truth.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("subject_id,obs_idx,valence,arousal,n_scr\n")
        for (sid, i), t in sorted(study.truth.items()):
            fh.write(f"{sid},{i},{t.valence.value},{t.arousal.value},{t.n_scr}\n")
    doc = {"config": study.config.to_dict(), "truth_lmm": study.truth_lmm,
           "sessions": [p.name for p in paths]}
    (directory / "study.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    return paths
