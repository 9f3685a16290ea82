"""On-disk formats: session manifests, trace CSVs and dataset CSVs.

A session manifest is one JSON document::

    {
      "subject_id": "s01",
      "traces": {"eda": {"path": "s01_eda.csv", "rate_hz": 4}, ...},
      "baseline_ms": [t0, t1],
      "interruptions": [{"t_ms": ..., "valence": 5, "arousal": 6, "progress": 3}, ...],
      "elicitation": [[v, a], ...],          # sixteen pairs
      "overrides": "overrides.csv"           # optional
    }

Relative paths are resolved against the manifest's directory. Each trace CSV
has the header ``timestamp_ms,value``; timestamps are epoch milliseconds on a
clock shared by all traces of the session.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .dataset import LabeledDataset
from .errors import MissingFile, ParseError, RateMismatch, SchemaMismatch
from .features import feature_names
from .model import (SamRating, SensorConfig, SessionRecord, SignalKind, SignalTrace,
                    validate_session)

log = logging.getLogger(__name__)

TRACE_HEADER = ("timestamp_ms", "value")
RATE_TOLERANCE = 0.01
GAP_PERIODS = 2.0


@dataclass(frozen=True)
class TraceRef:
    path: Path
    rate_hz: float
    offset_ms: float = 0.0


@dataclass(frozen=True)
class SessionManifest:
    path: Path
    subject_id: str
    traces: Mapping[SignalKind, TraceRef]
    baseline_ms: tuple[float, float]
    interruptions: tuple[SamRating, ...]
    elicitation: tuple[tuple[int, int], ...]
    overrides: Path | None = None


def _fmt(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2 ** 53 else repr(x)


def _require(doc, key, path, alias=None):
    if key not in doc:
        name = f"'{key}'" + (f" ({alias})" if alias else "")
        raise ParseError(f"manifest is missing {name}", path)
    return doc[key]


def _as_int(value, what, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
        raise ParseError(f"{what} must be an integer, got {value!r}", path)
    return int(value)


def load_manifest(path) -> SessionManifest:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"invalid JSON: {exc}", path) from None
    if not isinstance(doc, dict):
        raise ParseError("manifest must be a JSON object", path)
    base = path.parent

    sid = str(_require(doc, "subject_id", path))
    traces = {}
    raw_traces = _require(doc, "traces", path)
    if not isinstance(raw_traces, dict):
        raise ParseError("'traces' must be an object", path)
    for name, spec in raw_traces.items():
        try:
            kind = SignalKind.parse(name)
        except ValueError as exc:
            raise ParseError(str(exc), path) from None
        if not isinstance(spec, dict):
            raise ParseError(f"trace {name!r} must be an object", path)
        tpath = base / str(_require(spec, "path", path, f"traces.{name}.path"))
        rate = float(_require(spec, "rate_hz", path, f"traces.{name}.rate_hz"))
        traces[kind] = TraceRef(tpath, rate, float(spec.get("offset_ms", 0.0)))

    bl = _require(doc, "baseline_ms", path, "baseline_interval")
    if not (isinstance(bl, list) and len(bl) == 2):
        raise ParseError("'baseline_ms' must be a pair [t0, t1]", path)

    ints = []
    for i, item in enumerate(_require(doc, "interruptions", path)):
        try:
            ints.append(SamRating(_as_int(item["valence"], f"interruptions[{i}].valence", path),
                                  _as_int(item["arousal"], f"interruptions[{i}].arousal", path),
                                  _as_int(item["progress"], f"interruptions[{i}].progress", path),
                                  float(item["t_ms"])))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"interruptions[{i}] lacks {exc}", path) from None

    elic = []
    for i, pair in enumerate(_require(doc, "elicitation", path, "elicitation_ratings")):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise ParseError(f"elicitation[{i}] must be a [valence, arousal] pair", path)
        elic.append((_as_int(pair[0], f"elicitation[{i}]", path),
                     _as_int(pair[1], f"elicitation[{i}]", path)))

    overrides = doc.get("overrides")
    return SessionManifest(path, sid, traces, (float(bl[0]), float(bl[1])), tuple(ints),
                           tuple(elic), base / overrides if overrides else None)


def load_trace(path, kind: SignalKind, rate_hz: float, offset_ms: float = 0.0) -> SignalTrace:
    """Read one trace CSV, check its rate and annotate gaps.

    Samples are kept exactly where they were recorded; nothing is resampled
    or interpolated.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"trace file not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().strip()
        if tuple(h.strip() for h in header.split(",")) != TRACE_HEADER:
            raise ParseError(f"header must be {','.join(TRACE_HEADER)}", path, 1)
        body = fh.read()
    try:
        frame = pd.read_csv(io.StringIO(body), header=None, names=list(TRACE_HEADER),
                            dtype=float, float_precision="round_trip")
    except (ValueError, pd.errors.ParserError):
        raise ParseError("malformed row", path, _first_bad_row(body)) from None
    ts = frame["timestamp_ms"].to_numpy() + offset_ms
    vals = frame["value"].to_numpy()
    bad = ~(np.isfinite(ts) & np.isfinite(vals))
    if bad.any():
        raise ParseError("missing or non-finite value", path, int(np.flatnonzero(bad)[0]) + 2)
    if len(ts) == 0:
        raise ParseError("trace has no samples", path, 2)
    if len(ts) > 1:
        dt = np.diff(ts)
        if np.any(dt <= 0):
            raise ParseError("timestamps must increase", path, int(np.flatnonzero(dt <= 0)[0]) + 3)
        inferred = 1000.0 / float(np.median(dt))
        if abs(inferred - rate_hz) > RATE_TOLERANCE * rate_hz:
            raise RateMismatch(f"{path}: declared {rate_hz} Hz but timestamps imply "
                               f"{inferred:.4g} Hz")
        period = 1000.0 / rate_hz
        gaps = [(float(ts[i] + period), float(ts[i + 1]))
                for i in np.flatnonzero(dt > GAP_PERIODS * period)]
    else:
        gaps = []
    if gaps:
        log.info("%s: %d gap(s) annotated", path.name, len(gaps))
    return SignalTrace(kind, rate_hz, float(ts[0]), vals, ts, tuple(gaps))


def _first_bad_row(body: str) -> int:
    for row_no, line in enumerate(body.splitlines(), start=2):
        parts = line.split(",")
        try:
            if len(parts) != 2:
                raise ValueError
            float(parts[0]), float(parts[1])
        except ValueError:
            return row_no
    return 2


def load_session(manifest_path, validate: bool = True) -> SessionRecord:
    """Load a session from its manifest.

    With ``validate`` (the default) a session that breaks any structural
    invariant raises ``ParseError`` listing the violations.
    """
    m = load_manifest(manifest_path)
    traces = {k: load_trace(ref.path, k, ref.rate_hz, ref.offset_ms) for k, ref in m.traces.items()}
    s = SessionRecord(m.subject_id, traces, m.baseline_ms, m.interruptions, m.elicitation)
    if validate:
        report = validate_session(s)
        if not report.ok:
            raise ParseError("session fails validation: " + "; ".join(map(str, report)),
                             m.path)
    return s


def store_trace(t: SignalTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        fh.writelines(f"{_fmt(a)},{_fmt(b)}\n" for a, b in zip(t.timestamps_ms, t.samples))


def store_session(s: SessionRecord, directory, overrides_file: str | None = None) -> Path:
    """Write traces and a manifest for ``s`` into ``directory``; return the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    traces = {}
    for kind, tr in s.traces.items():
        name = f"{s.subject_id}_{kind.value}.csv"
        store_trace(tr, directory / name)
        traces[kind.value] = {"path": name, "rate_hz": tr.sample_rate_hz}
    doc = {
        "subject_id": s.subject_id,
        "traces": traces,
        "baseline_ms": list(s.baseline_interval),
        "interruptions": [{"t_ms": r.t_ms, "valence": r.valence, "arousal": r.arousal,
                           "progress": r.progress} for r in s.interruptions],
        "elicitation": [list(p) for p in s.elicitation_ratings],
    }
    if overrides_file:
        doc["overrides"] = overrides_file
    path = directory / f"{s.subject_id}.json"
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


DATASET_PREFIX = ("subject_id", "obs_idx")
DATASET_SUFFIX = ("valence_label", "arousal_label")


def store_dataset(d: LabeledDataset, path, provenance: Mapping[str, str] | None = None) -> None:
    """Write ``d`` as CSV. Floats are written with round-trip precision.

    ``provenance`` entries become leading ``# key: value`` comment lines.
    """
    d.config  # rejects non-canonical column sets
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for k, v in (provenance or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_PREFIX + d.feature_names + DATASET_SUFFIX)
        for i in range(len(d)):
            w.writerow([d.subject_ids[i], int(d.obs_idx[i]), *(repr(float(x)) for x in d.X[i]),
                        d.valence[i], d.arousal[i]])


def read_provenance(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(":")
            out[key.strip()] = value.strip()
    return out


def load_dataset(path) -> LabeledDataset:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"dataset not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise ParseError("empty file", path, 1)
    header = tuple(h.strip() for h in header)
    if header[:2] != DATASET_PREFIX or header[-2:] != DATASET_SUFFIX:
        raise ParseError(f"columns must start with {','.join(DATASET_PREFIX)} and end with "
                         f"{','.join(DATASET_SUFFIX)}", path, 1)
    names = header[2:-2]
    canonical = [feature_names(c) for c in SensorConfig]
    if names not in canonical:
        if any(sorted(names) == sorted(c) for c in canonical):
            raise SchemaMismatch(f"{path}: feature columns are not in canonical order")
        raise SchemaMismatch(f"{path}: feature columns match no sensor configuration")
    sids, idx, rows, val, aro = [], [], [], [], []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(row)}", path, row_no)
        try:
            idx.append(int(row[1]))
            rows.append([float(x) for x in row[2:-2]])
        except ValueError as exc:
            raise ParseError(str(exc), path, row_no) from None
        sids.append(row[0])
        val.append(row[-2])
        aro.append(row[-1])
    X = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return LabeledDataset(sids, idx, names, X, val, aro)


def find_manifests(directory) -> list[Path]:
    """Session manifests in ``directory``, sorted by file name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFile(f"not a directory: {directory}")
    out = []
    for p in sorted(directory.glob("*.json")):
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            continue
        if isinstance(doc, dict) and "subject_id" in doc and "traces" in doc:
            out.append(p)
    if not out:
        raise MissingFile(f"no session manifests in {directory}")
    return out
