"""``affectpipe`` command line.

Exit status is 0 on success, 1 when input data break a contract and 2 on
malformed flags. Every artifact is written below ``-o`` and carries a
provenance header (tool version, seed, digests of the inputs).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, classifiers, evaluation, ingest, labeling, lmm, synth
from .classifiers import AlgorithmId
from .dataset import from_features
from .eda import EdaParams
from .errors import DataError, SingleClass
from .features import session_features
from .model import SensorConfig, validate_session

log = logging.getLogger("affectpipe")

DEVICES = {"full": SensorConfig.FULL_SET, "empatica": SensorConfig.EMPATICA_ONLY,
           "brainlink": SensorConfig.BRAINLINK_ONLY}


# --- provenance ----------------------------------------------------------------

def _digest_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def digest(path) -> str:
    """sha256 of a file, or of the sorted file names and contents of a directory."""
    path = Path(path)
    if path.is_file():
        return _digest_file(path)
    h = hashlib.sha256()
    for p in sorted(q for q in path.rglob("*") if q.is_file()):
        h.update(p.relative_to(path).as_posix().encode() + b"\0")
        h.update(_digest_file(p).encode())
    return h.hexdigest()


def provenance(command: str, seed=None, inputs=(), **extra) -> dict:
    out = {"tool": "affectpipe", "version": __version__, "command": command}
    if seed is not None:
        out["seed"] = seed
    for i, p in enumerate(inputs):
        out[f"input{i}"] = f"{Path(p).name} sha256:{digest(p)}"
    out.update({k: v for k, v in extra.items() if v is not None})
    return out


def _text_header(prov: dict) -> str:
    return "".join(f"# {k}: {v}\n" for k, v in prov.items())


def _write_json(path: Path, doc: dict, prov: dict) -> None:
    path.write_text(json.dumps({"provenance": prov, **doc}, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _outdir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- subcommands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = synth.SynthConfig(n_subjects=args.subjects, n_interruptions=args.interruptions,
                            seed=args.seed, interval_s=args.interval)
    if args.null:
        cfg = cfg.null()
    study = synth.generate_study(cfg)
    out = _outdir(args)
    paths = synth.write_study(study, out)
    print(f"wrote {len(paths)} sessions to {out}")
    return 0


def _load_sessions(directory, validate=True):
    return [ingest.load_session(p, validate=validate) for p in ingest.find_manifests(directory)]


def cmd_validate(args) -> int:
    reports = {}
    for p in ingest.find_manifests(args.input):
        s = ingest.load_session(p, validate=False)
        r = validate_session(s, DEVICES[args.devices] if args.devices else None)
        reports[p.name] = {"ok": r.ok, "violations": [str(v) for v in r.violations],
                           "warnings": [str(w) for w in r.warnings]}
        print(f"{p.name}: {'ok' if r.ok else 'INVALID'}")
        for v in r.violations:
            print(f"  {v}")
        for w in r.warnings:
            print(f"  warning: {w}")
    if args.output:
        _write_json(_outdir(args) / "validation.json", {"sessions": reports},
                    provenance("validate", inputs=[args.input]))
    return 0 if all(r["ok"] for r in reports.values()) else 1


def cmd_features(args) -> int:
    config = DEVICES[args.devices]
    params = EdaParams()
    vectors = []
    for s in _load_sessions(args.input):
        vectors.extend(session_features(s, config, args.eda_scope, params))
    d = from_features(vectors, config=config)
    out = _outdir(args) / "features.csv"
    ingest.store_dataset(d, out, provenance("features", inputs=[args.input],
                                            devices=args.devices, eda_scope=args.eda_scope))
    print(f"wrote {len(d)} observations x {len(d.feature_names)} features to {out}")
    return 0


def _collect_overrides(args):
    overrides = {}
    paths = [Path(p) for p in args.overrides or []]
    if not paths:
        for m in ingest.find_manifests(args.input):
            ov = ingest.load_manifest(m).overrides
            if ov is not None and ov not in paths:
                paths.append(ov)
    for p in paths:
        if not p.is_file():
            from .errors import MissingFile
            raise MissingFile(f"overrides file not found: {p}")
        overrides.update(labeling.load_overrides(p))
    return overrides, paths


def cmd_label(args) -> int:
    sessions = _load_sessions(args.input)
    overrides, ov_paths = _collect_overrides(args)
    gold = labeling.build_gold(sessions, overrides=overrides, strict=args.strict,
                               pooled=args.pooled)
    d = ingest.load_dataset(args.dataset).with_labels(gold)
    out = _outdir(args) / "dataset.csv"
    prov = provenance("label", inputs=[args.input, args.dataset, *ov_paths],
                      mode="strict" if args.strict else "lenient",
                      threshold="pooled" if args.pooled else "subject")
    ingest.store_dataset(d, out, prov)
    counts = gold.counts()
    print(f"labeled {len(gold.labels)} observations: valence {counts['valence']}, "
          f"arousal {counts['arousal']}; {len(gold.unresolved)} unresolved ambiguous")
    return 0


def cmd_evaluate(args) -> int:
    d = ingest.load_dataset(args.dataset)
    config = DEVICES[args.devices]
    d = d.project(config)
    targets = list(labeling.TARGETS) if args.target == "both" else [args.target]
    algs = [AlgorithmId(a) for a in args.alg]
    out = _outdir(args)
    reports = []
    for target in targets:
        labels = set(d.labeled(target).labels(target))
        if len(labels) < 2:
            raise SingleClass(f"{target} labels hold {len(labels)} class(es); need two")
        for alg in algs:
            if args.setting == "holdout":
                r = evaluation.holdout_eval(d, alg, None, target, args.runs, args.seed,
                                            args.test_fraction)
            else:
                r = evaluation.loso_eval(d, alg, None, target, args.seed)
            reports.append(r)
            name = f"eval_{args.setting}_{args.devices}_{target}_{alg.value}.json"
            prov = provenance("evaluate", args.seed, [args.dataset], setting=args.setting,
                              devices=args.devices)
            _write_json(out / name, r.to_dict(), prov)
            m = r.mean
            print(f"{args.setting} {args.devices} {target} {alg.value}: accuracy "
                  f"{m.accuracy:.3f} (baseline {r.baseline.accuracy:.3f}) over {len(r.runs)} runs")
    table = evaluation.render_table(reports)
    (out / f"table_{args.setting}_{args.devices}.txt").write_text(
        _text_header(provenance("evaluate", args.seed, [args.dataset])) + table, encoding="utf-8")
    return 0


def cmd_lmm(args) -> int:
    obs = lmm.standardize_scores(lmm.scores_from_sessions(_load_sessions(args.input)))
    fit = lmm.fit_lmm(obs, args.method)
    out = _outdir(args)
    prov = provenance("lmm", inputs=[args.input], method=args.method)
    _write_json(out / "lmm.json", fit.to_dict(), prov)
    table = lmm.render_table(fit)
    (out / "lmm_table.txt").write_text(_text_header(prov) + table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def cmd_report(args) -> int:
    evals, fits, sources = [], [], []
    for p in sorted(Path(x) for x in args.inputs):
        files = sorted(p.glob("*.json")) if p.is_dir() else [p]
        for f in files:
            try:
                doc = json.loads(f.read_text(encoding="utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                continue
            if "setting" in doc and "runs" in doc:
                evals.append(evaluation.EvalReport.from_dict(doc))
                sources.append(f)
            elif "fixed_effects" in doc:
                fits.append((f, doc))
                sources.append(f)
    if not sources:
        from .errors import MissingFile
        raise MissingFile("no evaluation or lmm reports among the inputs")
    parts = []
    if evals:
        parts.append("Classifier performance\n\n" + evaluation.render_table(evals))
    for f, doc in fits:
        parts.append(f"Mixed model ({f.name})\n\n" + _lmm_table_from_doc(doc))
    text = "\n".join(parts)
    out = _outdir(args) / "report.txt"
    out.write_text(_text_header(provenance("report", inputs=sources)) + text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _lmm_table_from_doc(doc) -> str:
    fe = doc["fixed_effects"]
    fit = lmm.LmmFit(doc["method"], tuple(r["term"] for r in fe),
                     np.array([r["estimate"] for r in fe]), np.array([r["std_error"] for r in fe]),
                     doc["sigma2_u"], doc["sigma2_e"], doc["theta"], doc["reml_loglik"],
                     doc["ml_loglik"], doc["n_obs"], doc["n_subjects"], doc["iterations"],
                     tuple(doc["dof"]), (np.array([r["p_upper"] for r in fe]),
                                         np.array([r["p_lower"] for r in fe])),
                     {r["term"]: r["deviance_explained"] for r in fe
                      if r["deviance_explained"] is not None},
                     doc.get("lr_test", {}))
    return lmm.render_table(fit)


# --- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="affectpipe", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"affectpipe {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("synth", help="generate a synthetic study")
    s.add_argument("--subjects", type=int, default=23)
    s.add_argument("--interruptions", type=int, default=6)
    s.add_argument("--interval", type=float, default=300.0,
                   help="seconds between interruptions (default 300)")
    s.add_argument("--null", action="store_true", help="switch every emotional effect off")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("validate", help="check session manifests and traces")
    s.add_argument("input", help="directory of session manifests")
    s.add_argument("--devices", choices=sorted(DEVICES))
    s.add_argument("-o", "--output", help="directory for validation.json")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("features", help="sessions to a feature dataset CSV")
    s.add_argument("input", help="directory of session manifests")
    s.add_argument("--devices", choices=sorted(DEVICES), default="full")
    s.add_argument("--eda-scope", choices=("trace", "window"), default="trace")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("label", help="attach gold valence/arousal labels to a dataset")
    s.add_argument("input", help="directory of session manifests")
    s.add_argument("--dataset", required=True, help="features CSV")
    s.add_argument("--overrides", action="append",
                   help="manual label CSV (repeatable; default: files named by the manifests)")
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--strict", action="store_true",
                      help="fail on ambiguous observations without a manual label")
    mode.add_argument("--lenient", dest="strict", action="store_false",
                      help="keep automatic labels for unresolved ambiguity (default)")
    s.add_argument("--pooled", action="store_true", help="threshold at the all-subject mean")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("evaluate", help="hold-out or leave-one-subject-out evaluation")
    s.add_argument("dataset", help="labeled dataset CSV")
    s.add_argument("--setting", choices=("holdout", "loso"), default="holdout")
    s.add_argument("--devices", choices=sorted(DEVICES), default="full")
    s.add_argument("--alg", nargs="+", choices=[a.value for a in AlgorithmId],
                   default=[a.value for a in AlgorithmId])
    s.add_argument("--target", choices=("valence", "arousal", "both"), default="both")
    s.add_argument("--runs", type=int, default=10, help="hold-out repetitions")
    s.add_argument("--test-fraction", type=float, default=0.1)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("lmm", help="mixed model of progress on valence, arousal and time")
    s.add_argument("input", help="directory of session manifests")
    s.add_argument("--method", choices=("REML", "ML"), default="REML")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_lmm)

    s = sub.add_parser("report", help="render summary tables from report JSON files")
    s.add_argument("inputs", nargs="+", help="report JSON files or directories")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_report)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
