"""``cardioid`` command line.

Every subcommand writes its files under ``--out`` and prints a one-line JSON
summary. Exit status: 0 success, 1 domain error (message on stderr), 2 usage.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .authentication import AuthProfile, enroll, verify
from .config import PipelineConfig
from .errors import CardioIdError, InsufficientData, MalformedInput
from .evaluation import (
    AUTH_VARIANTS,
    IDENT_VARIANTS,
    VARIANTS,
    build_dataset,
    multiclass_rates,
    run_benchmark,
    train_ident,
    write_report_csv,
    write_report_json,
)
from .features import read_feature_csv, write_feature_csv
from .identification import IdentModel, identify
from .pipeline import STAGES, filter_signal, process_signal
from .signals import RgbFrame, frames_to_signal, load_signal, save_signal
from .synthetic import SyntheticSpec, generate_synthetic, separable_spec


def _emit(summary: dict) -> None:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, list):
            return [clean(x) for x in v]
        return v

    print(json.dumps({k: clean(v) for k, v in summary.items()}, sort_keys=True))


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _signals(args, cfg: PipelineConfig):
    if getattr(args, "spec", None):
        return generate_synthetic(SyntheticSpec.from_json(args.spec))
    paths = list(getattr(args, "input", None) or []) or list(cfg.data)
    if not paths:
        raise MalformedInput("no input signals given (use --input or 'data' in the config)")
    return [load_signal(p) for p in paths]


def _one_signal(args, cfg):
    sigs = _signals(args, cfg)
    if len(sigs) != 1:
        raise MalformedInput("this command takes exactly one signal")
    return sigs[0]


# ---------------------------------------------------------------- commands


def cmd_synth(args, cfg):
    spec = SyntheticSpec.from_json(args.spec) if args.spec else separable_spec(seed=cfg.seed)
    out = _out(cfg)
    files = []
    for sig in generate_synthetic(spec):
        path = out / f"{sig.subject_id}.csv"
        save_signal(sig, path)
        files.append(path.name)
    return {"subjects": len(files), "files": files}


def cmd_ingest(args, cfg):
    out = _out(cfg)
    files, dropouts = [], 0
    if args.frames:
        arr = np.load(args.frames)
        if arr.ndim != 4 or arr.shape[-1] != 3:
            raise MalformedInput("frames must be an array of shape (n, height, width, 3)")
        sig, dropouts = frames_to_signal((RgbFrame.from_array(f) for f in arr), args.fps, Path(args.frames).stem)
        sigs = [sig]
    else:
        sigs = [load_signal(p, args.fmt) for p in args.input]
    for sig in sigs:
        path = out / f"{sig.subject_id}.csv"
        save_signal(sig, path)
        files.append(path.name)
    return {"signals": len(sigs), "files": files, "dropouts": dropouts}


def cmd_filter(args, cfg):
    sig = _one_signal(args, cfg)
    x, x2, est = filter_signal(sig, args.stage, cfg)
    out = _out(cfg)
    stem = sig.subject_id or "signal"
    save_signal(x, out / f"{stem}.{args.stage}.csv")
    save_signal(x2, out / f"{stem}.{args.stage}.d2.csv")
    f1h = [{"window_start_s": e.window_start_s, "f1h_hz": e.f1h_hz} for e in est]
    (out / f"{stem}.f1h.json").write_text(json.dumps(f1h, indent=1) + "\n")
    return {"stage": args.stage, "windows": len(est), "median_f1h_hz": float(np.median([e.f1h_hz for e in est]))}


def cmd_segment(args, cfg):
    sig = _one_signal(args, cfg)
    rec = process_signal(sig, args.stage, cfg)
    out = _out(cfg)
    stem = sig.subject_id or "signal"
    with (out / f"{stem}.periods.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "morphology", "accepted", "cte"])
        for p in rec.periods:
            w.writerow([p.index, p.morphology.value, int(p.accepted), repr(p.cte)])
    counts = {}
    for p in rec.periods:
        counts[p.morphology.value] = counts.get(p.morphology.value, 0) + 1
    return {"periods": len(rec.periods), "morphologies": dict(sorted(counts.items()))}


def cmd_features(args, cfg):
    out = _out(cfg)
    vectors = []
    for sig in _signals(args, cfg):
        rec = process_signal(sig, args.stage, cfg)
        vectors.extend(p.features for p in rec.periods if p.accepted)
    write_feature_csv(out / "features.csv", vectors)
    return {"vectors": len(vectors), "file": "features.csv"}


def _read_features(paths):
    vectors = []
    for p in paths:
        vectors.extend(read_feature_csv(p))
    return [fv for fv in vectors if fv.morphology.accepted]


def cmd_train_ident(args, cfg):
    train = _read_features(args.features)
    if not train:
        raise InsufficientData("no accepted feature vectors in the training files")
    model = train_ident(train, args.method, cfg)
    out = _out(cfg)
    (out / "ident_model.json").write_text(json.dumps(model.to_dict()) + "\n")
    return {"method": args.method, "classes": len(model.labels), "morphologies": sorted(m.value for m in model.sub)}


def cmd_eval_ident(args, cfg):
    model = IdentModel.from_dict(json.loads(Path(args.model).read_text()))
    test = _read_features(args.features)
    truth, pred = [], []
    out = _out(cfg)
    with (out / "predictions.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "morphology", "predicted", "score"])
        for fv in test:
            label, score = identify(model, fv) if fv.morphology in model.sub else (None, float("nan"))
            truth.append(fv.subject_id)
            pred.append(label)
            w.writerow([fv.subject_id, fv.morphology.value, label or "", repr(score)])
    tpr, tnr, _ = multiclass_rates(truth, pred)
    acc = float(np.mean([t == p for t, p in zip(truth, pred)]))
    return {"periods": len(test), "accuracy": acc, "tpr": tpr, "tnr": tnr, "bac": (tpr + tnr) / 2}


def cmd_enroll(args, cfg):
    train = _read_features(args.features)
    if args.subject:
        train = [fv for fv in train if fv.subject_id == args.subject]
    subject = args.subject or (train[0].subject_id if train else None)
    profile = enroll(
        train, subject, metric=args.metric, multi_cluster=not args.single_cluster,
        tau_percentile=cfg.tau_percentile, pca_variance=cfg.pca_variance,
        grid_cells_per_dim=cfg.grid_cells_per_dim, min_periods=cfg.min_subject_periods,
    )
    out = _out(cfg)
    (out / "profile.json").write_text(json.dumps(profile.to_dict()) + "\n")
    clusters = {m.value: len(mp.clusters) for m, mp in sorted(profile.morphologies.items(), key=lambda kv: kv[0].value)}
    return {"subject": subject, "periods": len(train), "clusters": clusters}


def cmd_verify(args, cfg):
    profile = AuthProfile.from_dict(json.loads(Path(args.profile).read_text()))
    vectors = read_feature_csv(args.period)
    if not vectors:
        raise MalformedInput(f"{args.period}: no periods")
    results = [verify(profile, fv) for fv in vectors]
    if len(results) == 1:
        return {"accept": results[0][0], "distance": results[0][1]}
    return {"accept": [a for a, _ in results], "distance": [d for _, d in results]}


def _benchmark(args, cfg, variants):
    signals = _signals(args, cfg)
    stages = sorted({VARIANTS[v].stage for v in variants})
    rows = run_benchmark(build_dataset(signals, cfg, stages), variants, cfg)
    out = _out(cfg)
    write_report_csv(rows, out / "report.csv")
    write_report_json(rows, out / "report.json")
    best = {r.variant: r.bac for r in rows if r.subset == "inf"}
    return {"rows": len(rows), "subjects": len(signals), "bac": best, "file": "report.csv"}


def cmd_eval_auth(args, cfg):
    return _benchmark(args, cfg, args.variants or AUTH_VARIANTS)


def cmd_report(args, cfg):
    return _benchmark(args, cfg, args.variants or IDENT_VARIANTS + AUTH_VARIANTS)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of pipeline settings")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed (default: config, then $PPG_BIOID_SEED, then 0)")
    common.add_argument("--jobs", type=int, help="worker processes for benchmarks")

    p = argparse.ArgumentParser(prog="cardioid", description="PPG biometric pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(fn=fn)
        return sp

    s = add("synth", cmd_synth, "generate synthetic subjects, one CSV each")
    s.add_argument("--spec", help="SyntheticSpec JSON (default: the separable 5-subject preset)")

    s = add("ingest", cmd_ingest, "convert signal files or RGB frames to canonical CSV")
    s.add_argument("--input", nargs="+", default=[], help="CSV or JSONL signals")
    s.add_argument("--fmt", choices=["csv", "jsonl"])
    s.add_argument("--frames", help=".npy array of RGB frames (n, h, w, 3)")
    s.add_argument("--fps", type=float, default=30.0)

    for name, fn, help_ in (
        ("filter", cmd_filter, "band-pass a signal and take its second derivative"),
        ("segment", cmd_segment, "cut a signal into labelled cardiac periods"),
        ("features", cmd_features, "extract feature vectors from signals"),
    ):
        s = add(name, fn, help_)
        s.add_argument("--input", nargs="+", default=[])
        s.add_argument("--spec", help="generate the signals from a SyntheticSpec JSON instead")
        s.add_argument("--stage", choices=STAGES, default="harmonic")

    s = add("train-ident", cmd_train_ident, "train an identification model from feature CSVs")
    s.add_argument("--features", nargs="+", required=True)
    s.add_argument("--method", choices=["knn", "lda", "nn"], default="lda")

    s = add("eval-ident", cmd_eval_ident, "identify labelled feature vectors with a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--features", nargs="+", required=True)

    s = add("enroll", cmd_enroll, "build an authentication profile for one subject")
    s.add_argument("--features", nargs="+", required=True)
    s.add_argument("--subject", help="keep only this subject's rows")
    s.add_argument("--metric", choices=["mahalanobis", "euclidean"], default="mahalanobis")
    s.add_argument("--single-cluster", action="store_true")

    s = add("verify", cmd_verify, "accept or reject feature vectors against a profile")
    s.add_argument("--profile", required=True)
    s.add_argument("--period", required=True, help="feature CSV with one or more periods")

    for name, fn, help_ in (
        ("eval-auth", cmd_eval_auth, "authentication benchmark over signals"),
        ("report", cmd_report, "full identification and authentication benchmark"),
    ):
        s = add(name, fn, help_)
        s.add_argument("--input", nargs="+", default=[])
        s.add_argument("--spec", help="generate the signals from a SyntheticSpec JSON instead")
        s.add_argument("--variants", nargs="+", choices=list(VARIANTS))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = PipelineConfig.load(args.config, out=args.out, seed=args.seed, jobs=args.jobs)
        summary = args.fn(args, cfg)
    except (CardioIdError, OSError, ValueError) as exc:
        print(f"cardioid {args.command}: {exc}", file=sys.stderr)
        return 1
    _emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
