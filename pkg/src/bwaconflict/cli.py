"""Command line front-end.

Exit codes: 0 success, 2 partial failure (some files failed), 64 usage
error, 65 data format error.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import ranking
from .errors import BwaError, NonFiniteFeature
from .features import FEATURE_NAMES, FeatureMatrix, read_feature_csv, write_feature_csv
from .pipeline import PipelineConfig, load_config, score_file, vad_training_set
from .scoring import ConflictReport
from .synth import SynthSpec, generate_corpus
from .vad import VadModel, cross_validate, grid_search, train

log = logging.getLogger("bwaconflict")

EX_OK, EX_PARTIAL, EX_USAGE, EX_DATAERR = 0, 2, 64, 65


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------- score


_WORKER_STATE: dict = {}


def _init_worker(model_path, config):
    _WORKER_STATE["model"] = VadModel.load(model_path) if model_path else None
    _WORKER_STATE["config"] = config


def _score_one(path):
    file_id = os.path.splitext(os.path.basename(path))[0]
    try:
        report = score_file(path, _WORKER_STATE["model"], _WORKER_STATE["config"])
    except (BwaError, OSError, ValueError) as exc:
        return ConflictReport(file_id=file_id, error=f"{type(exc).__name__}: {exc}")
    return report


def _expand_inputs(inputs) -> list:
    paths = []
    for p in inputs:
        if os.path.isdir(p):
            paths.extend(sorted(glob.glob(os.path.join(p, "*.wav"))))
        else:
            paths.append(p)
    return paths


def cmd_score(inputs, out_dir, model_path=None, config: PipelineConfig | None = None,
              workers: int | None = None) -> int:
    config = config or PipelineConfig()
    workers = workers or config.workers
    paths = _expand_inputs(inputs)
    if not paths:
        raise UsageError("no input files")
    if model_path and not os.path.exists(model_path):
        raise UsageError(f"model file not found: {model_path}")
    os.makedirs(out_dir, exist_ok=True)

    if workers > 1 and len(paths) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(model_path, config)) as pool:
            reports = list(pool.map(_score_one, paths))
    else:
        _init_worker(model_path, config)
        reports = [_score_one(p) for p in paths]

    failed = 0
    for path, report in zip(paths, reports):
        if report.error:
            failed += 1
            log.error("%s: %s", path, report.error)
        else:
            log.info("%s: conflict %.6f (%d regions, %d pairs)", report.file_id,
                     report.conflict_score, report.region_count, report.pair_count)
        _atomic_write(os.path.join(out_dir, report.file_id + ".json"), report.to_json())
    return EX_PARTIAL if failed else EX_OK


# ----------------------------------------------------------------- rank


def cmd_rank(report_paths, out_dir, labels_path=None) -> int:
    paths = []
    for p in report_paths:
        paths.extend(sorted(glob.glob(os.path.join(p, "*.json"))) if os.path.isdir(p) else [p])
    missing = [p for p in paths if not os.path.exists(p)]
    if missing:
        raise UsageError(f"report not found: {missing[0]}")
    if not paths:
        raise UsageError("no reports given")
    if labels_path and not os.path.exists(labels_path):
        raise UsageError(f"labels file not found: {labels_path}")
    reports = ranking.load_reports(paths)
    good = [r for r in reports if not r.error]
    for r in reports:
        if r.error:
            log.warning("skipping %s: %s", r.file_id, r.error)
    labels = ranking.read_labels(labels_path) if labels_path else None
    rows = ranking.rank_reports(good, labels)

    os.makedirs(out_dir, exist_ok=True)
    ranking.write_rank_csv(rows, os.path.join(out_dir, "ranking.csv"))
    ranking.write_plot_data(rows, os.path.join(out_dir, "plot_data.csv"))
    for r in rows[:10]:
        print(f"{r.rank:4d}  {r.file_id:<24s} {r.conflict_score:.6f}"
              + ("" if r.label is None else f"  [{r.label}]"))
    if labels:
        summary = ranking.triage_summary(rows)
        _atomic_write(os.path.join(out_dir, "summary.json"),
                      json.dumps(summary, sort_keys=True, indent=2) + "\n")
        for lab, mean in sorted(summary["class_means"].items(), reverse=True):
            print(f"class {lab} mean score {mean:.6f}")
    return EX_PARTIAL if len(good) < len(reports) else EX_OK


# ------------------------------------------------------------------ vad


def _read_vad_labels(path, n_rows) -> np.ndarray:
    if not os.path.exists(path):
        raise UsageError(f"labels file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "speech" not in reader.fieldnames:
            raise ValueError(f"{path}: expected a 'speech' column of 0/1")
        lab = np.array([int(row["speech"]) for row in reader])
    if lab.shape[0] != n_rows:
        raise ValueError(f"{path}: {lab.shape[0]} labels for {n_rows} feature rows")
    return lab == 1


def _load_vad_data(features_path, labels_path):
    if not features_path or not os.path.exists(features_path):
        raise UsageError(f"features file not found: {features_path}")
    if not labels_path:
        raise UsageError("--labels is required")
    fm = read_feature_csv(features_path)
    if tuple(fm.names) != FEATURE_NAMES:
        raise ValueError(f"{features_path}: unexpected feature columns")
    bad = ~np.all(np.isfinite(fm.values), axis=1)
    if np.any(bad):
        raise NonFiniteFeature(int(np.argmax(bad)),
                               f"{features_path}: non-finite feature in data row {int(np.argmax(bad)) + 1}")
    return fm, _read_vad_labels(labels_path, len(fm))


def cmd_vad(action, features_path, labels_path, out=None, box_c=None, gamma=None,
            folds: int = 10, seed: int = 0) -> int:
    fm, y = _load_vad_data(features_path, labels_path)
    if box_c is None or gamma is None:
        (box_c, gamma), _ = grid_search(fm.values, y, seed=seed)
        log.info("grid search picked C=%g gamma=%g", box_c, gamma)
    if action == "train":
        if not out:
            raise UsageError("--out is required for vad train")
        model = train(fm.values, y, box_c, gamma)
        _atomic_write(out, model.to_json())
        print(f"model: {len(model.dual_coefs)} support vectors, C={box_c:g}, gamma={gamma:g} -> {out}")
    else:
        report = cross_validate(fm.values, y, folds, box_c, gamma, seed)
        print(f"{folds}-fold CV, C={box_c:g}, gamma={gamma:g}")
        print(report.table())
        if out:
            doc = {"false_positive_rate": report.false_positive_rate,
                   "false_negative_rate": report.false_negative_rate,
                   "total_error": report.total_error,
                   "per_fold_errors": report.per_fold_errors,
                   "box_c": box_c, "kernel_gamma": gamma, **report.counts}
            _atomic_write(out, json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return EX_OK


# ---------------------------------------------------------------- synth


def cmd_synth(out_dir, spec: SynthSpec, kind: str = "corpus", vad_seconds: float = 480.0) -> int:
    os.makedirs(out_dir, exist_ok=True)
    if kind == "corpus":
        rows = generate_corpus(spec, out_dir)
        counts = {name: sum(1 for r in rows if r["class"] == name) for name in ("high", "mild", "low")}
        print(f"wrote {len(rows)} files to {out_dir}: {counts}")
        return EX_OK
    X, y = vad_training_set(seed=spec.seed, seconds=vad_seconds)
    fm = FeatureMatrix(X, np.arange(X.shape[0]) * 0.02)
    write_feature_csv(fm, os.path.join(out_dir, "features.csv"))
    with open(os.path.join(out_dir, "labels.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("speech",))
        w.writerows([(int(v),) for v in y])
    print(f"wrote {X.shape[0]} frames ({int(y.sum())} speech) to {out_dir}")
    return EX_OK


# ----------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bwaconflict", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("score", help="score WAV files (or directories of them)")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--out", required=True, help="directory for per-file JSON reports")
    s.add_argument("--model", help="VAD model JSON; without it the non-speech filter is skipped")
    s.add_argument("--config", help="TOML config file")
    s.add_argument("--workers", type=int)
    s.add_argument("--seed", type=int, default=0, help="accepted for uniformity; scoring is deterministic")

    r = sub.add_parser("rank", help="rank reports by conflict score")
    r.add_argument("reports", nargs="+", help="report JSON files or directories")
    r.add_argument("--labels", help="CSV with file_id,label (2 high, 1 mild, 0 low)")
    r.add_argument("--out", required=True)

    v = sub.add_parser("vad", help="train or cross-validate the speech/non-speech SVM")
    v.add_argument("action", choices=("train", "eval"))
    v.add_argument("--features", required=True, help="feature CSV (see 'synth --kind vad')")
    v.add_argument("--labels", required=True, help="CSV with a 'speech' column, one row per frame")
    v.add_argument("--out")
    v.add_argument("--c", type=float, dest="box_c")
    v.add_argument("--gamma", type=float)
    v.add_argument("--folds", type=int, default=10)
    v.add_argument("--seed", type=int, default=0)

    y = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    y.add_argument("--out", required=True)
    y.add_argument("--kind", choices=("corpus", "vad"), default="corpus")
    y.add_argument("--seed", type=int, default=7)
    y.add_argument("--n-high", type=int, default=3)
    y.add_argument("--n-mild", type=int, default=15)
    y.add_argument("--n-low", type=int, default=87)
    y.add_argument("--duration", type=float, default=20.0, help="seconds per file")
    y.add_argument("--vad-seconds", type=float, default=480.0)
    y.add_argument("--workers", type=int, default=1, help="unused; generation is sequential")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "score":
            config = load_config(args.config) if args.config else PipelineConfig()
            return cmd_score(args.inputs, args.out, args.model, config, args.workers)
        if args.command == "rank":
            return cmd_rank(args.reports, args.out, args.labels)
        if args.command == "vad":
            return cmd_vad(args.action, args.features, args.labels, args.out,
                           args.box_c, args.gamma, args.folds, args.seed)
        if args.command == "synth":
            spec = SynthSpec(n_high=args.n_high, n_mild=args.n_mild, n_low=args.n_low,
                             duration_s=args.duration, seed=args.seed)
            return cmd_synth(args.out, spec, args.kind, args.vad_seconds)
    except UsageError as exc:
        print(f"bwaconflict: {exc}", file=sys.stderr)
        return EX_USAGE
    except (BwaError, ValueError, KeyError) as exc:
        print(f"bwaconflict: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EX_DATAERR
    return EX_USAGE


if __name__ == "__main__":
    sys.exit(main())
