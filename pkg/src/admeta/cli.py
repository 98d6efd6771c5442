"""Command-line entry point: ``admeta <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import pipeline as pl
from .data import DataError, assign_splits, load_corpus, load_dataset
from .detectors import DETECTOR_IDS, DetectorError, DetectorSpec, run_detector
from .metamodel import MLPConfig, SchemaError, load_model, save_model, select, select_from_features
from .perfmatrix import PerformanceMatrix, build_matrices
from .stats import compare_selectors, comparison_to_json
from .synth import write_synth_corpus

logger = logging.getLogger("admeta")


class CLIError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _parse_param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _emit_json(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=1) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ------------------------------------------------------------------ commands

def cmd_synth(args) -> None:
    corpus = write_synth_corpus(args.n, args.seed, args.out)
    print(f"wrote {len(corpus)} datasets to {args.out}")


def cmd_featurize(args) -> None:
    if bool(args.input) == bool(args.corpus):
        raise CLIError("featurize", "give exactly one of --in or --corpus")
    if args.input:
        datasets = [load_dataset(args.input, args.label_column)]
    else:
        datasets = list(load_corpus(args.corpus, args.label_column or "label"))
    names, F = pl.featurize(datasets)
    pl.save_features(names, F, args.out or sys.stdout)


def cmd_score(args) -> None:
    spec = DetectorSpec(args.detector, dict(args.param or []), args.seed)
    ds = load_dataset(args.input, args.label_column)
    scores = run_detector(spec, ds)
    lines = ["row_index,score"] + [f"{i},{float(s)!r}" for i, s in enumerate(scores)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_matrix(args) -> None:
    corpus = load_corpus(args.corpus, args.label_column)
    specs = pl.load_detector_config(args.detectors, args.seed)
    y_auc, y_ap = build_matrices(corpus, specs, args.workers)
    y_auc.save(args.out_auc)
    y_ap.save(args.out_ap)
    for (name, det), why in sorted(y_auc.reasons.items()):
        print(f"missing {name} / {det}: {why}", file=sys.stderr)


def cmd_train(args) -> None:
    cfg = pl.read_json(args.config) if args.config else {}
    if args.seed is not None:
        cfg["seed"] = args.seed
    config = MLPConfig.from_json(cfg)
    if args.split:
        splits = pl.load_splits(args.split)
    else:
        names, _ = pl.load_features(args.features)
        splits = assign_splits(names, pl.SPLIT_RATIOS, config.seed)
    model = pl.train_from_files(args.features, args.targets, splits, config, args.metric)
    save_model(model, args.out)
    last = model.training_log[-1]
    print(f"trained {len(model.training_log)} epochs, best epoch {model.best_epoch}, "
          f"final loss {last['loss']:.6g}, val_loss {last['val_loss']:.6g}")


def cmd_select(args) -> None:
    model = load_model(args.model)
    if bool(args.input) == bool(args.corpus):
        raise CLIError("select", "give exactly one of --in or --corpus")
    if args.input:
        ds = load_dataset(args.input, args.label_column)
        _emit_json(select(model, ds).to_json(), args.out)
        return
    corpus = load_corpus(args.corpus, args.label_column or "label")
    names = corpus.names
    if args.split:
        assignment = pl.load_splits(args.split)
        names = [n for n in names if assignment.get(n) == args.subset]
    if args.strategy == "random":
        reports = pl.random_reports(names, model.detector_ids, args.seed)
    else:
        _, F = pl.featurize(corpus[n] for n in names)
        reports = [select_from_features(model, n, f) for n, f in zip(names, F)]
    if args.out:
        pl.save_reports(reports, args.out, args.strategy)
    else:
        _emit_json({"selector": args.strategy, "reports": [r.to_json() for r in reports]}, None)


def cmd_evaluate(args) -> None:
    matrix = PerformanceMatrix.load(args.matrix)
    result = compare_selectors(matrix, pl.load_reports(args.reports_a), pl.load_reports(args.reports_b))
    _emit_json(comparison_to_json(result), args.out)


def cmd_pipeline(args) -> None:
    cfg = pl.read_json(args.config) if args.config else {}
    cfg.setdefault("seed", args.seed)
    report = pl.run_pipeline(args.out, args.n, args.seed, args.metric, MLPConfig.from_json(cfg),
                             pl.load_detector_config(args.detectors, args.seed) if args.detectors else None,
                             args.workers)
    perf = report["meta_vs_random"]["performance"]
    err_best = report["meta_vs_single_best"]["error"]
    print(f"test datasets: {report['n_test']}  metric: {report['metric']}")
    print(f"meta-learner mean {report['metric']}: {perf['mean_a']:.4f}  random: {perf['mean_b']:.4f}  "
          f"(t={perf['t_statistic']:.3f}, p={perf['p_value']:.4g}, d={perf['effect_size_d']:.3f})")
    print(f"meta-learner mean error: {err_best['mean_a']:.4f}  "
          f"single best ({report['single_best_detector']}): {err_best['mean_b']:.4f}")
    if args.timing:
        for stage, secs in report["timings"].items():
            print(f"[timing] {stage}: {secs:.2f}s", file=sys.stderr)


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="admeta", description=__doc__)
    p.add_argument("--timing", action="store_true", help="print wall-clock time per stage")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--seed", type=int, default=9)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("featurize", help="compute the 19 meta-features")
    s.add_argument("--in", dest="input")
    s.add_argument("--corpus")
    s.add_argument("--label-column", default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("score", help="score one dataset with one detector")
    s.add_argument("--detector", required=True, choices=DETECTOR_IDS)
    s.add_argument("--param", action="append", type=_parse_param, metavar="KEY=VALUE")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--label-column", default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("matrix", help="build the AUC and AP performance matrices")
    s.add_argument("--corpus", required=True)
    s.add_argument("--detectors", help="JSON list of {id, params, seed}; default: all eight")
    s.add_argument("--label-column", default="label")
    s.add_argument("--out-auc", required=True)
    s.add_argument("--out-ap", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_matrix)

    s = sub.add_parser("train", help="train the meta-model")
    s.add_argument("--features", required=True)
    s.add_argument("--targets", required=True)
    s.add_argument("--split", help="splits JSON; default: seeded 60:15:25 split")
    s.add_argument("--config", help="MLP config JSON")
    s.add_argument("--metric", choices=("AUC", "AP"), default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("select", help="recommend a detector for new data")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="input")
    s.add_argument("--corpus")
    s.add_argument("--split")
    s.add_argument("--subset", choices=("train", "val", "test"), default="test")
    s.add_argument("--strategy", choices=("model", "random"), default="model")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--label-column", default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("evaluate", help="compare two selectors on a performance matrix")
    s.add_argument("--matrix", required=True)
    s.add_argument("--reports-a", required=True)
    s.add_argument("--reports-b", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("pipeline", help="run synth -> featurize -> matrix -> train -> select -> evaluate")
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--seed", type=int, default=9)
    s.add_argument("--metric", choices=("AUC", "AP"), default="AUC")
    s.add_argument("--config")
    s.add_argument("--detectors")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out", default="run")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        args.func(args)
    except pl.StageError as exc:
        print(f"admeta {args.command}: {exc}", file=sys.stderr)
        return 1
    except CLIError as exc:
        print(f"admeta {args.command} ({exc.stage}): {exc}", file=sys.stderr)
        return 1
    except (DataError, DetectorError, SchemaError, ValueError, KeyError, OSError) as exc:
        print(f"admeta {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.timing and args.command != "pipeline":
        print(f"[timing] {args.command}: {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
