"""``ferbench`` command line: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .config import load_config
from .errors import FerBenchError

NORMALIZATION = {
    "ingest": pl.stage_ingest,
    "sample-frames": pl.stage_sample_frames,
    "unify-classes": pl.stage_unify_classes,
    "annotate": pl.stage_annotate,
    "age-groups": pl.stage_age_groups,
    "exclude": pl.stage_exclude,
    "preprocess": pl.stage_preprocess,
    "stats": pl.stage_stats,
    "split": pl.stage_split,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration (YAML)")
    common.add_argument("--dataset", action="append", help="restrict to dataset (repeatable)")
    common.add_argument("--arch", action="append", help="restrict to architecture (repeatable)")
    common.add_argument("--fold", action="append", type=int, help="restrict to fold (repeatable)")
    common.add_argument("--jobs", type=int, default=1, help="max concurrent train/eval jobs")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--dry-run", action="store_true", help="print planned jobs only")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ferbench",
                                     description="Cross-dataset FER benchmarking pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in NORMALIZATION:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    sub.add_parser("train", parents=[common], help="train every (dataset, arch, fold) cell")
    sub.add_parser("evaluate", parents=[common], help="evaluate every model on every dataset")
    for name in ("metrics", "report"):
        p = sub.add_parser(name, parents=[common], help=f"compute {name} from a results CSV")
        p.add_argument("--results", type=Path, help="results CSV (default: run's results.csv)")
        p.add_argument("--out", type=Path, help="output directory")
    return parser


def run(args) -> list[str]:
    cmd = args.command
    cfg = None
    if args.config is not None:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.with_seed(args.seed)
    elif cmd not in ("metrics", "report") or args.results is None:
        raise FerBenchError(f"{cmd} needs --config")

    if cmd in NORMALIZATION:
        return [str(p) for p in NORMALIZATION[cmd](cfg, args.dataset)]
    if cmd == "train":
        return pl.stage_train(cfg, args.dataset, args.arch, args.fold, args.jobs, args.dry_run)
    if cmd == "evaluate":
        return pl.stage_evaluate(cfg, args.dataset, args.arch, args.fold, args.jobs, args.dry_run)

    ws = pl.Workspace(cfg.output_root) if cfg else None
    results = args.results or ws.results_csv
    store = ws.results if ws else None
    if cmd == "metrics":
        out = args.out or ws.metrics
        return [str(p) for p in pl.write_metrics(results, out, store)]
    out = args.out or ws.report
    manifests = None
    if cfg is not None:
        names = pl._selected(cfg, args.dataset)
        if all(ws.manifest("preprocessed", n).exists() for n in names):
            manifests = [pl.final_manifest(cfg, n) for n in names]
    written, notices = pl.write_report(results, out, manifests, store)
    return [f"notice: {n}" for n in notices] + [str(p) for p in written]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        for line in run(args):
            print(line)
    except (FerBenchError, OSError, KeyError, ValueError) as exc:
        print(f"ferbench {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
