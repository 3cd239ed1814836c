"""Command-line driver: synthdetect {ingest,train,evaluate,report,selftest}."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import DATA_ENV, load_config
from .dataset import LABELS, SPLITS, ingest_cifake, write_manifest
from .errors import ConfigError, SynthDetectError
from .pipelines import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, evaluate_command, report_from_paths, run_experiment

log = logging.getLogger("synthdetect")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synthdetect", description="Fake-vs-real 32×32 image classifiers.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    ing = sub.add_parser("ingest", help="decode a dataset tree and dump its manifest")
    ing.add_argument("--data", default=os.environ.get(DATA_ENV), help=f"dataset root (default ${DATA_ENV})")
    ing.add_argument("--out", default="manifest.csv", help="manifest path")
    ing.add_argument("--workers", type=int, default=1)

    tr = sub.add_parser("train", help="train and evaluate one pipeline")
    tr.add_argument("--config", help="key=value config file")
    tr.add_argument("--pipeline", help="SVM, CUSTOM_CNN, TINY_RESNET, TINY_VGG or TINY_DENSENET")
    tr.add_argument("--seed", type=int, help="override the top-level seed")
    tr.add_argument("--subset", type=int, help="training images per class")
    tr.add_argument("--out", help="output directory")
    tr.add_argument("--data", help="dataset root")
    tr.add_argument("--synthetic-data", action="store_true", help="use the two-texture surrogate corpus")
    tr.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")

    ev = sub.add_parser("evaluate", help="score a checkpoint on a test split")
    ev.add_argument("checkpoint")
    ev.add_argument("--data", help="dataset root; default: the run's own test split")
    ev.add_argument("--out", default="eval", help="output directory")

    rp = sub.add_parser("report", help="re-render a table from saved confusion matrices")
    rp.add_argument("paths", nargs="+", help="run directories or confusion CSV files")
    rp.add_argument("--out", help="also write the table here")

    sub.add_parser("selftest", help="compare fast paths against slow oracles")
    return p


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError([f"--set expects KEY=VALUE, got {item!r}"])
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    if args.pipeline:
        out["pipeline"] = args.pipeline
    if args.seed is not None:
        out["seed"] = str(args.seed)
    if args.subset is not None:
        out["data.train_per_class"] = str(args.subset)
    if args.out:
        out["out"] = args.out
    if args.data:
        out["data.root"] = args.data
    if args.synthetic_data:
        out["data.synthetic"] = "true"
    return out


def _cmd_ingest(args) -> int:
    if not args.data:
        print(f"error: no dataset root (use --data or ${DATA_ENV})", file=sys.stderr)
        return EXIT_CONFIG
    split = ingest_cifake(args.data, workers=args.workers)
    write_manifest(split, args.out)
    counts = split.counts()
    for s in SPLITS:
        print(f"{s}: " + " ".join(f"{lab.value}={counts[(s, lab)]}" for lab in LABELS))
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    res = run_experiment(cfg)
    if res.report is not None:
        print((res.out_dir / "report.txt").read_text(), end="")
    else:
        print(f"training diverged; partial artifacts in {res.out_dir}", file=sys.stderr)
    return res.status


def _cmd_evaluate(args) -> int:
    res = evaluate_command(args.checkpoint, args.out, root=args.data)
    print((Path(args.out) / "report.txt").read_text(), end="")
    return res.status


def _cmd_report(args) -> int:
    text = report_from_paths(args.paths)
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from .oracles import selftest
    ok = True
    for name, passed, detail in selftest():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    return EXIT_OK if ok else EXIT_FAILURE


COMMANDS = {"ingest": _cmd_ingest, "train": _cmd_train, "evaluate": _cmd_evaluate, "report": _cmd_report,
            "selftest": _cmd_selftest}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (SynthDetectError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
