"""
Command-line front end.

    railfuse synth    --out DATA [--seed N] [--n-scenes N] ...
    railfuse run      --data DATA --out REPORT --seed N [--folds Z] ...
    railfuse sweep    --data DATA --out REPORT --seed N --iou 0.1 0.2 ...
    railfuse ttest    (--a X,Y,.. --b X,Y,.. | --report REPORT)
    railfuse fixtures

Settings come from `--config` (a RunConfig JSON file), or the `--benchmark`
preset, or the dataset's recorded provenance, in that order of preference;
explicit flags override all of them. Errors exit nonzero with a JSON object
on stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from railfuse.config import RunConfig, standard_benchmark
from railfuse.dataset import generate_dataset, load_dataset, load_manifest, save_dataset
from railfuse.errors import ConfigError, RailfuseError
from railfuse.fixtures import run_fixtures
from railfuse.pipeline import VARIANTS, run_experiment, sweep_iou
from railfuse.report import write_report
from railfuse.scene import confusion_from_ambiguity
from railfuse.stats import mean_std, unpaired_ttest


class _JsonArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        _emit_error("UsageError", message)
        raise SystemExit(2)


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}, sort_keys=True) + "\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _add_config_flags(p: argparse.ArgumentParser, seed_required: bool = False) -> None:
    p.add_argument("--config", type=Path, help="RunConfig JSON file")
    p.add_argument("--benchmark", action="store_true", help="start from the standard synthetic benchmark")
    p.add_argument("--seed", type=int, required=seed_required, help="master seed")
    p.add_argument("--n-scenes", type=int)
    p.add_argument("--layer", type=int, choices=(7, 16, 19), help="detector layer preset")
    p.add_argument("--ambiguity", type=float, help="scene ambiguity; also sets the detector confusion")
    p.add_argument("--folds", type=int, help="number of random splits (Z)")
    p.add_argument("--iou", type=float, nargs="+", help="IoU thresholds")
    p.add_argument("--prob-threshold", type=float)
    p.add_argument("--epochs", type=int, help="maximum training epochs")
    p.add_argument("--lr", type=float, help="Adam learning rate")


def build_parser() -> argparse.ArgumentParser:
    parser = _JsonArgumentParser(prog="railfuse", description="Image + audio fusion defect classification experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_JsonArgumentParser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)

    p = sub.add_parser("run", help="fuse, train and evaluate both variants")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-checkpoint", action="store_true", help="skip writing the fold-1 model")
    _add_config_flags(p, seed_required=True)

    p = sub.add_parser("sweep", help="accuracy of both variants along an IoU grid")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-checkpoint", action="store_true")
    _add_config_flags(p, seed_required=True)

    p = sub.add_parser("ttest", help="unpaired t-test of two accuracy samples")
    p.add_argument("--a", type=_floats, help="first sample, comma-separated")
    p.add_argument("--b", type=_floats, help="second sample, comma-separated")
    p.add_argument("--report", type=Path, help="report directory with folds.csv (fused vs image_only)")

    sub.add_parser("fixtures", help="recompute the embedded reference tables")
    return parser


def resolve_config(args: argparse.Namespace, provenance: dict | None = None) -> RunConfig:
    if args.config is not None:
        cfg = RunConfig.load(args.config)
    elif args.benchmark:
        cfg = standard_benchmark()
    elif provenance and "config" in provenance:
        cfg = RunConfig.from_dict(provenance["config"])
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.n_scenes is not None:
        cfg.n_scenes = args.n_scenes
    if args.layer is not None:
        cfg.scene = dataclasses.replace(cfg.scene, layer_id=args.layer)
    if args.ambiguity is not None:
        cfg.scene = dataclasses.replace(cfg.scene, ambiguity=args.ambiguity)
        cfg.detector = dataclasses.replace(
            cfg.detector, confusion=confusion_from_ambiguity(args.ambiguity, len(cfg.scene.classes))
        )
    if args.folds is not None:
        cfg.folds = args.folds
    if args.iou:
        cfg.iou_thresholds = tuple(args.iou)
    if args.prob_threshold is not None:
        cfg.prob_threshold = args.prob_threshold
    if args.epochs is not None:
        cfg.vit = dataclasses.replace(cfg.vit, max_epochs=args.epochs)
    if args.lr is not None:
        cfg.vit = dataclasses.replace(cfg.vit, learning_rate=args.lr)
    cfg.validate()
    return cfg


def cmd_synth(args: argparse.Namespace) -> dict:
    cfg = resolve_config(args)
    scenes = generate_dataset(cfg.n_scenes, cfg.seed, cfg.scene, cfg.audio)
    save_dataset(scenes, args.out, provenance={"config": cfg.to_dict(), "seed": cfg.seed})
    return {"dataset": str(args.out), "scenes": len(scenes)}


def _load(args: argparse.Namespace):
    if not (args.data / "manifest.json").is_file():
        raise FileNotFoundError(f"no dataset at {args.data}")
    cfg = resolve_config(args, load_manifest(args.data).get("provenance"))
    scenes = load_dataset(args.data)
    if len(scenes) < 2:
        raise ConfigError("dataset needs at least two scenes")
    cfg.scene = dataclasses.replace(cfg.scene, classes=scenes[0].taxonomy.names)
    return cfg, scenes


def _summary(result, out: Path) -> dict:
    curve = result.curve()
    return {
        "report": str(out),
        "folds": len(result.folds),
        "accuracy": {v: dict(zip((f"{t:g}" for t in result.thresholds), curve[v])) for v in VARIANTS},
    }


def cmd_run(args: argparse.Namespace) -> dict:
    cfg, scenes = _load(args)
    result = run_experiment(scenes, cfg)
    write_report(result, args.out, save_model=not args.no_checkpoint)
    return _summary(result, args.out)


def cmd_sweep(args: argparse.Namespace) -> dict:
    cfg, scenes = _load(args)
    result, _ = sweep_iou(scenes, cfg, cfg.iou_thresholds)
    write_report(result, args.out, save_model=not args.no_checkpoint)
    return _summary(result, args.out)


def _fold_columns(report: Path) -> dict[str, list[float]]:
    with open(report / "folds.csv", newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(fh) if r["fold"] not in ("Mean", "StD")]
    return {col: [float(r[col]) for r in rows] for col in rows[0] if col != "fold"} if rows else {}


def cmd_ttest(args: argparse.Namespace) -> dict:
    if args.report is not None:
        cols = _fold_columns(args.report)
        out = {}
        for col in cols:
            if not col.startswith("fused@"):
                continue
            iou = col.split("@", 1)[1]
            a, b = cols[col], cols[f"image_only@{iou}"]
            r = unpaired_ttest(a, b)
            out[iou] = {"t": r.t, "p": r.p, "df": r.df, "means": [mean_std(a)[0], mean_std(b)[0]]}
        return out
    if args.a is None or args.b is None:
        raise ConfigError("ttest needs --a and --b, or --report")
    r = unpaired_ttest(args.a, args.b)
    return {"t": r.t, "p": r.p, "df": r.df, "means": [mean_std(args.a)[0], mean_std(args.b)[0]]}


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "sweep": cmd_sweep, "ttest": cmd_ttest}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fixtures":
            payload = run_fixtures()
            print(json.dumps(payload, indent=1, sort_keys=True))
            return 0 if payload["passed"] else 1
        payload = COMMANDS[args.command](args)
    except (RailfuseError, ValueError, OSError, KeyError, FloatingPointError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1
    print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
