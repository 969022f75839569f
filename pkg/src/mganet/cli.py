"""Command-line entry point: gen, featurize, train, infer, eval, verify."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import shutil
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ConfigError, RunConfig, load_run_config
from .corpus import load_clips, load_training_split, read_corpus_index
from .events import DataError, read_annotations, write_annotations
from .features import AudioFormatError, FeatureFileError, featurize_dir
from .metrics import event_based_f1
from .model import CheckpointError, MGANet, load_checkpoint
from .toy_data import generate_toy_dataset, write_corpus
from .training import NumericError, TrainState, detect_events, evaluate, fit, load_train_state, save_train_state
from .verify import SUITES, run_all

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("mganet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="text file of 'section.key = value' lines")
    common.add_argument("--seed", type=int, help="run seed (sets training.seed)")
    common.add_argument("--preset", choices=("full", "tiny"), default="full")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")

    parser = _Parser(prog="mganet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen", parents=[common], help="write a synthetic toy corpus")
    p = sub.add_parser("featurize", parents=[common], help="log-mel features for every clip of a corpus")
    p.add_argument("--corpus", type=Path)
    p = sub.add_parser("train", parents=[common], help="Mean Teacher training")
    p.add_argument("--corpus", type=Path)
    p.add_argument("--features", type=Path)
    p.add_argument("--resume", action="store_true", help="continue from the checkpoints in --out")
    p = sub.add_parser("infer", parents=[common], help="detect events with a trained teacher")
    p.add_argument("--checkpoint", type=Path, help="training output directory")
    p.add_argument("--features", type=Path)
    p.add_argument("--corpus", type=Path, help="restrict to one split of this corpus (with --split)")
    p.add_argument("--split", default=None)
    p = sub.add_parser("eval", parents=[common], help="event-based F1 of predictions against references")
    p.add_argument("--predictions", type=Path)
    p.add_argument("--references", type=Path)
    p = sub.add_parser("verify", parents=[common], help="gradient checks, oracles, shapes and metric fixtures")
    p.add_argument("--corrupt-ldsa-backward", action="store_true", help="negative control: the suite must fail")
    p.add_argument("--suite", action="append", choices=sorted(SUITES), help="run only these suites (repeatable)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    extra = []
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        extra.append(item)
    for key in ("corpus", "features", "checkpoint", "predictions", "references"):
        value = getattr(args, key, None)
        if value is not None:
            extra.append(f"paths.{key} = {value}")
    if args.seed is not None:
        extra.append(f"training.seed = {args.seed}")
    if args.config is not None and not args.config.is_file():
        raise UsageError(f"config file {args.config} does not exist")
    return load_run_config(args.config, args.preset, extra)


def _path(cfg: RunConfig, key: str, what: str) -> Path:
    if key not in cfg.paths:
        raise UsageError(f"missing --{key} ({what})")
    return Path(cfg.paths[key])


def _out(args: argparse.Namespace) -> Path:
    if args.out is None:
        raise UsageError("--out is required for this command")
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def echo_config(cfg: RunConfig, out: Path | None = None) -> None:
    lines = cfg.lines()
    print("# resolved config")
    for line in lines:
        print(line)
    if out is not None:
        (out / "config.txt").write_text("\n".join(lines) + "\n")


def with_classes(cfg: RunConfig, classes: tuple[str, ...]) -> RunConfig:
    """The head width always follows the corpus class list."""
    model = dataclasses.replace(cfg.model, n_classes=len(classes))
    return dataclasses.replace(cfg, model=model)


# -- commands ---------------------------------------------------------------
def cmd_gen(args, cfg: RunConfig) -> int:
    out = _out(args)
    echo_config(cfg, out)
    corpus = generate_toy_dataset(cfg.toy, seed=cfg.training.seed)
    write_corpus(corpus, out)
    for split in ("strong", "weak", "unlabeled", "holdout"):
        clips = corpus.split(split)
        print(f"{split}\t{len(clips)} clips\t{sum(len(c.events) for c in clips)} events")
    return EXIT_OK


def cmd_featurize(args, cfg: RunConfig) -> int:
    corpus = _path(cfg, "corpus", "corpus directory")
    out = _out(args)
    echo_config(cfg, out)
    audio = corpus / "audio"
    if not audio.is_dir():
        raise DataError(f"{audio} does not exist")
    lines = featurize_dir(audio, out, cfg.spectrogram)
    print(f"featurized {len(lines)} clips into {out}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    index = read_corpus_index(_path(cfg, "corpus", "corpus directory"))
    features = _path(cfg, "features", "features directory")
    cfg = with_classes(cfg, index.classes)
    out = _out(args)
    echo_config(cfg, out)
    t_out = cfg.model.output_extent[0]
    split = load_training_split(index, features, t_out, cfg.eval.frame_hop)
    (out / "classes.txt").write_text("\n".join(index.classes) + "\n")
    state = TrainState.create(MGANet(cfg.model, seed=cfg.training.seed), cfg.training)
    ckpt = out / "checkpoints"
    if args.resume:
        if not (ckpt / "teacher.mgac").is_file():
            raise DataError(f"nothing to resume in {ckpt}")
        load_train_state(ckpt, state)
        print(f"resumed at epoch {state.epoch}")

    def on_epoch_end(st: TrainState, records: list[dict]) -> None:
        save_train_state(ckpt, st)
        means = {k: float(np.mean([r[k] for r in records])) for k in records[0] if k not in ("epoch", "step")}
        print(f"epoch {st.epoch}\t" + "\t".join(f"{k} {v:.4f}" for k, v in means.items()), flush=True)

    fit(state, split, cfg.training.epochs, log_file=out / "train_log.jsonl", on_epoch_end=on_epoch_end)
    shutil.copyfile(ckpt / "teacher.mgac", out / "teacher.mgac")
    report = evaluate(state.teacher, split.strong, index.strong_events, index.classes, cfg.eval)
    print(f"teacher on training strong set: macro F1 {report.macro_f1:.4f}")
    holdout = index.splits.get("holdout", [])
    if holdout:
        report = evaluate(state.teacher, load_clips(features, holdout), index.holdout_events, index.classes, cfg.eval)
        print(f"teacher on holdout set: macro F1 {report.macro_f1:.4f}")
    return EXIT_OK


def cmd_infer(args, cfg: RunConfig) -> int:
    run = _path(cfg, "checkpoint", "training output directory")
    features = _path(cfg, "features", "features directory")
    classes_file = run / "classes.txt"
    if not classes_file.is_file():
        raise DataError(f"{classes_file} does not exist; point --checkpoint at a training output directory")
    classes = tuple(c for c in classes_file.read_text().split() if c)
    cfg = with_classes(cfg, classes)
    out = _out(args)
    echo_config(cfg, out)
    if args.split:
        index = read_corpus_index(_path(cfg, "corpus", "corpus directory"))
        if args.split not in index.splits:
            raise DataError(f"corpus has no split {args.split!r}")
        ids = index.splits[args.split]
    else:
        if not features.is_dir():
            raise DataError(f"features directory {features} does not exist")
        ids = sorted(p.stem for p in features.glob("*.mgaf"))
    model = MGANet(cfg.model, seed=cfg.training.seed)
    load_checkpoint(run / "teacher.mgac", model)
    events = detect_events(model, load_clips(features, ids), classes, cfg.eval)
    write_annotations(out / "predictions.tsv", events)
    print(f"{len(events)} events from {len(ids)} clips written to {out / 'predictions.tsv'}")
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    preds = read_annotations(_path(cfg, "predictions", "predicted events TSV"))
    refs = read_annotations(_path(cfg, "references", "reference events TSV"))
    out = _out(args) if args.out is not None else None
    echo_config(cfg, out)
    report = event_based_f1(refs, preds, cfg.eval)
    print(report.table())
    print("# class\ttp\tfp\tfn\tf1")
    for line in report.lines():
        print(line)
    if out is not None:
        (out / "scores.tsv").write_text("\n".join(report.lines()) + "\n")
    return EXIT_OK


def cmd_verify(args, cfg: RunConfig) -> int:
    echo_config(cfg)
    results = run_all(seed=cfg.training.seed, corrupt_ldsa=args.corrupt_ldsa_backward, echo=print, suites=args.suite)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_NUMERIC if failed else EXIT_OK


COMMANDS: dict[str, Callable] = {
    "gen": cmd_gen,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, AudioFormatError, FeatureFileError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
