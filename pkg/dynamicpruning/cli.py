"""
Command line entry point: run, sweep, baseline, analyze, retrain and score-static.
"""
from __future__ import annotations
import argparse, csv, itertools, logging, sys, warnings
from pathlib import Path
from typing import Optional, Sequence
import attrs
import numpy as np
from . import __version_number__
from .analysis import selection_profile, classify_groups, curve_table, jaccard, retrain_modes
from .commons import DEFAULT_HI, DEFAULT_LO
from .config import ExperimentConfig, parse_config, build_datasets
from .driver import RunRecord, RunWriter, run_experiment, baseline_run, run_sweep, prepare_static_scores, read_history
from .exceptions import ConfigError, InvalidArgument, RunFailedWarning, ScoringWarning
from .policies import PolicySpec, StaticSource, save_static_scores
from .report import CURVE_COLUMNS, emit_report
from .scoreboard import restore_with_ids

logger = logging.getLogger("dynamicpruning.cli")

def _setup_logging(verbosity : int):
    level = {-1: logging.ERROR, 0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG if verbosity > 1 else logging.ERROR)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("dynamicpruning")
    root.handlers[:] = [handler]
    root.setLevel(level)
    if verbosity < 0:
        warnings.simplefilter("ignore", RunFailedWarning)
        warnings.simplefilter("ignore", ScoringWarning)

def _load(args) -> ExperimentConfig:
    cfg = parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("run.seed", "seed override must be >= 0")
        cfg = attrs.evolve(cfg, run=attrs.evolve(cfg.run, seed=args.seed))
    if not cfg.run.dataset_ref:
        cfg = attrs.evolve(cfg, run=attrs.evolve(cfg.run, dataset_ref=cfg.data.ref))
    return cfg

def _finish(records : Sequence[RunRecord], out : Path) -> int:
    emit_report(records, out)
    failed = [r for r in records if not r.ok]
    for record in failed:
        print(f"dynamicpruning: run {record.run_id} failed: {record.error}", file=sys.stderr)
    return 1 if len(failed) == len(records) else 0

def cmd_run(args) -> int:
    cfg = _load(args)
    ds, test = build_datasets(cfg.data)
    record = run_experiment(cfg.run, ds, test)
    RunWriter(args.out, data=cfg.data).write(record)
    return _finish([record], Path(args.out))

def cmd_baseline(args) -> int:
    cfg = _load(args)
    ds, test = build_datasets(cfg.data)
    record = baseline_run(cfg.run, ds, test)
    RunWriter(args.out, data=cfg.data).write(record)
    return _finish([record], Path(args.out))

def cmd_sweep(args) -> int:
    cfg = _load(args)
    if cfg.sweep is None:
        raise ConfigError("sweep", "the sweep command needs a [sweep] section")
    grid = attrs.evolve(cfg.sweep, base=cfg.run)
    if args.seed is not None:
        grid = attrs.evolve(grid, seeds=(args.seed,))
    ds, test = build_datasets(cfg.data)
    records = run_sweep(
        grid, ds, test,
        out_dir=args.out,
        jobs=args.jobs or cfg.jobs,
        timeout=cfg.timeout,
        progress=args.verbose > 0,
        data=cfg.data,
    )
    return _finish(records, Path(args.out))

def _sibling(history : Path, suffix : str) -> Path:
    name = history.name.removesuffix(".history")
    return history.with_name(name + suffix)

def _history_with_ids(path : Path) -> tuple[list[np.ndarray], np.ndarray, Optional[object]]:
    history, meta = read_history(path)
    snapshot = _sibling(path, ".scoreboard.csv")
    if snapshot.exists():
        sb, ids = restore_with_ids(snapshot.read_bytes())
        return history, ids, sb
    if "n_samples" not in meta:
        raise InvalidArgument(f"{path} has no n_samples header and no scoreboard snapshot next to it")
    return history, np.arange(meta["n_samples"]), None

def cmd_analyze(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    profiles, groups = [], []
    for path in map(Path, args.history):
        history, ids, _ = _history_with_ids(path)
        profile = selection_profile(history, ids)
        profiles.append(profile)
        group = classify_groups(profile, args.hi, args.lo)
        groups.append(group)
        label = np.full(ids.shape[0], "sometimes", dtype=object)
        label[np.isin(ids, group.always)] = "always"
        label[np.isin(ids, group.never)] = "never"
        with open(out / (path.name.removesuffix(".history") + ".profile.csv"), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["id", "count", "frac", "rate", "group"])
            for row in zip(ids.tolist(), profile.counts.tolist(), profile.frac.tolist(), profile.rate.tolist(), label.tolist()):
                writer.writerow([row[0], row[1], repr(row[2]), repr(row[3]), row[4]])
        logger.info("%s: always=%d sometimes=%d never=%d", path.name, group.always.size, group.sometimes.size, group.never.size)
    if len({p.counts.shape[0] for p in profiles}) != 1:
        raise InvalidArgument("histories cover different numbers of samples")
    with open(out / "curve.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for row in curve_table(profiles):
            writer.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
    with open(out / "stability.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["a", "b", "jaccard_always", "jaccard_sometimes", "jaccard_never"])
        for (i, a), (j, b) in itertools.combinations(enumerate(groups), 2):
            writer.writerow([args.history[i], args.history[j], repr(jaccard(a.always, b.always)), repr(jaccard(a.sometimes, b.sometimes)), repr(jaccard(a.never, b.never))])
    return 0

def cmd_retrain(args) -> int:
    history_path = Path(args.history)
    config_path = _sibling(history_path, ".config")
    if not config_path.exists():
        raise InvalidArgument(f"no run config next to {history_path} (expected {config_path.name})")
    cfg = parse_config(config_path)
    history, ids, sb = _history_with_ids(history_path)
    if sb is None:
        raise InvalidArgument(f"retraining needs the final scoreboard snapshot next to {history_path}")
    ds, test = build_datasets(cfg.data)
    if not np.array_equal(ids, ds.ids):
        raise InvalidArgument("the rebuilt dataset does not match the ids of the saved run")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    policy = retrain_modes(history, sb.ema, cfg.run.prune_rate, args.mode, ids=ids, original=cfg.run.policy, hi=args.hi, lo=args.lo)
    name = f"{cfg.run.name}-retrain-{args.mode}"
    if args.mode == "static_sometimes":
        scores_path = out / f"{name}.scores.csv"
        save_static_scores(scores_path, ids, sb.ema, meta={"method": "final_ema", "offline_seconds": 0.0})
        policy = attrs.evolve(policy, static_source=StaticSource("file", path=str(scores_path)))
    run = attrs.evolve(cfg.run, policy=policy, run_id=name, seed=cfg.run.seed if args.seed is None else args.seed)
    record = run_experiment(run, ds, test)
    RunWriter(out, data=cfg.data).write(record)
    return _finish([record], out)

def cmd_score_static(args) -> int:
    cfg = _load(args)
    ds, _ = build_datasets(cfg.data)
    source = cfg.run.policy.static_source
    models, epochs = (source.models, source.epochs) if source is not None else (5, 5)
    policy = PolicySpec("static_topk", static_source=StaticSource(args.method, models=models, epochs=epochs))
    scored, offline = prepare_static_scores(policy, ds, cfg.run.learner, cfg.run.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_static_scores(args.out, ds.ids, scored.static_scores, meta={"method": args.method, "offline_seconds": offline, "models": models, "epochs": epochs})
    logger.info("%s scores for %d samples written to %s in %.3fs", args.method, ds.n_samples, args.out, offline)
    return 0

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynamicpruning", description="Dynamic data pruning experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version_number__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging; -v also shows sweep progress")
    parser.add_argument("-q", "--quiet", action="store_true", help="errors only, run warnings silenced")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name : str, help : str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", required=True, help="experiment configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the root seed")
        return p

    with_config("run", "one dynamic pruning run").set_defaults(func=cmd_run)
    with_config("baseline", "conventional training on the full dataset").set_defaults(func=cmd_baseline)
    p = with_config("sweep", "a grid of runs from the [sweep] section")
    p.add_argument("--jobs", type=int, default=None, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="selection profiles, curves and groups from history files")
    p.add_argument("--history", required=True, nargs="+", help="one or more .history files")
    p.add_argument("--out", required=True)
    p.add_argument("--hi", type=float, default=DEFAULT_HI)
    p.add_argument("--lo", type=float, default=DEFAULT_LO)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("retrain", help="retrain from scratch with a subset derived from a saved run")
    p.add_argument("--history", required=True, help="the .history file of the saved run")
    p.add_argument("--mode", required=True, choices=("original", "static_sometimes", "random_sometimes"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hi", type=float, default=DEFAULT_HI)
    p.add_argument("--lo", type=float, default=DEFAULT_LO)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("score-static", help="compute offline scores for static pruning")
    p.add_argument("--method", required=True, choices=("forget", "el2n"))
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="score file to write")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_score_static)
    return parser

def main(argv : Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(-1 if args.quiet else args.verbose)
    try:
        return args.func(args)
    except (ValueError, ArithmeticError, OSError) as e:
        logger.debug("command failed", exc_info=True)
        print(f"dynamicpruning: error: {e}", file=sys.stderr)
        return 2
