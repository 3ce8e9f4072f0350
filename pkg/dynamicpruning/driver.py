"""
The checkpointed train/select loop, its timing accounting, sweeps and run persistence.
"""
from __future__ import annotations
import csv, itertools, logging, time, traceback, warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Literal, Optional, Sequence, Union
import attrs
import numpy as np
from func_timeout import func_timeout, FunctionTimedOut
from .commons import derive_seed, derive_rng
from .dataset import Dataset
from .exceptions import InvalidArgument, LearnerDivergence, NonFiniteScores, MissingStaticScores, RunFailedWarning, ScoringWarning
from .learner import LearnerConfig, LearnerState, init_learner, sgd_epoch, lr_at, per_sample_loss, accuracy
from .policies import PolicySpec, StaticSource, compute_k, select_subset, compute_el2n_trials, compute_forget_scores, load_static_scores
from .scoreboard import Scoreboard, init_scores

logger = logging.getLogger("dynamicpruning.driver")

RESULT_COLUMNS = (
    "run_id", "policy", "prune_rate", "Tp", "alpha", "epsilon", "c", "seed",
    "final_test_acc", "score_seconds", "train_seconds", "total_seconds",
)

@attrs.define(frozen=True)
class RunConfig:
    """
    One run of the dynamic pruning loop.
    """
    epochs : int = attrs.field(validator=attrs.validators.ge(1))
    prune_period : int = attrs.field(validator=attrs.validators.ge(1))
    prune_rate : float = attrs.field()
    policy : PolicySpec = attrs.field()
    learner : LearnerConfig = attrs.field(factory=LearnerConfig)
    seed : int = attrs.field(default=0, validator=attrs.validators.ge(0))
    variance_rule : Literal["literal", "welford"] = attrs.field(default="literal", validator=attrs.validators.in_(("literal", "welford")))
    dataset_ref : str = attrs.field(default="")
    run_id : str = attrs.field(default="")

    @prune_rate.validator
    def _check_rate(self, attribute, value):
        if not 0 <= value < 1:
            raise InvalidArgument(f"prune_rate must be in [0, 1), got {value}")

    def __attrs_post_init__(self):
        if self.epochs % self.prune_period:
            raise InvalidArgument(f"epochs ({self.epochs}) must be divisible by prune_period ({self.prune_period})")

    @property
    def checkpoints(self) -> int:
        return self.epochs // self.prune_period

    @property
    def name(self) -> str:
        if self.run_id:
            return self.run_id
        p = self.policy
        return f"{p.kind}-rate{self.prune_rate:g}-tp{self.prune_period}-a{p.alpha:g}-e{p.epsilon:g}-c{p.c:g}-s{self.seed}"

@dataclass(slots=True)
class Timings:
    score_seconds : float = 0.0
    train_seconds : float = 0.0
    offline_seconds : float = 0.0
    total_seconds : float = 0.0

    @property
    def total_minus_offline_seconds(self) -> float:
        return self.total_seconds - self.offline_seconds

@dataclass(slots=True, frozen=True)
class EpochRecord:
    epoch : int
    lr : float
    train_loss : float
    train_accuracy : float
    test_accuracy : float
    batches : int

@dataclass(slots=True)
class RunRecord:
    params : dict[str, Any]
    config : Optional[RunConfig] = None
    k : int = 0
    selections : list[np.ndarray] = field(default_factory=list)
    epochs : list[EpochRecord] = field(default_factory=list)
    timings : Timings = field(default_factory=Timings)
    scoreboard : Optional[Scoreboard] = field(default=None, repr=False)
    ids : Optional[np.ndarray] = field(default=None, repr=False)
    full_evaluations : int = 0
    baseline : bool = False
    error : Optional[str] = None

    @property
    def final_test_acc(self) -> float:
        return self.epochs[-1].test_accuracy if self.epochs else float("nan")

    @property
    def n_checkpoints(self) -> int:
        return len(self.selections)

    @property
    def subset_batches(self) -> int:
        return sum(epoch.batches for epoch in self.epochs)

    @property
    def run_id(self) -> str:
        return str(self.params["run_id"])

    @property
    def ok(self) -> bool:
        return self.error is None

def run_params(cfg : RunConfig, *, baseline : bool = False) -> dict[str, Any]:
    p = cfg.policy
    return {
        "run_id": cfg.name if not baseline else f"baseline-s{cfg.seed}",
        "policy": "baseline" if baseline else p.kind,
        "prune_rate": 0.0 if baseline else cfg.prune_rate,
        "Tp": cfg.prune_period,
        "alpha": p.alpha,
        "epsilon": p.epsilon,
        "c": p.c,
        "seed": cfg.seed,
    }

def prepare_static_scores(policy : PolicySpec, ds : Dataset, learner : LearnerConfig, seed : int) -> tuple[PolicySpec, float]:
    """
    Attach offline scores to a static policy that only names its source.
    Returns the ready policy and the wall-clock seconds spent scoring.
    """
    if not policy.is_static or policy.static_scores is not None:
        return policy, 0.0
    source = policy.static_source
    if source is None:
        raise MissingStaticScores(f"policy {policy.kind} needs static scores")
    start = time.perf_counter()
    if source.method == "file":
        assert source.path is not None
        ids, scores, meta = load_static_scores(source.path)
        if not np.array_equal(ids, ds.ids):
            raise InvalidArgument(f"score file {source.path} does not cover the dataset ids")
        try:
            offline = float(meta.get("offline_seconds", 0.0))
        except (TypeError, ValueError):
            warnings.warn(f"Ignoring unreadable offline_seconds in {source.path}", ScoringWarning)
            offline = 0.0
        return policy.with_static_scores(scores), offline
    if source.method == "el2n":
        seeds = [derive_seed(seed, "el2n", r) for r in range(source.models)]
        scores = compute_el2n_trials(ds, learner, source.models, source.epochs, seeds)
    else:
        scores = compute_forget_scores(ds, learner, source.epochs, derive_seed(seed, "forget"))
    offline = time.perf_counter() - start
    logger.info("offline %s scoring took %.3fs", source.method, offline)
    return policy.with_static_scores(scores), offline

def _train_epoch(state : LearnerState, cfg : RunConfig, ds : Dataset, subset : np.ndarray, test_ds : Optional[Dataset], record : RunRecord) -> LearnerState:
    epoch = state.epoch
    lr = lr_at(cfg.learner.schedule, epoch)
    start = time.perf_counter()
    state, metrics = sgd_epoch(state, ds, subset, lr, derive_seed(cfg.seed, "shuffle", epoch))
    record.timings.train_seconds += time.perf_counter() - start
    test_acc = accuracy(state, test_ds) if test_ds is not None and test_ds.n_samples else float("nan")
    record.epochs.append(EpochRecord(epoch, lr, metrics.loss, metrics.accuracy, test_acc, metrics.batches))
    logger.debug("epoch %d lr=%g loss=%.4f train_acc=%.4f test_acc=%.4f", epoch, lr, metrics.loss, metrics.accuracy, test_acc)
    return state

def run_experiment(cfg : RunConfig, ds : Dataset, test_ds : Optional[Dataset] = None) -> RunRecord:
    """
    Dynamic pruning: seed the scoreboard from the untrained model, then for every pruning
    period score the full dataset, select k samples and train on them for prune_period epochs.

    Random and static policies never score. Divergence aborts the run and returns the partial record
    with its error set.
    """
    record = RunRecord(params=run_params(cfg), config=cfg, ids=ds.ids)
    wall = wall_loop = time.perf_counter()
    offline = 0.0
    k = record.k = compute_k(ds.n_samples, cfg.prune_rate)
    rng = derive_rng(cfg.seed, "policy")
    state = init_learner(cfg.learner, ds.dim, ds.num_classes, derive_seed(cfg.seed, "init"))
    try:
        policy, offline = prepare_static_scores(cfg.policy, ds, cfg.learner, cfg.seed)
        record.timings.offline_seconds = offline
        wall_loop = time.perf_counter()
        if policy.needs_scoring:
            start = time.perf_counter()
            sb = init_scores(per_sample_loss(state, ds), policy.alpha, variance_rule=cfg.variance_rule)
            record.timings.score_seconds += time.perf_counter() - start
            record.full_evaluations += 1
        else:
            sb = init_scores(np.zeros(ds.n_samples), policy.alpha, variance_rule=cfg.variance_rule)
        record.scoreboard = sb
        for checkpoint in range(cfg.checkpoints):
            if policy.needs_scoring:
                start = time.perf_counter()
                sb.observe(per_sample_loss(state, ds))
                record.timings.score_seconds += time.perf_counter() - start
                record.full_evaluations += 1
            else:
                sb.pass_checkpoint()
            positions = select_subset(policy, sb, k, rng)
            sb.record_selection(positions)
            subset = ds.ids[positions]
            record.selections.append(subset)
            logger.info("%s: checkpoint %d selected %d of %d", cfg.name, checkpoint, k, ds.n_samples)
            for _ in range(cfg.prune_period):
                state = _train_epoch(state, cfg, ds, subset, test_ds, record)
    except (LearnerDivergence, NonFiniteScores) as e:
        record.error = f"{type(e).__name__}: {e}"
        warnings.warn(f"Run {cfg.name} diverged and was aborted: {e}", RunFailedWarning)
    record.timings.total_seconds = (time.perf_counter() - wall_loop) + offline
    logger.debug("%s finished in %.3fs (wall %.3fs)", cfg.name, record.timings.total_seconds, time.perf_counter() - wall)
    return record

def baseline_run(cfg : RunConfig, ds : Dataset, test_ds : Optional[Dataset] = None) -> RunRecord:
    """
    Conventional training on the full dataset: no scoreboard and no checkpoints.
    """
    record = RunRecord(params=run_params(cfg, baseline=True), config=cfg, ids=ds.ids, baseline=True, k=ds.n_samples)
    wall = time.perf_counter()
    state = init_learner(cfg.learner, ds.dim, ds.num_classes, derive_seed(cfg.seed, "init"))
    try:
        for _ in range(cfg.epochs):
            state = _train_epoch(state, cfg, ds, ds.ids, test_ds, record)
    except LearnerDivergence as e:
        record.error = f"{type(e).__name__}: {e}"
        warnings.warn(f"Baseline {record.run_id} diverged and was aborted: {e}", RunFailedWarning)
    record.timings.total_seconds = time.perf_counter() - wall
    return record

@attrs.define(frozen=True)
class SweepGrid:
    """
    Cartesian grid around a base config. epsilon only varies for epsilon-greedy kinds and
    c only for UCB kinds; the other kinds run once with the base values.
    """
    base : RunConfig
    prune_rates : tuple[float, ...] = attrs.field(converter=tuple)
    policies : tuple[str, ...] = attrs.field(converter=tuple)
    prune_periods : tuple[int, ...] = attrs.field(converter=tuple)
    epsilons : tuple[float, ...] = attrs.field(converter=tuple)
    cs : tuple[float, ...] = attrs.field(converter=tuple)
    seeds : tuple[int, ...] = attrs.field(converter=tuple)
    baseline : bool = attrs.field(default=False)
    static_source : Optional[StaticSource] = attrs.field(default=None)

    def __attrs_post_init__(self):
        for name in ("prune_rates", "policies", "prune_periods", "epsilons", "cs", "seeds"):
            if not getattr(self, name):
                raise InvalidArgument(f"sweep axis {name} is empty")

    def points(self) -> Iterator[dict[str, Any]]:
        seen = set()
        for rate, kind, period, epsilon, c, seed in itertools.product(self.prune_rates, self.policies, self.prune_periods, self.epsilons, self.cs, self.seeds):
            if kind not in ("eps_greedy", "static_eps_greedy"):
                epsilon = self.base.policy.epsilon
            if kind not in ("ucb", "static_ucb"):
                c = self.base.policy.c
            point = (rate, kind, period, epsilon, c, seed)
            if point in seen:
                continue
            seen.add(point)
            yield {"prune_rate": rate, "policy": kind, "Tp": period, "epsilon": epsilon, "c": c, "seed": seed}

    def build(self, point : dict[str, Any]) -> RunConfig:
        base = self.base
        static_source = self.static_source or base.policy.static_source
        if point["policy"] in ("static_topk", "static_eps_greedy", "static_ucb") and static_source is None:
            raise MissingStaticScores(f"policy {point['policy']} needs a static source in the sweep config")
        policy = PolicySpec(
            point["policy"],
            alpha=base.policy.alpha,
            epsilon=point["epsilon"],
            c=point["c"],
            static_source=static_source if point["policy"].startswith("static_") else None,
        )
        return attrs.evolve(base, prune_rate=point["prune_rate"], prune_period=point["Tp"], policy=policy, seed=point["seed"], run_id="")

def _failed_record(point : dict[str, Any], base : RunConfig, error : BaseException) -> RunRecord:
    params = {
        "run_id": f"{point['policy']}-rate{point['prune_rate']:g}-tp{point['Tp']}-s{point['seed']}",
        "policy": point["policy"],
        "prune_rate": point["prune_rate"],
        "Tp": point["Tp"],
        "alpha": base.policy.alpha,
        "epsilon": point["epsilon"],
        "c": point["c"],
        "seed": point["seed"],
    }
    return RunRecord(params=params, error=f"{type(error).__name__}: {error}")

def _execute(task : tuple[RunConfig, Dataset, Optional[Dataset], Optional[float], bool, float]) -> RunRecord:
    cfg, ds, test_ds, timeout, baseline, offline = task
    runner = baseline_run if baseline else run_experiment
    try:
        record = func_timeout(timeout, runner, args=(cfg, ds, test_ds)) if timeout else runner(cfg, ds, test_ds)
    except FunctionTimedOut:
        warnings.warn(f"Run {cfg.name} timed out after {timeout}s", RunFailedWarning)
        return RunRecord(params=run_params(cfg, baseline=baseline), config=cfg, error=f"timed out after {timeout}s")
    except Exception as e:
        warnings.warn(f"Run {cfg.name} failed: \n{traceback.format_exc()}", RunFailedWarning)
        return RunRecord(params=run_params(cfg, baseline=baseline), config=cfg, error=f"{type(e).__name__}: {e}")
    # static scores shared between sweep points are computed once; each run is still charged for them
    record.timings.offline_seconds += offline
    record.timings.total_seconds += offline
    return record

def run_sweep(
    grid : SweepGrid,
    ds : Dataset,
    test_ds : Optional[Dataset] = None,
    *,
    out_dir : Union[str, Path, None] = None,
    jobs : int = 1,
    timeout : Optional[float] = None,
    progress : bool = False,
    data : Any = None,
) -> list[RunRecord]:
    """
    One run per grid point. Invalid points and failing runs are recorded with their error
    and the sweep goes on. With out_dir, every record is written as soon as it is available,
    in grid order, by this process only.
    """
    records : list[Optional[RunRecord]] = []
    tasks : list[tuple[int, tuple]] = []
    static_cache : dict[tuple[str, int], tuple[PolicySpec, float]] = {}
    for point in grid.points():
        try:
            cfg = grid.build(point)
            offline = 0.0
            if cfg.policy.is_static:
                cache_key = (repr(cfg.policy.static_source), cfg.seed)
                if cache_key not in static_cache:
                    static_cache[cache_key] = prepare_static_scores(cfg.policy, ds, cfg.learner, cfg.seed)
                scored, offline = static_cache[cache_key]
                cfg = attrs.evolve(cfg, policy=cfg.policy.with_static_scores(scored.static_scores))
        except Exception as e:
            warnings.warn(f"Sweep point {point} rejected: {e}", RunFailedWarning)
            records.append(_failed_record(point, grid.base, e))
            continue
        tasks.append((len(records), (cfg, ds, test_ds, timeout, False, offline)))
        records.append(None)
    if grid.baseline:
        for seed in grid.seeds:
            tasks.append((len(records), (attrs.evolve(grid.base, seed=seed), ds, test_ds, timeout, True, 0.0)))
            records.append(None)
    writer = RunWriter(out_dir, data=data) if out_dir is not None else None
    written = 0

    def flush():
        nonlocal written
        while written < len(records) and records[written] is not None:
            if writer is not None:
                writer.write(records[written])
            written += 1

    flush()
    bar = None
    if progress:
        from tqdm import tqdm
        bar = tqdm(total=len(tasks), unit="run")
    payloads = [task for _, task in tasks]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = executor.map(_execute, payloads)
            for (index, _), record in zip(tasks, results):
                records[index] = record
                flush()
                if bar is not None:
                    bar.update(1)
    else:
        for (index, _), payload in zip(tasks, payloads):
            records[index] = _execute(payload)
            flush()
            if bar is not None:
                bar.update(1)
    if bar is not None:
        bar.close()
    return [record for record in records if record is not None]

class RunWriter:
    """
    Persists run records under one directory: a shared results CSV plus per-run
    selection history, per-epoch metrics, config echo and scoreboard snapshot.
    """
    def __init__(self, out_dir : Union[str, Path], results_name : str = "results.csv", *, data : Any = None):
        self.out_dir = Path(out_dir)
        self.data = data
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.results_path = self.out_dir / results_name

    def write(self, record : RunRecord):
        append_results_row(self.results_path, record)
        write_run(record, self.out_dir, data=self.data)

def append_results_row(path : Union[str, Path], record : RunRecord):
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    t = record.timings
    row = dict(record.params)
    row.update(
        final_test_acc=repr(float(record.final_test_acc)),
        score_seconds=f"{t.score_seconds:.6f}",
        train_seconds=f"{t.train_seconds:.6f}",
        total_seconds=f"{t.total_seconds:.6f}",
    )
    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        if new:
            writer.writeheader()
        writer.writerow({column: row[column] for column in RESULT_COLUMNS})

def write_history(path : Union[str, Path], selections : Sequence[np.ndarray], *, n_samples : int, k : int):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# n_samples={n_samples} k={k}\n")
        for index, selected in enumerate(selections):
            f.write(" ".join([str(index)] + [str(int(i)) for i in np.sort(selected)]) + "\n")

def read_history(path : Union[str, Path]) -> tuple[list[np.ndarray], dict[str, int]]:
    """
    Parse a selection history file into per-checkpoint id arrays and its header values.
    """
    meta : dict[str, int] = {}
    history : list[np.ndarray] = []
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, value = item.partition("=")
                    meta[key] = int(value)
                continue
            fields = line.split()
            try:
                index = int(fields[0])
                ids = np.array([int(v) for v in fields[1:]], dtype=np.int64)
            except ValueError as e:
                raise InvalidArgument(f"{path}:{line_number}: {e}") from e
            if index != len(history):
                raise InvalidArgument(f"{path}:{line_number}: expected checkpoint {len(history)}, got {index}")
            history.append(ids)
    return history, meta

def write_epochs(path : Union[str, Path], epochs : Sequence[EpochRecord]):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "lr", "train_loss", "train_accuracy", "test_accuracy", "batches"])
        for e in epochs:
            writer.writerow([e.epoch, repr(e.lr), repr(e.train_loss), repr(e.train_accuracy), repr(e.test_accuracy), e.batches])

def write_run(record : RunRecord, out_dir : Union[str, Path], *, data : Any = None) -> dict[str, Path]:
    """
    Write the per-run files of a record. Returns the written paths by kind.
    data, a DataConfig, is echoed into the config file so the run can be rebuilt from it alone.
    """
    from .config import dump_config
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / record.run_id
    paths : dict[str, Path] = {}
    if record.config is not None:
        paths["config"] = stem.with_name(stem.name + ".config")
        paths["config"].write_text(dump_config(record.config, data), encoding="utf-8")
    if record.epochs:
        paths["epochs"] = stem.with_name(stem.name + ".epochs.csv")
        write_epochs(paths["epochs"], record.epochs)
    if record.selections:
        paths["history"] = stem.with_name(stem.name + ".history")
        n = record.scoreboard.n_samples if record.scoreboard is not None else max(int(s.max()) for s in record.selections) + 1
        write_history(paths["history"], record.selections, n_samples=n, k=record.k)
    if record.scoreboard is not None:
        paths["scoreboard"] = stem.with_name(stem.name + ".scoreboard.csv")
        paths["scoreboard"].write_bytes(record.scoreboard.snapshot(record.ids))
    if record.error is not None:
        paths["error"] = stem.with_name(stem.name + ".error")
        paths["error"].write_text(record.error + "\n", encoding="utf-8")
    return paths
