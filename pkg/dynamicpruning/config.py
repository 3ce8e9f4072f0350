"""
Experiment configuration files: flat key=value INI sections, validated before any compute.
"""
from __future__ import annotations
import configparser, difflib, io, math
from pathlib import Path
from typing import Any, Callable, Optional, Union
import attrs
import numpy as np
from .commons import derive_seed
from .dataset import Dataset, gen_blobs, gen_engineered_blobs, load_csv, apply_imbalance, downsample, split_holdout
from .driver import RunConfig, SweepGrid
from .exceptions import ConfigError, InvalidArgument
from .learner import Architecture, LearnerConfig
from .policies import PolicySpec, StaticSource, ALL_KINDS, STATIC_KINDS

REQUIRED = object()
SWEEP_KINDS = tuple(kind for kind in ALL_KINDS if kind != "always_random")

@attrs.define(frozen=True)
class Key:
    parse : Callable[[str], Any]
    default : Any = REQUIRED
    check : Optional[Callable[[Any], bool]] = None
    rule : str = ""

def _bool(text : str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")

def _finite_float(text : str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"not a finite number: {text!r}")
    return value

def _list(item : Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(text : str) -> tuple:
        return tuple(item(part) for part in text.replace(",", " ").split())
    return parse

def _str(text : str) -> str:
    return text.strip()

def _one_of(*choices) -> Callable[[Any], bool]:
    return lambda value: value in choices

SCHEMA : dict[str, dict[str, Key]] = {
    "run": {
        "epochs": Key(int, REQUIRED, lambda v: v >= 1, ">= 1"),
        "prune_period": Key(int, REQUIRED, lambda v: v >= 1, ">= 1"),
        "prune_rate": Key(_finite_float, REQUIRED, lambda v: 0 <= v < 1, "in [0, 1)"),
        "seed": Key(int, 0, lambda v: v >= 0, ">= 0"),
        "variance_rule": Key(_str, "literal", _one_of("literal", "welford"), "literal or welford"),
        "run_id": Key(_str, ""),
        "dataset_ref": Key(_str, ""),
    },
    "policy": {
        "kind": Key(_str, REQUIRED, _one_of(*ALL_KINDS), "one of " + ", ".join(ALL_KINDS)),
        "alpha": Key(_finite_float, 0.8, lambda v: 0 < v <= 1, "in (0, 1]"),
        "epsilon": Key(_finite_float, 0.1, lambda v: 0 <= v <= 1, "in [0, 1]"),
        "c": Key(_finite_float, 1.0, lambda v: v >= 0, ">= 0"),
        "static_method": Key(_str, "el2n", _one_of("el2n", "forget", "file"), "el2n, forget or file"),
        "static_path": Key(_str, ""),
        "static_models": Key(int, 5, lambda v: v >= 1, ">= 1"),
        "static_epochs": Key(int, 5, lambda v: v >= 1, ">= 1"),
        "anchor": Key(_list(int), (), lambda v: all(i >= 0 for i in v), "non-negative positions"),
    },
    "learner": {
        "arch": Key(_str, "softmax", _one_of("softmax", "mlp"), "softmax or mlp"),
        "hidden": Key(int, 0, lambda v: v >= 0, ">= 0"),
        "lr0": Key(_finite_float, 0.1, lambda v: v >= 0, ">= 0"),
        "momentum": Key(_finite_float, 0.9, lambda v: 0 <= v < 1, "in [0, 1)"),
        "nesterov": Key(_bool, True),
        "weight_decay": Key(_finite_float, 5e-4, lambda v: v >= 0, ">= 0"),
        "batch_size": Key(int, 128, lambda v: v >= 1, ">= 1"),
        "milestones": Key(_list(int), (60, 120, 160), lambda v: all(m >= 0 for m in v), "non-negative epochs"),
        "decay_factor": Key(_finite_float, 5.0, lambda v: v > 0, "> 0"),
    },
    "data": {
        "source": Key(_str, "engineered", _one_of("blobs", "engineered", "csv"), "blobs, engineered or csv"),
        "path": Key(_str, ""),
        "test_path": Key(_str, ""),
        "n_per_class": Key(int, 500, lambda v: v >= 1, ">= 1"),
        "classes": Key(int, 4, lambda v: v >= 2, ">= 2"),
        "dim": Key(int, 16, lambda v: v >= 1, ">= 1"),
        "spread": Key(_finite_float, 0.5, lambda v: v > 0, "> 0"),
        "easy_fraction": Key(_finite_float, 0.25, lambda v: 0 <= v <= 1, "in [0, 1]"),
        "hard_fraction": Key(_finite_float, 0.10, lambda v: 0 <= v <= 1, "in [0, 1]"),
        "test_fraction": Key(_finite_float, 0.2, lambda v: 0 < v < 1, "in (0, 1)"),
        "imbalance": Key(_list(_finite_float), (), lambda v: all(0 < r <= 1 for r in v), "rates in (0, 1]"),
        "downsample": Key(int, 0, lambda v: v >= 0, ">= 0"),
        "seed": Key(int, 0, lambda v: v >= 0, ">= 0"),
    },
    "sweep": {
        "prune_rates": Key(_list(_finite_float), (), lambda v: all(0 <= r < 1 for r in v), "rates in [0, 1)"),
        "policies": Key(_list(_str), (), lambda v: all(p in SWEEP_KINDS for p in v), "kinds from " + ", ".join(SWEEP_KINDS)),
        "prune_periods": Key(_list(int), (), lambda v: all(p >= 1 for p in v), "periods >= 1"),
        "epsilons": Key(_list(_finite_float), (), lambda v: all(0 <= e <= 1 for e in v), "values in [0, 1]"),
        "cs": Key(_list(_finite_float), (), lambda v: all(c >= 0 for c in v), "values >= 0"),
        "seeds": Key(_list(int), (), lambda v: all(s >= 0 for s in v), "seeds >= 0"),
        "baseline": Key(_bool, False),
        "jobs": Key(int, 1, lambda v: v >= 1, ">= 1"),
        "timeout": Key(_finite_float, 0.0, lambda v: v >= 0, ">= 0 (0 disables)"),
    },
    "analysis": {
        "hi": Key(_finite_float, 0.9, lambda v: 0 < v <= 1, "in (0, 1]"),
        "lo": Key(_finite_float, 0.1, lambda v: 0 <= v < 1, "in [0, 1)"),
    },
}

@attrs.define(frozen=True)
class DataConfig:
    source : str = "engineered"
    path : str = ""
    test_path : str = ""
    n_per_class : int = 500
    classes : int = 4
    dim : int = 16
    spread : float = 0.5
    easy_fraction : float = 0.25
    hard_fraction : float = 0.10
    test_fraction : float = 0.2
    imbalance : tuple[float, ...] = ()
    downsample : int = 0
    seed : int = 0

    @property
    def ref(self) -> str:
        if self.source == "csv":
            return f"csv:{self.path}"
        return f"{self.source}:{self.n_per_class}x{self.classes}:d{self.dim}:s{self.seed}"

@attrs.define(frozen=True)
class ExperimentConfig:
    run : RunConfig
    data : DataConfig
    sweep : Optional[SweepGrid] = None
    jobs : int = 1
    timeout : Optional[float] = None
    hi : float = 0.9
    lo : float = 0.1

def _suggest(name : str, known) -> str:
    match = difflib.get_close_matches(name, list(known), n=1, cutoff=0.5)
    return f" (did you mean {match[0]!r}?)" if match else ""

def _read_values(parser : configparser.ConfigParser) -> dict[str, dict[str, Any]]:
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, f"unknown section{_suggest(section, SCHEMA)}")
    values : dict[str, dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        present = dict(parser.items(section)) if parser.has_section(section) else {}
        for key in present:
            if key not in keys:
                raise ConfigError(f"{section}.{key}", f"unknown key{_suggest(key, keys)}")
        out = values[section] = {}
        for key, spec in keys.items():
            name = f"{section}.{key}"
            if key not in present:
                if spec.default is REQUIRED:
                    raise ConfigError(name, "missing required key")
                out[key] = spec.default
                continue
            try:
                value = spec.parse(present[key])
            except (TypeError, ValueError) as e:
                raise ConfigError(name, f"cannot parse {present[key]!r}: {e}") from None
            if spec.check is not None and not spec.check(value):
                raise ConfigError(name, f"value {present[key]!r} violates constraint {spec.rule}")
            out[key] = value
    return values

def _static_source(p : dict[str, Any]) -> StaticSource:
    if p["static_method"] == "file" and not p["static_path"]:
        raise ConfigError("policy.static_path", "required when static_method = file")
    return StaticSource(
        p["static_method"],
        path=p["static_path"] if p["static_method"] == "file" else None,
        models=p["static_models"],
        epochs=p["static_epochs"],
    )

def _build_policy(p : dict[str, Any]) -> PolicySpec:
    source = _static_source(p) if p["kind"] in STATIC_KINDS else None
    if p["kind"] == "always_random" and not p["anchor"]:
        raise ConfigError("policy.anchor", "required for kind always_random")
    if p["kind"] != "always_random" and p["anchor"]:
        raise ConfigError("policy.anchor", "only used by kind always_random")
    return PolicySpec(
        p["kind"],
        alpha=p["alpha"],
        epsilon=p["epsilon"],
        c=p["c"],
        static_source=source,
        anchor=np.array(p["anchor"], dtype=np.int64) if p["anchor"] else None,
    )

def _build_learner(l : dict[str, Any]) -> LearnerConfig:
    if l["arch"] == "mlp" and l["hidden"] < 1:
        raise ConfigError("learner.hidden", "mlp needs hidden >= 1")
    arch = Architecture("mlp", l["hidden"]) if l["arch"] == "mlp" else Architecture("softmax")
    return LearnerConfig(
        arch=arch,
        lr0=l["lr0"],
        momentum=l["momentum"],
        nesterov=l["nesterov"],
        weight_decay=l["weight_decay"],
        batch_size=l["batch_size"],
        milestones=l["milestones"],
        decay_factor=l["decay_factor"],
    )

def parse_config_text(text : str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError("<file>", f"syntax error: {e}") from None
    values = _read_values(parser)
    r = values["run"]
    if r["epochs"] % r["prune_period"]:
        raise ConfigError("run.prune_period", f"epochs ({r['epochs']}) must be divisible by prune_period ({r['prune_period']})")
    data = DataConfig(**values["data"])
    if data.source == "csv" and not data.path:
        raise ConfigError("data.path", "required when source = csv")
    if data.imbalance and data.source != "csv" and len(data.imbalance) != data.classes:
        raise ConfigError("data.imbalance", f"expected {data.classes} rates")
    if data.easy_fraction + data.hard_fraction > 1:
        raise ConfigError("data.hard_fraction", "easy_fraction + hard_fraction must be at most 1")
    a = values["analysis"]
    if not a["lo"] < a["hi"]:
        raise ConfigError("analysis.lo", "lo must be below hi")
    try:
        run = RunConfig(
            epochs=r["epochs"],
            prune_period=r["prune_period"],
            prune_rate=r["prune_rate"],
            policy=_build_policy(values["policy"]),
            learner=_build_learner(values["learner"]),
            seed=r["seed"],
            variance_rule=r["variance_rule"],
            dataset_ref=r["dataset_ref"],
            run_id=r["run_id"],
        )
    except InvalidArgument as e:
        raise ConfigError("policy", str(e)) from e
    sweep = None
    s = values["sweep"]
    if parser.has_section("sweep"):
        sweep = SweepGrid(
            base=run,
            prune_rates=s["prune_rates"] or (run.prune_rate,),
            policies=s["policies"] or (run.policy.kind,),
            prune_periods=s["prune_periods"] or (run.prune_period,),
            epsilons=s["epsilons"] or (run.policy.epsilon,),
            cs=s["cs"] or (run.policy.c,),
            seeds=s["seeds"] or (run.seed,),
            baseline=s["baseline"],
            static_source=_static_source(values["policy"]) if any(kind in STATIC_KINDS for kind in s["policies"]) else None,
        )
    return ExperimentConfig(run=run, data=data, sweep=sweep, jobs=s["jobs"], timeout=s["timeout"] or None, hi=a["hi"], lo=a["lo"])

def parse_config(path : Union[str, Path]) -> ExperimentConfig:
    """
    Read and fully validate a configuration file. Errors name the offending section.key.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("<file>", f"cannot read {path}: {e}") from e
    return parse_config_text(text)

def _fmt(value : Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list, np.ndarray)):
        return ", ".join(_fmt(v.item() if isinstance(v, np.generic) else v) for v in value)
    return str(value)

def dump_config(cfg : RunConfig, data : Optional[DataConfig] = None) -> str:
    """
    Echo a RunConfig in the configuration grammar; parse_config_text reads it back to an equal config.
    Static scores held only in memory are not written; their source is.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser["run"] = {
        "epochs": _fmt(cfg.epochs),
        "prune_period": _fmt(cfg.prune_period),
        "prune_rate": _fmt(float(cfg.prune_rate)),
        "seed": _fmt(cfg.seed),
        "variance_rule": cfg.variance_rule,
        "run_id": cfg.run_id,
        "dataset_ref": cfg.dataset_ref,
    }
    p = cfg.policy
    policy = {"kind": p.kind, "alpha": _fmt(float(p.alpha)), "epsilon": _fmt(float(p.epsilon)), "c": _fmt(float(p.c))}
    if p.static_source is not None:
        policy.update(
            static_method=p.static_source.method,
            static_path=p.static_source.path or "",
            static_models=_fmt(p.static_source.models),
            static_epochs=_fmt(p.static_source.epochs),
        )
    if p.anchor is not None:
        policy["anchor"] = _fmt(p.anchor)
    parser["policy"] = policy
    l = cfg.learner
    parser["learner"] = {
        "arch": l.arch.kind,
        "hidden": _fmt(l.arch.hidden or 0),
        "lr0": _fmt(float(l.lr0)),
        "momentum": _fmt(float(l.momentum)),
        "nesterov": _fmt(l.nesterov),
        "weight_decay": _fmt(float(l.weight_decay)),
        "batch_size": _fmt(l.batch_size),
        "milestones": _fmt(l.milestones),
        "decay_factor": _fmt(float(l.decay_factor)),
    }
    if data is not None:
        parser["data"] = {field.name: _fmt(getattr(data, field.name)) for field in attrs.fields(DataConfig)}
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()

def build_datasets(data : DataConfig) -> tuple[Dataset, Dataset]:
    """
    Materialize the (train, test) pair a data section describes. Deterministic in data.seed.
    """
    if data.source == "csv":
        ds = load_csv(data.path, num_classes=None)
        test = load_csv(data.test_path, num_classes=ds.num_classes) if data.test_path else None
    elif data.source == "blobs":
        ds, test = gen_blobs(data.n_per_class, data.classes, data.dim, data.spread, data.seed), None
    else:
        ds = gen_engineered_blobs(data.n_per_class, data.classes, data.dim, data.spread, data.seed,
                                  easy_fraction=data.easy_fraction, hard_fraction=data.hard_fraction)
        test = None
    if test is None:
        ds, test = split_holdout(ds, data.test_fraction, derive_seed(data.seed, "split"))
    if data.imbalance:
        ds = apply_imbalance(ds, data.imbalance, derive_seed(data.seed, "data", 1))
    if data.downsample:
        ds = downsample(ds, data.downsample, derive_seed(data.seed, "data", 2))
    return ds, test
