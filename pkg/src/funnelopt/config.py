"""Experiment configuration: JSON in, validated dataclasses out.

The JSON schema is fixed (problem / data / inner / funnel / run / out
sections with the exact key names below); unknown keys are rejected so
typos fail loudly before any compute.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ConfigError
from .funnel import FunnelConfig
from .preconditioners import KINDS, PreconditionerKind

PROBLEM_NAMES = ("quadratic", "rosenbrock", "logistic")
DATA_SOURCES = ("idx", "synthetic")

__all__ = [
    "ProblemSpec",
    "SegmentSpec",
    "DataSpec",
    "RunSpec",
    "ExperimentConfig",
    "load_config",
    "parse_config",
]


def _take(section: dict, where: str, allowed: dict):
    """Pop known keys with defaults; reject anything left over."""
    out = {}
    section = dict(section)
    for key, default in allowed.items():
        out[key] = section.pop(key, default)
    if section:
        raise ConfigError(f"unknown keys in '{where}': {sorted(section)}")
    return out


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    dim: int
    classes: int = 0
    diag: tuple = ()    # quadratic spectrum; defaults to 1..dim
    init: tuple = ()    # optional explicit start point, concatenated groups

    def __post_init__(self):
        if self.name not in PROBLEM_NAMES:
            raise ConfigError(f"problem.name must be one of {PROBLEM_NAMES}")
        if self.dim < 1:
            raise ConfigError("problem.dim must be >= 1")
        if self.name == "logistic" and self.classes < 2:
            raise ConfigError("problem.classes must be >= 2 for logistic")
        if self.diag and len(self.diag) != self.dim:
            raise ConfigError("problem.diag must have problem.dim entries")


@dataclass(frozen=True)
class SegmentSpec:
    rotation: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("schedule steps must be >= 1")


@dataclass(frozen=True)
class DataSpec:
    source: str = "synthetic"
    images: str = ""
    labels: str = ""
    schedule: tuple = ()
    batch_size: int = 128

    def __post_init__(self):
        if self.source not in DATA_SOURCES:
            raise ConfigError(f"data.source must be one of {DATA_SOURCES}")
        if self.source == "idx" and (not self.images or not self.labels):
            raise ConfigError("data.source 'idx' needs data.images and data.labels")
        if self.batch_size < 1:
            raise ConfigError("data.batch_size must be >= 1")


@dataclass(frozen=True)
class RunSpec:
    steps: int = 100
    seeds: tuple = (0,)
    trace_stride: int = 1
    gain_samples: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("run.steps must be >= 1")
        if not self.seeds:
            raise ConfigError("run.seeds must be nonempty")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("run.seeds must be nonnegative integers")
        if self.trace_stride < 1:
            raise ConfigError("run.trace_stride must be >= 1")
        if self.gain_samples < 0:
            raise ConfigError("run.gain_samples must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    data: DataSpec
    inner: PreconditionerKind
    funnel_enabled: bool
    funnel: FunnelConfig
    run: RunSpec
    out_dir: str = "out"


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a parsed JSON document into an ExperimentConfig."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    doc = dict(doc)
    problem_doc = doc.pop("problem", None)
    if problem_doc is None:
        raise ConfigError("config needs a 'problem' section")
    data_doc = doc.pop("data", {})
    inner_doc = doc.pop("inner", {})
    funnel_doc = doc.pop("funnel", {})
    run_doc = doc.pop("run", {})
    out_doc = doc.pop("out", {})
    if doc:
        raise ConfigError(f"unknown top-level sections: {sorted(doc)}")

    p = _take(problem_doc, "problem", {
        "name": None, "dim": None, "classes": 0, "diag": (), "init": (),
    })
    if p["name"] is None or p["dim"] is None:
        raise ConfigError("problem.name and problem.dim are required")
    problem = ProblemSpec(
        name=str(p["name"]), dim=int(p["dim"]), classes=int(p["classes"]),
        diag=tuple(float(x) for x in p["diag"]),
        init=tuple(float(x) for x in p["init"]),
    )

    d = _take(data_doc, "data", {
        "source": "synthetic", "images": "", "labels": "",
        "schedule": (), "batch_size": 128,
    })
    schedule = tuple(
        SegmentSpec(rotation=float(seg.get("rotation", 0)), steps=int(seg["steps"]))
        if isinstance(seg, dict) and "steps" in seg
        else _bad_segment(seg)
        for seg in d["schedule"]
    )
    data = DataSpec(
        source=str(d["source"]), images=str(d["images"]), labels=str(d["labels"]),
        schedule=schedule, batch_size=int(d["batch_size"]),
    )

    i = _take(inner_doc, "inner", {
        "kind": "identity_sgd", "epsilon": 1e-8,
        "second_moment_decay": 0.999, "first_moment_decay": 0.9, "ema_decay": 0.9,
    })
    if i["kind"] not in KINDS:
        raise ConfigError(f"inner.kind must be one of {KINDS}")
    inner = PreconditionerKind(
        tag=str(i["kind"]), epsilon=float(i["epsilon"]),
        second_moment_decay=float(i["second_moment_decay"]),
        first_moment_decay=float(i["first_moment_decay"]),
        ema_decay=float(i["ema_decay"]),
    )

    f = _take(funnel_doc, "funnel", {
        "enabled": True, "eta": 0.1, "mu": 0.9, "beta": 0.9,
        "gamma_p": 1e-4, "gamma_s": 1e-3, "normalized": False,
        "clip_max": 1e3, "scale_scope": "per_group", "variant": "egu",
    })
    funnel = FunnelConfig(
        eta=float(f["eta"]), mu=float(f["mu"]), beta=float(f["beta"]),
        gamma_p=float(f["gamma_p"]), gamma_s=float(f["gamma_s"]),
        normalized=bool(f["normalized"]), clip_max=float(f["clip_max"]),
        scale_scope=str(f["scale_scope"]), variant=str(f["variant"]),
    )

    r = _take(run_doc, "run", {
        "steps": 100, "seeds": (0,), "trace_stride": 1, "gain_samples": 0,
    })
    run = RunSpec(
        steps=int(r["steps"]), seeds=tuple(int(s) for s in r["seeds"]),
        trace_stride=int(r["trace_stride"]), gain_samples=int(r["gain_samples"]),
    )

    o = _take(out_doc, "out", {"dir": "out"})

    cfg = ExperimentConfig(
        problem=problem, data=data, inner=inner,
        funnel_enabled=bool(f["enabled"]), funnel=funnel,
        run=run, out_dir=str(o["dir"]),
    )
    _cross_validate(cfg)
    return cfg


def _bad_segment(seg):
    raise ConfigError(f"schedule segments need 'rotation' and 'steps', got {seg!r}")


def _cross_validate(cfg: ExperimentConfig):
    total = sum(seg.steps for seg in cfg.data.schedule)
    if cfg.data.schedule and cfg.run.steps > total:
        raise ConfigError(
            f"run.steps {cfg.run.steps} exceeds the schedule total {total}"
        )
    if cfg.problem.name == "logistic":
        if cfg.data.source == "idx" and cfg.data.schedule and len(cfg.data.schedule) > 3:
            raise ConfigError("idx source supports at most 3 schedule segments")
    else:
        if cfg.data.schedule:
            raise ConfigError(f"problem '{cfg.problem.name}' does not take a data schedule")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)
