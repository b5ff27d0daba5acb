"""Experiment runner: seeded training loops, sweeps, traces, gradient checks.

One run is strictly serial and bit-reproducible from (config, seed): batches
come from per-step substreams, trace floats are serialized with 9
significant digits, and wall time lives only in the summary, never in the
trace. Sweep cells are fully independent and may run in parallel.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from . import groups as gr
from . import rng
from .config import ExperimentConfig, SegmentSpec
from .datashift import (
    ShiftSchedule,
    disjoint_split,
    load_idx,
    make_shift_variant,
    next_batch,
    synthetic_shift_stream,
)
from .errors import ConfigError, NumericalError
from .funnel import FunnelConfig, funnel_init, funnel_step
from .preconditioners import PreconditionerKind, init_preconditioner, precondition
from .problems import (
    Batch,
    Problem,
    finite_difference_grad,
    logistic_regression_problem,
    quadratic_problem,
    rosenbrock_problem,
)

__all__ = [
    "TraceRow",
    "TrainResult",
    "train_run",
    "build_problem",
    "build_provider",
    "run_experiment",
    "run_sweep",
    "gradcheck_report",
    "run_gradcheck",
]

FLOAT_FMT = "{:.8e}"  # 9 significant digits, platform-portable


# ---------------------------------------------------------------------------
# batch providers

class EmptyProvider:
    """For objectives that ignore data (quadratic, rosenbrock)."""

    def batch(self, step: int):
        return 0, Batch.empty()


class ScheduleProvider:
    """Segment-scheduled batches over prebuilt dataset variants."""

    def __init__(self, variants, schedule: ShiftSchedule):
        self.variants = variants
        self.schedule = schedule

    def batch(self, step: int):
        segment_idx, _ = self.schedule.segment_of(step)
        return segment_idx, next_batch(self.schedule, self.variants, step)


# ---------------------------------------------------------------------------
# training engine

@dataclass
class TraceRow:
    step: int
    segment_id: int
    loss: float
    top1: float | None
    scales: dict = field(default_factory=dict)       # scope -> value
    gain_mean: dict = field(default_factory=dict)    # group -> value
    gain_min: dict = field(default_factory=dict)
    gain_max: dict = field(default_factory=dict)
    gain_samples: dict = field(default_factory=dict)  # group -> {idx: value}


@dataclass
class TrainResult:
    w: dict
    funnel_state: object
    precond_state: object
    steps: int
    final_loss: float
    final_top1: float | None
    best_top1: float | None
    wall_time_s: float


def _sample_indices(shapes: dict, count: int) -> dict:
    if count <= 0:
        return {name: np.zeros(0, dtype=np.int64) for name in shapes}
    return {
        name: np.unique(np.linspace(0, size - 1, num=min(count, size)).astype(np.int64))
        for name, size in shapes.items()
    }


def train_run(
    problem: Problem,
    w0: dict,
    provider,
    inner: PreconditionerKind,
    funnel_config: FunnelConfig,
    funnel_enabled: bool,
    steps: int,
    *,
    trace_stride: int = 0,
    gain_samples: int = 0,
    on_record=None,
) -> TrainResult:
    """Run one seeded training loop.

    Per step: draw the batch, evaluate loss (and top-1 for classification)
    at the current parameters, compute the raw and pre-conditioned
    gradients, then apply a funnel step or, when disabled, a plain
    heavy-ball step on the pre-conditioned gradient using the same eta/mu.
    Disabled runs allocate no funnel state. A non-finite loss emits a final
    diagnostic record and raises NumericalError.

    on_record(row, w) is invoked every trace_stride steps (if > 0) with the
    loss measured before the update and the gains/scales after it.
    """
    started = time.perf_counter()
    w = gr.clone(gr.as_groups(w0))
    gr.check_shapes(problem.shapes, w, "train_run w0")
    pstate = init_preconditioner(inner, problem.shapes)
    fstate = funnel_init(funnel_config, problem.shapes) if funnel_enabled else None
    baseline_momentum = None if funnel_enabled else gr.zeros_like_shapes(problem.shapes)
    sample_idx = _sample_indices(problem.shapes, gain_samples)

    loss = float("nan")
    top1 = None
    best_top1 = None
    for step in range(steps):
        segment_id, batch = provider.batch(step)
        loss = problem.loss(w, batch)
        top1 = problem.top1(w, batch) if problem.top1 is not None else None
        if top1 is not None:
            best_top1 = top1 if best_top1 is None else max(best_top1, top1)
        if not np.isfinite(loss):
            if on_record is not None:
                on_record(_make_row(step, segment_id, loss, top1, fstate, sample_idx), w)
            raise NumericalError(f"non-finite loss {loss} at step {step}")

        g = problem.grad(w, batch)
        g_tilde = precondition(pstate, g)
        if funnel_enabled:
            funnel_step(fstate, funnel_config, g, g_tilde, w)
        else:
            for name in w:
                nu = baseline_momentum[name]
                nu *= funnel_config.mu
                nu += funnel_config.eta * g_tilde[name]
                w[name] -= nu

        if on_record is not None and trace_stride > 0 and step % trace_stride == 0:
            on_record(_make_row(step, segment_id, loss, top1, fstate, sample_idx), w)

    return TrainResult(
        w=w,
        funnel_state=fstate,
        precond_state=pstate,
        steps=steps,
        final_loss=loss,
        final_top1=top1,
        best_top1=best_top1,
        wall_time_s=time.perf_counter() - started,
    )


def _make_row(step, segment_id, loss, top1, fstate, sample_idx) -> TraceRow:
    row = TraceRow(step=step, segment_id=segment_id, loss=float(loss), top1=top1)
    if fstate is None:
        return row
    row.scales = dict(fstate.scales)
    for name, gains in fstate.gains.items():
        row.gain_mean[name] = float(gains.mean())
        row.gain_min[name] = float(gains.min())
        row.gain_max[name] = float(gains.max())
        idx = sample_idx.get(name)
        if idx is not None and idx.size:
            row.gain_samples[name] = {int(i): float(gains[i]) for i in idx}
    return row


# ---------------------------------------------------------------------------
# experiment assembly

def build_problem(spec) -> tuple[Problem, dict]:
    """Problem plus its deterministic start point."""
    if spec.name == "quadratic":
        diag = np.asarray(spec.diag if spec.diag else np.arange(1, spec.dim + 1), float)
        problem = quadratic_problem(np.diag(diag), np.zeros(spec.dim))
        w0 = {"w": np.ones(spec.dim)}
    elif spec.name == "rosenbrock":
        problem = rosenbrock_problem(spec.dim)
        w0 = {"w": np.zeros(spec.dim)}
    else:
        problem = logistic_regression_problem(spec.dim, spec.classes)
        w0 = {"weights": np.zeros(spec.dim * spec.classes), "bias": np.zeros(spec.classes)}
    if spec.init:
        flat = np.asarray(spec.init, dtype=np.float64)
        sizes = list(problem.shapes.values())
        if flat.shape[0] != sum(sizes):
            raise ConfigError(
                f"problem.init must have {sum(sizes)} entries, got {flat.shape[0]}"
            )
        w0, offset = {}, 0
        for name, size in problem.shapes.items():
            w0[name] = flat[offset : offset + size].copy()
            offset += size
    return problem, w0


def build_provider(cfg: ExperimentConfig, seed: int, steps: int):
    """Data stream for one run; all randomness derives from the run seed."""
    if cfg.problem.name != "logistic":
        return EmptyProvider()

    schedule_spec = cfg.data.schedule or (SegmentSpec(rotation=0.0, steps=steps),)
    if cfg.data.source == "synthetic":
        variants, schedule = synthetic_shift_stream(
            cfg.problem.dim,
            cfg.problem.classes,
            len(schedule_spec),
            seed,
            angles=[seg.rotation for seg in schedule_spec],
            segment_steps=[seg.steps for seg in schedule_spec],
            batch_size=cfg.data.batch_size,
        )
        return ScheduleProvider(variants, schedule)

    dataset = load_idx(cfg.data.images, cfg.data.labels)
    if dataset.features.shape[1] != cfg.problem.dim:
        raise ConfigError(
            f"problem.dim {cfg.problem.dim} does not match "
            f"image feature size {dataset.features.shape[1]}"
        )
    parts = disjoint_split(dataset, len(schedule_spec), seed)
    variants = [
        make_shift_variant(part, int(seg.rotation), seed * 4 + i)
        for i, (part, seg) in enumerate(zip(parts, schedule_spec))
    ]
    schedule = ShiftSchedule(
        segments=tuple((i, seg.steps) for i, seg in enumerate(schedule_spec)),
        batch_size=cfg.data.batch_size,
        seed=seed,
    )
    return ScheduleProvider(variants, schedule)


# ---------------------------------------------------------------------------
# trace serialization

def _fmt(value) -> str:
    if value is None:
        return ""
    return FLOAT_FMT.format(float(value))


class TraceWriter:
    """CSV trace with a fixed column order.

    Funnel-disabled runs carry no scale/gain columns (they have no such
    state); otherwise columns follow: step, segment_id, loss, top1, then
    scale:<scope>, then per group gain_mean/min/max, then sampled gains.
    """

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._header_written = False

    def _header(self, row: TraceRow):
        cols = ["step", "segment_id", "loss", "top1"]
        cols += [f"scale:{scope}" for scope in row.scales]
        for name in row.gain_mean:
            cols += [f"gain_mean:{name}", f"gain_min:{name}", f"gain_max:{name}"]
        for name, samples in row.gain_samples.items():
            cols += [f"gain:{name}:{i}" for i in samples]
        self._writer.writerow(cols)

    def write(self, row: TraceRow, w=None):
        if not self._header_written:
            self._header(row)
            self._header_written = True
        rec = [str(row.step), str(row.segment_id), _fmt(row.loss), _fmt(row.top1)]
        rec += [_fmt(v) for v in row.scales.values()]
        for name in row.gain_mean:
            rec += [_fmt(row.gain_mean[name]), _fmt(row.gain_min[name]), _fmt(row.gain_max[name])]
        for samples in row.gain_samples.values():
            rec += [_fmt(v) for v in samples.values()]
        self._writer.writerow(rec)

    def close(self):
        self._fh.close()


# ---------------------------------------------------------------------------
# top-level commands

def run_experiment(cfg: ExperimentConfig, *, seed=None, out_dir=None):
    """Execute the configured run for every seed; one trace file per seed
    plus a summary.json with per-seed and aggregate entries.
    """
    seeds = (int(seed),) if seed is not None else cfg.run.seeds
    out = out_dir if out_dir is not None else cfg.out_dir
    os.makedirs(out, exist_ok=True)
    problem, w0 = build_problem(cfg.problem)

    summaries = []
    for run_seed in seeds:
        provider = build_provider(cfg, run_seed, cfg.run.steps)
        trace_path = os.path.join(out, f"trace_seed{run_seed}.csv")
        writer = TraceWriter(trace_path)
        try:
            result = train_run(
                problem,
                w0,
                provider,
                cfg.inner,
                cfg.funnel,
                cfg.funnel_enabled,
                cfg.run.steps,
                trace_stride=cfg.run.trace_stride,
                gain_samples=cfg.run.gain_samples,
                on_record=writer.write,
            )
        finally:
            writer.close()
        summaries.append(
            {
                "seed": run_seed,
                "steps": result.steps,
                "final_loss": result.final_loss,
                "final_top1": result.final_top1,
                "best_top1": result.best_top1,
                "wall_time_s": result.wall_time_s,
                "trace": os.path.basename(trace_path),
            }
        )

    summary = {"runs": summaries, "aggregate": _aggregate(summaries)}
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def _aggregate(summaries):
    def stats(key):
        vals = [s[key] for s in summaries if s[key] is not None]
        if not vals:
            return None
        return {"mean": float(np.mean(vals)), "std": float(np.std(vals))}

    return {
        "n_seeds": len(summaries),
        "final_loss": stats("final_loss"),
        "final_top1": stats("final_top1"),
        "best_top1": stats("best_top1"),
    }


def _sweep_cell(args):
    cfg, gamma_p, gamma_s, out = args
    cell_cfg = replace(
        cfg, funnel=replace(cfg.funnel, gamma_p=gamma_p, gamma_s=gamma_s)
    )
    try:
        summary = run_experiment(cell_cfg, out_dir=out)
        return {"gamma_p": gamma_p, "gamma_s": gamma_s, "error": "", **summary["aggregate"]}
    except Exception as exc:  # cell failures must not abort the sweep
        return {
            "gamma_p": gamma_p, "gamma_s": gamma_s,
            "error": f"{type(exc).__name__}: {exc}",
            "n_seeds": 0, "final_loss": None, "final_top1": None, "best_top1": None,
        }


def run_sweep(cfg: ExperimentConfig, gamma_p_grid, gamma_s_grid, seeds, *, out_dir=None, jobs=1):
    """Cartesian (gamma_p, gamma_s) x seeds sweep with per-cell aggregation.

    Cells are independent; any cell failure is recorded in its summary row
    and the sweep continues. Returns the list of cell summaries and writes
    sweep_summary.csv under the output directory.
    """
    if not gamma_p_grid or not gamma_s_grid:
        raise ConfigError("sweep grids must be nonempty")
    out = out_dir if out_dir is not None else cfg.out_dir
    os.makedirs(out, exist_ok=True)
    base = replace(cfg, run=replace(cfg.run, seeds=tuple(int(s) for s in seeds)))
    tasks = [
        (base, float(gp), float(gs), os.path.join(out, f"cell_gp{gp:g}_gs{gs:g}"))
        for gp, gs in product(gamma_p_grid, gamma_s_grid)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_sweep_cell, tasks))
    else:
        cells = [_sweep_cell(task) for task in tasks]

    table_path = os.path.join(out, "sweep_summary.csv")
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["gamma_p", "gamma_s", "n_seeds",
             "final_loss_mean", "final_loss_std",
             "final_top1_mean", "final_top1_std",
             "best_top1_mean", "best_top1_std", "error"]
        )
        for cell in cells:
            writer.writerow(
                [f"{cell['gamma_p']:g}", f"{cell['gamma_s']:g}", cell["n_seeds"]]
                + _stat_cols(cell["final_loss"])
                + _stat_cols(cell["final_top1"])
                + _stat_cols(cell["best_top1"])
                + [cell["error"]]
            )
    return cells


def _stat_cols(stat):
    if stat is None:
        return ["", ""]
    return [_fmt(stat["mean"]), _fmt(stat["std"])]


# ---------------------------------------------------------------------------
# gradient checking

def _gradcheck_problems(seed: int):
    gen = rng.substream(seed, rng.INIT)
    q = np.diag(np.linspace(1.0, 5.0, 5))
    yield quadratic_problem(q, gen.standard_normal(5)), lambda: (
        {"w": gen.uniform(-2, 2, 5)}, Batch.empty())
    yield rosenbrock_problem(5), lambda: ({"w": gen.uniform(-2, 2, 5)}, Batch.empty())
    logistic = logistic_regression_problem(8, 4)

    def draw_logistic():
        w = {"weights": gen.standard_normal(32), "bias": gen.standard_normal(4)}
        batch = Batch(gen.standard_normal((6, 8)), gen.integers(0, 4, 6))
        return w, batch

    yield logistic, draw_logistic


def max_relative_error(analytic: dict, numeric: dict) -> float:
    """max over coordinates of |a - f| / (1 + |a|)."""
    worst = 0.0
    for name in analytic:
        err = np.abs(analytic[name] - numeric[name]) / (1.0 + np.abs(analytic[name]))
        worst = max(worst, float(err.max()))
    return worst


def gradcheck_report(draws: int = 25, h: float = 1e-6, threshold: float = 1e-5, seed: int = 0):
    """Compare every built-in analytic gradient with central differences.

    Returns (report rows, all_passed); each row carries the worst relative
    error over the random draws for one problem.
    """
    rows = []
    ok = True
    for problem, draw in _gradcheck_problems(seed):
        worst = 0.0
        for _ in range(draws):
            w, batch = draw()
            analytic = problem.grad(w, batch)
            numeric = finite_difference_grad(problem, w, batch, h)
            worst = max(worst, max_relative_error(analytic, numeric))
        passed = worst < threshold
        ok = ok and passed
        rows.append({"problem": problem.name, "max_rel_err": worst, "pass": passed})
    return rows, ok


def run_gradcheck(draws: int = 25, h: float = 1e-6, threshold: float = 1e-5, seed: int = 0) -> int:
    """Print the gradcheck report; exit code 0 on pass, 4 on breach."""
    rows, ok = gradcheck_report(draws=draws, h=h, threshold=threshold, seed=seed)
    for row in rows:
        status = "pass" if row["pass"] else "FAIL"
        print(f"{row['problem']:12s} max_rel_err={row['max_rel_err']:.3e}  {status}")
    print("gradcheck:", "pass" if ok else "FAIL", f"(threshold {threshold:g})")
    return 0 if ok else 4
