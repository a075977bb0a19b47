"""Experiment runner: paired DQN / IDEM-DQN comparisons, dynamic-environment
runs with scheduled change events, and learning-rate x beta1 ablation grids.

Every replica (variant, seed, grid cell) is fully isolated and seeded from
its replica seed, so baseline and IDEM runs of the same seed share their
network initialisation, exploration, replay and environment streams.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agent import Agent, AgentConfig, EvalResult, Variant, evaluate, stream
from .charts import emit_loss_chart
from .env import (
    ChangeEvent,
    EventKind,
    FrozenLake,
    inject_goal_relocation,
    inject_tile_stability_change,
)
from .errors import ConfigError
from .qnet import QNetwork, save_checkpoint

log = logging.getLogger(__name__)

METRICS_COLUMNS = ("seed", "episode", "steps", "return", "win", "mean_loss", "eta_last", "td_mean", "change_event")
EVAL_COLUMNS = ("episode", "steps", "return", "win")
LOSS_COLUMNS = ("train_step", "loss")
SUMMARY_COLUMNS = ("variant", "avg_winning_steps", "win_rate", "avg_reward", "avg_loss", "n_seeds")
SCHEDULE_LABEL = "default dynamic schedule (an engineering choice, adjustable via flags)"


@dataclass
class DynamicSchedule:
    """Change events at episode boundaries with random integer gaps.

    ``kinds`` is cycled in order; an empty tuple yields no events at all.
    """

    gap_range: tuple[int, int] = (100, 300)
    kinds: tuple[EventKind, ...] = (EventKind.GOAL_RELOCATION, EventKind.TILE_STABILITY)
    tile_fraction: float = 0.25
    slip_range: tuple[float, float] = (0.0, 0.5)
    label: str = SCHEDULE_LABEL

    def __post_init__(self):
        self.kinds = tuple(EventKind(k) for k in self.kinds)
        self.gap_range = tuple(int(g) for g in self.gap_range)
        self.slip_range = tuple(float(s) for s in self.slip_range)
        lo, hi = self.gap_range
        if not 1 <= lo <= hi:
            raise ConfigError(f"gap_range must satisfy 1 <= lo <= hi, got {self.gap_range}")

    def event_episodes(self, episodes: int, rng: np.random.Generator) -> list[int]:
        if not self.kinds:
            return []
        lo, hi = self.gap_range
        out, ep = [], 0
        while True:
            ep += int(rng.integers(lo, hi + 1))
            if ep >= episodes:
                return out
            out.append(ep)

    def to_dict(self) -> dict:
        return {"gap_range": list(self.gap_range), "kinds": [k.value for k in self.kinds],
                "tile_fraction": self.tile_fraction, "slip_range": list(self.slip_range), "label": self.label}


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    map: str = "4x4"
    slippery: bool = True
    max_steps: int | None = None
    agent: AgentConfig = field(default_factory=AgentConfig)
    variants: tuple[str, ...] = ("dqn", "idem")
    seeds: tuple[int, ...] = tuple(range(10))
    eval_episodes: int = 1000
    schedule: DynamicSchedule | None = None
    output_dir: Path | None = None
    workers: int = 1
    loss_window: int = 500
    save_checkpoints: bool = True

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        self.variants = tuple(Variant(v).value for v in self.variants)
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not self.variants:
            raise ConfigError("at least one variant is required")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")
        if self.loss_window < 1:
            raise ConfigError("loss_window must be >= 1")
        if self.output_dir is not None:
            self.output_dir = Path(self.output_dir)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "map": str(self.map), "slippery": self.slippery, "max_steps": self.max_steps,
            "agent": self.agent.to_dict(), "variants": list(self.variants), "seeds": list(self.seeds),
            "eval_episodes": self.eval_episodes, "loss_window": self.loss_window,
            "schedule": self.schedule.to_dict() if self.schedule else None,
        }

    def make_env(self, seed: int) -> FrozenLake:
        return FrozenLake.from_name(self.map, self.slippery, self.max_steps, seed=stream(seed, "env"))


@dataclass
class MetricsRecord:
    seed: int
    episode: int
    steps: int
    ret: float
    win: bool
    mean_loss: float | None
    eta_last: float
    td_mean: float
    change_event: bool

    def row(self) -> list:
        return [self.seed, self.episode, self.steps, self.ret, self.win, self.mean_loss,
                self.eta_last, self.td_mean, self.change_event]


@dataclass
class ReplicaResult:
    variant: str
    seed: int
    records: list[MetricsRecord]
    evaluation: EvalResult
    final_losses: list[float]
    events: list[ChangeEvent]
    recoveries: list[int | None]
    params: np.ndarray
    config: AgentConfig

    @property
    def avg_loss(self) -> float | None:
        return float(np.mean(self.final_losses)) if self.final_losses else None


@dataclass
class SummaryRow:
    variant: str
    avg_winning_steps: float | None
    win_rate: float
    avg_reward: float
    avg_loss: float | None
    n_seeds: int
    per_seed: dict[str, list] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def row(self) -> list:
        return [self.variant, self.avg_winning_steps, self.win_rate, self.avg_reward, self.avg_loss, self.n_seeds]


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    summaries: dict[str, SummaryRow]
    replicas: list[ReplicaResult]
    files: list[Path] = field(default_factory=list)

    @property
    def baseline(self) -> SummaryRow:
        return self.summaries[Variant.VANILLA.value]

    @property
    def idem(self) -> SummaryRow:
        return self.summaries[Variant.IDEM.value]


def _mean_or_none(values: Iterable[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def summarize(variant: str, replicas: Sequence[ReplicaResult]) -> SummaryRow:
    """Seed-mean summary; winning steps and loss skip seeds where they are undefined."""
    per_seed = {
        "seed": [r.seed for r in replicas],
        "win_rate": [r.evaluation.win_rate for r in replicas],
        "avg_winning_steps": [r.evaluation.avg_winning_steps for r in replicas],
        "avg_reward": [r.evaluation.avg_reward for r in replicas],
        "avg_loss": [r.avg_loss for r in replicas],
    }
    recoveries = [x for r in replicas for x in r.recoveries]
    if any(r.events for r in replicas):
        per_seed["recovery_episodes"] = [r.recoveries for r in replicas]
        per_seed["n_events"] = [len(r.events) for r in replicas]
        per_seed["mean_recovery"] = [_mean_or_none(r.recoveries) for r in replicas]
    row = SummaryRow(
        variant=variant,
        avg_winning_steps=_mean_or_none(per_seed["avg_winning_steps"]),
        win_rate=float(np.mean(per_seed["win_rate"])),
        avg_reward=float(np.mean(per_seed["avg_reward"])),
        avg_loss=_mean_or_none(per_seed["avg_loss"]),
        n_seeds=len(replicas),
        per_seed=per_seed,
    )
    if recoveries:
        row.per_seed["unrecovered_events"] = [sum(x is None for x in r.recoveries) for r in replicas]
    return row


def recovery_times(wins: Sequence[bool], event_episodes: Sequence[int], window: int = 100,
                   min_window: int = 10) -> list[int | None]:
    """Episodes after each event until the post-event win rate regains its pre-event level.

    The pre-event level is the win rate over the ``window`` episodes before
    the event. After the event, the rate at ``k`` episodes is taken over the
    last ``min(k, window)`` post-event episodes, and only ``k >= min_window``
    counts. ``None`` means no recovery before the next event or the end.
    """
    wins = np.asarray(wins, dtype=float)
    out: list[int | None] = []
    bounds = list(event_episodes) + [len(wins)]
    for e, end in zip(event_episodes, bounds[1:]):
        before = wins[max(0, e - window):e]
        if before.size == 0:
            out.append(None)
            continue
        level = before.mean()
        found = None
        for k in range(min_window, end - e + 1):
            if wins[e + max(0, k - window):e + k].mean() >= level:
                found = k
                break
        out.append(found)
    return out


def run_replica(spec: ExperimentSpec, variant: str, seed: int, config: AgentConfig | None = None) -> ReplicaResult:
    """Train one agent for ``config.episodes`` episodes, then evaluate it greedily."""
    cfg = (config or spec.agent).for_variant(variant).replace(seed=seed)
    env = spec.make_env(seed)
    agent = Agent(cfg, env.n_states, env.n_actions)
    sched_rng = stream(seed, "schedule")
    event_eps = spec.schedule.event_episodes(cfg.episodes, sched_rng) if spec.schedule else []
    pending = dict(zip(event_eps, range(len(event_eps))))
    events: list[ChangeEvent] = []
    records: list[MetricsRecord] = []
    for ep in range(cfg.episodes):
        k = pending.get(ep)
        if k is not None:
            kind = spec.schedule.kinds[k % len(spec.schedule.kinds)]
            if kind is EventKind.GOAL_RELOCATION:
                events.append(inject_goal_relocation(env, sched_rng, ep))
            else:
                events.append(inject_tile_stability_change(env, sched_rng, ep, spec.schedule.tile_fraction,
                                                           spec.schedule.slip_range))
        res = agent.run_episode(env)
        records.append(MetricsRecord(seed, ep, res.steps, res.ret, res.win, res.mean_loss,
                                     res.eta_last, res.td_mean, k is not None))
    evaluation = evaluate(agent.net, env, spec.eval_episodes, stream(seed, "eval"))
    wins = [r.win for r in records]
    return ReplicaResult(
        variant=cfg.variant.value,
        seed=seed,
        records=records,
        evaluation=evaluation,
        final_losses=agent.losses[-spec.loss_window:],
        events=events,
        recoveries=recovery_times(wins, [e.episode_index for e in events]),
        params=agent.net.params.copy(),
        config=cfg,
    )


def _run_task(task):
    spec, variant, seed, config = task
    return run_replica(spec, variant, seed, config)


def _run_tasks(tasks: list, workers: int) -> list[ReplicaResult]:
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_task, tasks))
    return [_run_task(t) for t in tasks]


def _execute(spec: ExperimentSpec) -> ExperimentResult:
    tasks = [(spec, v, s, None) for s in spec.seeds for v in spec.variants]
    replicas = _run_tasks(tasks, spec.workers)
    summaries = {v: summarize(v, [r for r in replicas if r.variant == v]) for v in spec.variants}
    result = ExperimentResult(spec, summaries, replicas)
    if spec.output_dir is not None:
        result.files = write_outputs(result)
    return result


def run_comparison(spec: ExperimentSpec) -> ExperimentResult:
    """Train every variant on every seed of a static map and summarise greedy evaluation."""
    return _execute(spec)


def run_dynamic(spec: ExperimentSpec) -> ExperimentResult:
    """Like :func:`run_comparison`, with change events injected per ``spec.schedule``."""
    if spec.schedule is None:
        raise ConfigError("run_dynamic needs a DynamicSchedule")
    return _execute(spec)


@dataclass
class GridSpec:
    learning_rates: tuple[float, ...]
    beta1_values: tuple[float, ...]
    base: ExperimentSpec = field(default_factory=ExperimentSpec)

    def __post_init__(self):
        self.learning_rates = tuple(float(x) for x in self.learning_rates)
        self.beta1_values = tuple(float(x) for x in self.beta1_values)
        if not self.learning_rates or not self.beta1_values:
            raise ConfigError("ablation axes must be nonempty")
        if any(lr <= 0 for lr in self.learning_rates):
            raise ConfigError("learning rates must be > 0")
        if any(not 0.0 <= b < 1.0 for b in self.beta1_values):
            raise ConfigError("beta1 values must lie in [0, 1)")

    @property
    def cells(self) -> list[tuple[float, float]]:
        return [(lr, b1) for lr in self.learning_rates for b1 in self.beta1_values]

    def cell_config(self, lr: float, beta1: float) -> AgentConfig:
        return self.base.agent.for_variant(Variant.IDEM).replace(lr=lr, beta1=beta1)


@dataclass
class AblationResult:
    grid: GridSpec
    summaries: dict[tuple[float, float], SummaryRow]
    errors: dict[tuple[float, float], str]
    files: list[Path] = field(default_factory=list)

    def best_cell(self, metric: str = "win_rate") -> tuple[float, float]:
        """Cell with the highest ``metric``; ties go to the first cell in grid order."""
        best, best_val = None, -math.inf
        for cell in self.grid.cells:
            row = self.summaries.get(cell)
            if row is None:
                continue
            val = getattr(row, metric)
            if val is not None and val > best_val:
                best, best_val = cell, val
        if best is None:
            raise ConfigError("no ablation cell completed")
        return best


def _ablation_task(task):
    spec, seed, config = task
    try:
        return run_replica(spec, Variant.IDEM.value, seed, config)
    except Exception as exc:  # per-cell failure is recorded, the grid continues
        return f"{type(exc).__name__}: {exc}"


def run_ablation(grid: GridSpec) -> AblationResult:
    """IDEM-DQN training for every (learning rate, beta1) cell and seed."""
    spec = grid.base
    tasks = [(spec, seed, grid.cell_config(lr, b1)) for lr, b1 in grid.cells for seed in spec.seeds]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            outcomes = list(pool.map(_ablation_task, tasks))
    else:
        outcomes = [_ablation_task(t) for t in tasks]
    summaries, errors = {}, {}
    n = len(spec.seeds)
    for i, cell in enumerate(grid.cells):
        chunk = outcomes[i * n:(i + 1) * n]
        failed = [c for c in chunk if isinstance(c, str)]
        if failed:
            errors[cell] = failed[0]
            log.warning("ablation cell lr=%g beta1=%g failed: %s", cell[0], cell[1], failed[0])
            continue
        summaries[cell] = summarize(Variant.IDEM.value, chunk)
    result = AblationResult(grid, summaries, errors)
    if spec.output_dir is not None:
        result.files = write_ablation_outputs(result)
    return result


# ---------------------------------------------------------------- output

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def write_csv(rows: Iterable, path: str | Path, columns: Sequence[str]) -> Path:
    """Header plus one row per item; items are sequences or objects with ``row()``.

    Floats are written with 9 significant digits, booleans as 1/0 and
    ``None`` as an empty field.
    """
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for item in rows:
            values = item.row() if hasattr(item, "row") else list(item)
            if len(values) != len(columns):
                raise ConfigError(f"row has {len(values)} fields, expected {len(columns)}")
            writer.writerow([_fmt(v) for v in values])
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _opt_float(text: str) -> float | None:
    return float(text) if text != "" else None


def read_metrics_csv(path: str | Path) -> list[MetricsRecord]:
    return [
        MetricsRecord(int(r["seed"]), int(r["episode"]), int(r["steps"]), float(r["return"]), r["win"] == "1",
                      _opt_float(r["mean_loss"]), float(r["eta_last"]), float(r["td_mean"]),
                      r["change_event"] == "1")
        for r in read_csv(path)
    ]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, EventKind):
        return obj.value
    return obj


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_outputs(result: ExperimentResult) -> list[Path]:
    """Write config.json, per-replica CSVs and checkpoints, summary.json, summary.csv and loss.svg."""
    spec = result.spec
    out = spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    files = [write_json(spec.to_dict(), out / "config.json")]
    for r in result.replicas:
        tag = f"{r.variant}_{r.seed}"
        files.append(write_csv(r.records, out / f"metrics_{tag}.csv", METRICS_COLUMNS))
        ev = r.evaluation
        files.append(write_csv(zip(range(len(ev.steps)), ev.steps, ev.returns, ev.wins),
                               out / f"eval_{tag}.csv", EVAL_COLUMNS))
        files.append(write_csv(enumerate(r.final_losses), out / f"losses_{tag}.csv", LOSS_COLUMNS))
        if spec.save_checkpoints:
            net = QNetwork(spec.make_env(r.seed).n_states, 4, r.config.hidden, r.params, r.config.activation)
            ckpt = out / f"qnet_{tag}.npz"
            save_checkpoint(ckpt, net)
            files.append(ckpt)
    summary = {
        "experiment": spec.name,
        "summaries": {v: s.to_dict() for v, s in result.summaries.items()},
        "events": {f"{r.variant}_{r.seed}": [{"episode": e.episode_index, "kind": e.kind.value,
                                              "payload": e.payload} for e in r.events]
                   for r in result.replicas if r.events},
    }
    if spec.schedule is not None:
        summary["schedule"] = spec.schedule.to_dict()
    files.append(write_json(summary, out / "summary.json"))
    files.append(write_csv(result.summaries.values(), out / "summary.csv", SUMMARY_COLUMNS))
    series = {v: [rec for r in result.replicas if r.variant == v for rec in r.records] for v in spec.variants}
    if sum(len(s) for s in series.values()) >= 2:
        files.append(emit_loss_chart(series, out / "loss.svg", title=f"{spec.name}: training loss"))
    return files


def write_ablation_outputs(result: AblationResult) -> list[Path]:
    spec = result.grid.base
    out = spec.output_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg = spec.to_dict()
    cfg["grid"] = {"learning_rates": list(result.grid.learning_rates),
                   "beta1_values": list(result.grid.beta1_values)}
    files = [write_json(cfg, out / "config.json")]
    rows = []
    for cell in result.grid.cells:
        s = result.summaries.get(cell)
        if s is None:
            rows.append([cell[0], cell[1], None, None, None, None, 0, result.errors.get(cell, "")])
        else:
            rows.append([cell[0], cell[1], s.win_rate, s.avg_winning_steps, s.avg_reward, s.avg_loss, s.n_seeds, ""])
    files.append(write_csv(rows, out / "ablation.csv",
                           ("lr", "beta1", "win_rate", "avg_winning_steps", "avg_reward", "avg_loss",
                            "n_seeds", "error")))
    for metric in ("win_rate", "avg_loss"):
        matrix = []
        for lr in result.grid.learning_rates:
            row = [lr]
            for b1 in result.grid.beta1_values:
                s = result.summaries.get((lr, b1))
                row.append(getattr(s, metric) if s else None)
            matrix.append(row)
        cols = ["lr\\beta1"] + [_fmt(b) for b in result.grid.beta1_values]
        files.append(write_csv(matrix, out / f"ablation_{metric}.csv", cols))
    files.append(write_json({f"{lr:g},{b1:g}": s.to_dict() for (lr, b1), s in result.summaries.items()}
                            | {"errors": {f"{lr:g},{b1:g}": e for (lr, b1), e in result.errors.items()}},
                            out / "summary.json"))
    return files
