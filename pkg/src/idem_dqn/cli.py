"""Command line entry point: ``idem-dqn {compare,dynamic,ablation,eval,selftest}``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .agent import AgentConfig, evaluate, stream
from .env import EventKind, FrozenLake
from .errors import ConfigError, MapError
from .harness import DynamicSchedule, ExperimentSpec, GridSpec, run_ablation, run_comparison, run_dynamic, write_json
from .qnet import load_checkpoint

log = logging.getLogger("idem_dqn")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _add_agent_flags(p: argparse.ArgumentParser) -> None:
    d = AgentConfig()
    g = p.add_argument_group("agent")
    g.add_argument("--gamma", type=float, default=d.gamma, help="discount factor")
    g.add_argument("--epsilon", type=float, default=d.epsilon, help="exploration probability")
    g.add_argument("--lr", type=float, default=d.lr, help="base learning rate")
    g.add_argument("--kappa", type=float, default=d.kappa, help="step-size decay factor (IDEM)")
    g.add_argument("--lam", type=float, default=d.lam, help="replay weighting factor (IDEM)")
    g.add_argument("--window", type=int, default=d.window, help="moving-average window of batch |TD|")
    g.add_argument("--batch-size", type=int, default=d.batch_size)
    g.add_argument("--buffer-capacity", type=int, default=d.buffer_capacity)
    g.add_argument("--warmup", type=int, default=d.warmup)
    g.add_argument("--episodes", type=int, default=d.episodes)
    g.add_argument("--optimizer", choices=("adam", "sgd"), default=d.optimizer.value)
    g.add_argument("--beta1", type=float, default=d.beta1)
    g.add_argument("--beta2", type=float, default=d.beta2)
    g.add_argument("--eps-adam", type=float, default=d.eps_adam)
    g.add_argument("--hidden", type=int, default=d.hidden)
    g.add_argument("--activation", choices=("relu", "tanh"), default=d.activation)
    g.add_argument("--exponent-cap", type=float, default=d.exponent_cap)
    g.add_argument("--target-sync-every", type=int, default=None)


def _add_env_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("environment")
    g.add_argument("--map", default="4x4", help="builtin 4x4 / 8x8 or a map file path")
    g.add_argument("--slippery", action=argparse.BooleanOptionalAction, default=True)
    g.add_argument("--max-steps", type=int, default=None)


def _add_run_flags(p: argparse.ArgumentParser, seeds: int) -> None:
    g = p.add_argument_group("run")
    g.add_argument("--seeds", type=int, default=seeds, help="number of replicate seeds")
    g.add_argument("--seed-base", type=int, default=0, help="first seed")
    g.add_argument("--eval-episodes", type=int, default=1000)
    g.add_argument("--loss-window", type=int, default=500, help="final training steps averaged for avg_loss")
    g.add_argument("--workers", type=int, default=1, help="parallel replica processes")
    g.add_argument("--out", type=Path, default=None, help="output directory")
    g.add_argument("--config", type=Path, default=None, help="JSON file whose keys override flags")


def _add_schedule_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dynamic schedule")
    g.add_argument("--gap-min", type=int, default=100)
    g.add_argument("--gap-max", type=int, default=300)
    g.add_argument("--event-kinds", default="goal_relocation,tile_stability",
                   help="comma-separated cycle of event kinds; empty for none")
    g.add_argument("--tile-fraction", type=float, default=0.25)
    g.add_argument("--slip-min", type=float, default=0.0)
    g.add_argument("--slip-max", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="idem-dqn", description="DQN vs IDEM-DQN experiments on FrozenLake")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compare", help="static comparison of DQN and IDEM-DQN")
    _add_env_flags(p)
    _add_agent_flags(p)
    _add_run_flags(p, seeds=10)

    p = sub.add_parser("dynamic", help="comparison with goal moves and tile-stability changes")
    _add_env_flags(p)
    _add_agent_flags(p)
    _add_run_flags(p, seeds=10)
    _add_schedule_flags(p)

    p = sub.add_parser("ablation", help="IDEM-DQN learning-rate x beta1 grid")
    _add_env_flags(p)
    _add_agent_flags(p)
    _add_run_flags(p, seeds=5)
    p.add_argument("--lrs", type=_float_list, default=[1e-5, 1e-4, 1e-3, 1e-2])
    p.add_argument("--beta1s", type=_float_list, default=[0.5, 0.8, 0.9, 0.99])

    p = sub.add_parser("eval", help="greedy evaluation of a saved network")
    _add_env_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--eval-episodes", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="write the result as JSON here")
    p.add_argument("--config", type=Path, default=None)

    p = sub.add_parser("selftest", help="gradient, sampling and environment invariant checks")
    p.add_argument("--quick", action="store_true", help="smaller sample sizes")
    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    path = getattr(args, "config", None)
    if path is None:
        return
    try:
        overrides = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(overrides, dict):
        raise ConfigError("config file must hold a JSON object")
    for key, value in overrides.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest in ("command", "config") or not hasattr(args, dest):
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        setattr(args, dest, value)


def _agent_config(args) -> AgentConfig:
    names = {f.name for f in dataclasses.fields(AgentConfig)} - {"variant", "seed"}
    return AgentConfig(**{n: getattr(args, n) for n in names})


def _spec(args, name: str, schedule=None) -> ExperimentSpec:
    out = args.out if args.out is not None else Path("results") / name
    return ExperimentSpec(
        name=name, map=args.map, slippery=args.slippery, max_steps=args.max_steps, agent=_agent_config(args),
        seeds=tuple(range(args.seed_base, args.seed_base + args.seeds)), eval_episodes=args.eval_episodes,
        loss_window=args.loss_window, schedule=schedule, output_dir=out, workers=args.workers,
    )


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.6g}"


def _print_summaries(summaries) -> None:
    print(f"{'variant':<8} {'win_rate':>9} {'avg_win_steps':>14} {'avg_reward':>11} {'avg_loss':>12} {'seeds':>6}")
    for s in summaries:
        print(f"{s.variant:<8} {_fmt(s.win_rate):>9} {_fmt(s.avg_winning_steps):>14} {_fmt(s.avg_reward):>11} "
              f"{_fmt(s.avg_loss):>12} {s.n_seeds:>6}")


def _cmd_compare(args) -> int:
    result = run_comparison(_spec(args, "compare"))
    _print_summaries(result.summaries.values())
    print(f"outputs: {result.spec.output_dir}")
    return EXIT_OK


def _cmd_dynamic(args) -> int:
    kinds = tuple(EventKind(k.strip()) for k in args.event_kinds.split(",") if k.strip())
    schedule = DynamicSchedule((args.gap_min, args.gap_max), kinds, args.tile_fraction,
                               (args.slip_min, args.slip_max))
    result = run_dynamic(_spec(args, "dynamic", schedule))
    _print_summaries(result.summaries.values())
    for s in result.summaries.values():
        if "mean_recovery" in s.per_seed:
            print(f"{s.variant}: mean recovery per seed {[_fmt(x) for x in s.per_seed['mean_recovery']]}")
    print(f"outputs: {result.spec.output_dir}")
    return EXIT_OK


def _cmd_ablation(args) -> int:
    grid = GridSpec(tuple(args.lrs), tuple(args.beta1s), _spec(args, "ablation"))
    result = run_ablation(grid)
    for (lr, b1), s in result.summaries.items():
        print(f"lr={lr:<8g} beta1={b1:<5g} win_rate={_fmt(s.win_rate)} avg_loss={_fmt(s.avg_loss)}")
    for (lr, b1), err in result.errors.items():
        print(f"lr={lr:<8g} beta1={b1:<5g} FAILED: {err}")
    if result.summaries:
        lr, b1 = result.best_cell()
        print(f"best win-rate cell: lr={lr:g} beta1={b1:g}")
    print(f"outputs: {grid.base.output_dir}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    net, _ = load_checkpoint(args.checkpoint)
    env = FrozenLake.from_name(args.map, args.slippery, args.max_steps)
    if env.n_states != net.n_states:
        raise ConfigError(f"checkpoint expects {net.n_states} states, map has {env.n_states}")
    res = evaluate(net, env, args.eval_episodes, stream(args.seed, "eval"))
    payload = {"win_rate": res.win_rate, "avg_winning_steps": res.avg_winning_steps,
               "avg_reward": res.avg_reward, "episodes": args.eval_episodes}
    print(json.dumps(payload))
    if args.out is not None:
        write_json(payload, args.out)
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from .selftest import run_all

    results = run_all(quick=args.quick)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


COMMANDS = {"compare": _cmd_compare, "dynamic": _cmd_dynamic, "ablation": _cmd_ablation,
            "eval": _cmd_eval, "selftest": _cmd_selftest}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"idem-dqn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, MapError, FileNotFoundError) as exc:
        print(f"idem-dqn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"idem-dqn: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
