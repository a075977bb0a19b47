"""Acceptance suite: one test per criterion, each reporting a single PASS/FAIL line.

The heavy training criteria (1-4, 9) run full-length experiments and take
well over an hour together on one CPU core. Set ``IDEM_ACCEPTANCE_OUT`` to
keep their CSV/JSON outputs; otherwise they go to pytest's tmp directory.

Run directly with ``python tests/test_acceptance.py`` for the lines alone.
"""
from __future__ import annotations

import math
import os
import time
from pathlib import Path

import pytest

from idem_dqn import selftest
from idem_dqn.agent import AgentConfig
from idem_dqn.env import load_map
from idem_dqn.harness import (DynamicSchedule, ExperimentSpec, GridSpec, run_ablation, run_comparison,
                              run_dynamic)

RESULTS: list[str] = []
SEEDS = tuple(range(10))
ABLATION_SEEDS = tuple(range(5))
REFERENCE_8X8 = {"dqn": 0.41, "idem": 0.42}


def report(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2} {title}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)


def out_dir(tmp_path_factory, name: str) -> Path:
    root = os.environ.get("IDEM_ACCEPTANCE_OUT")
    if root:
        path = Path(root) / name
        path.mkdir(parents=True, exist_ok=True)
        return path
    return tmp_path_factory.mktemp(name)


def fmt(x) -> str:
    return "n/a" if x is None else f"{x:.4g}"


@pytest.mark.slow
def test_static_4x4_winning_steps(tmp_path_factory):
    t0 = time.time()
    spec = ExperimentSpec(name="static-4x4", map="4x4", agent=AgentConfig(), seeds=SEEDS,
                          output_dir=out_dir(tmp_path_factory, "static-4x4"))
    res = run_comparison(spec)
    base, idem = res.baseline.avg_winning_steps, res.idem.avg_winning_steps
    ok = (base is not None and idem is not None and idem <= base + 1.0
          and 6.0 <= base <= 100.0 and 6.0 <= idem <= 100.0)
    report(1, "static 4x4 winning steps", ok,
           f"IDEM {fmt(idem)} vs DQN {fmt(base)} (need IDEM <= DQN + 1, both in [6, 100]); "
           f"{len(SEEDS)} seeds, {time.time() - t0:.0f}s")
    assert ok


@pytest.mark.slow
def test_static_8x8_win_rate(tmp_path_factory):
    t0 = time.time()
    spec = ExperimentSpec(name="static-8x8", map="8x8", agent=AgentConfig(), seeds=SEEDS,
                          output_dir=out_dir(tmp_path_factory, "static-8x8"))
    res = run_comparison(spec)
    base, idem = res.baseline.win_rate, res.idem.win_rate
    near = (abs(base - REFERENCE_8X8["dqn"]) <= 0.15 and abs(idem - REFERENCE_8X8["idem"]) <= 0.15)
    ok = near and idem >= base - 0.02
    report(2, "static 8x8 win rate", ok,
           f"DQN {base:.3f} (ref 0.41 +/- 0.15), IDEM {idem:.3f} (ref 0.42 +/- 0.15), "
           f"need IDEM >= DQN - 0.02; {len(SEEDS)} seeds, {time.time() - t0:.0f}s")
    assert ok


@pytest.mark.slow
def test_dynamic_environment(tmp_path_factory):
    t0 = time.time()
    spec = ExperimentSpec(name="dynamic-4x4", map="4x4", agent=AgentConfig(), seeds=SEEDS,
                          schedule=DynamicSchedule(), output_dir=out_dir(tmp_path_factory, "dynamic-4x4"))
    res = run_dynamic(spec)
    b, i = res.baseline, res.idem
    ok = i.win_rate >= b.win_rate and i.avg_loss is not None and b.avg_loss is not None and i.avg_loss <= b.avg_loss
    report(3, "dynamic environment", ok,
           f"win rate IDEM {i.win_rate:.3f} vs DQN {b.win_rate:.3f}; avg loss IDEM {fmt(i.avg_loss)} vs "
           f"DQN {fmt(b.avg_loss)} (need IDEM >= and <= respectively); {len(SEEDS)} paired seeds, "
           f"{time.time() - t0:.0f}s")
    assert ok


@pytest.mark.slow
def test_ablation_grid(tmp_path_factory):
    t0 = time.time()
    base = ExperimentSpec(name="ablation", map="4x4", agent=AgentConfig(), variants=("idem",),
                          seeds=ABLATION_SEEDS, output_dir=out_dir(tmp_path_factory, "ablation"))
    grid = GridSpec((1e-5, 1e-4, 1e-3, 1e-2), (0.5, 0.8, 0.9, 0.99), base)
    res = run_ablation(grid)
    lr, beta1 = res.best_cell("win_rate")
    ok = not res.errors and 1e-4 <= lr <= 1e-3 and 0.8 <= beta1 <= 0.9
    table = ", ".join(f"({c[0]:g},{c[1]:g})={s.win_rate:.3f}" for c, s in res.summaries.items())
    report(4, "ablation argmax cell", ok,
           f"best lr={lr:g} beta1={beta1:g} (need lr in [1e-4, 1e-3], beta1 in [0.8, 0.9]); "
           f"{len(res.errors)} failed cells; {time.time() - t0:.0f}s; win rates {table}")
    assert ok


def test_gradient_oracle():
    r = selftest.gradient_check(n_pairs=100, h=1e-5, rtol=1e-4)
    report(5, "gradient oracle", r.passed, r.detail)
    assert r.passed


def test_sampling_oracle():
    r = selftest.sampling_chi_square(n_vectors=20, draws=100_000, alpha=1e-3)
    report(6, "sampling oracle", r.passed, r.detail)
    assert r.passed


def test_environment_oracle():
    freq = selftest.env_frequency(1_000_000)
    sums = selftest.transition_sums()
    ok = freq.passed and sums.passed
    report(7, "environment oracle", ok, f"{freq.detail}; {sums.detail}")
    assert ok


def test_unit_identities():
    r = selftest.unit_identities()
    report(8, "weight and step-size identities", r.passed, r.detail)
    assert r.passed


@pytest.mark.slow
def test_deterministic_map_optimal_path(tmp_path_factory):
    t0 = time.time()
    optimum = load_map("4x4").shortest_path()
    spec = ExperimentSpec(name="deterministic-4x4", map="4x4", slippery=False, agent=AgentConfig(),
                          variants=("idem",), seeds=SEEDS, eval_episodes=1,
                          output_dir=out_dir(tmp_path_factory, "deterministic-4x4"))
    res = run_comparison(spec)
    steps = [r.evaluation.avg_winning_steps for r in res.replicas]
    hits = sum(s is not None and math.isclose(s, optimum) for s in steps)
    ok = optimum == 6 and hits >= 8
    report(9, "deterministic 4x4 optimal path", ok,
           f"{hits}/{len(SEEDS)} seeds reach the goal in {optimum} steps (need >= 8); greedy steps {steps}; "
           f"{time.time() - t0:.0f}s")
    assert ok


def _csv_bytes(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.csv"))}


def test_determinism(tmp_path):
    small = AgentConfig(episodes=150, warmup=100, batch_size=64, buffer_capacity=500)
    runs = {
        "compare": lambda d: run_comparison(ExperimentSpec(map="4x4", agent=small, seeds=(0, 1),
                                                           eval_episodes=50, output_dir=d)),
        "dynamic": lambda d: run_dynamic(ExperimentSpec(map="4x4", agent=small, seeds=(3,), eval_episodes=50,
                                                        schedule=DynamicSchedule((20, 40)), output_dir=d)),
        "ablation": lambda d: run_ablation(GridSpec(
            (1e-4, 1e-3), (0.9,), ExperimentSpec(map="4x4", agent=small, variants=("idem",), seeds=(0,),
                                                 eval_episodes=20, output_dir=d))),
    }
    mismatched, n_files = [], 0
    for name, run in runs.items():
        first, second = tmp_path / f"{name}-a", tmp_path / f"{name}-b"
        run(first)
        run(second)
        a, b = _csv_bytes(first), _csv_bytes(second)
        n_files += len(a)
        if not a or a != b:
            mismatched.append(name)
    ok = not mismatched
    report(10, "determinism", ok,
           f"{n_files} CSV files from compare, dynamic and ablation runs compared byte for byte; "
           f"mismatches: {mismatched or 'none'}")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
