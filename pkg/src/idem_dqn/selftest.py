"""Invariant checks runnable outside pytest (``idem-dqn selftest``)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .agent import adaptive_lr
from .env import LEFT, N_ACTIONS, FrozenLake
from .qnet import backward, backward_indexed, init_network
from .replay import Mode, ReplayBuffer, Transition, weight_of


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _loss(net, x, actions, targets) -> float:
    z = x @ net.w1.T + net.b1
    h = np.maximum(z, 0.0) if net.activation == "relu" else np.tanh(z)
    q = h @ net.w2.T + net.b2
    err = targets - q[np.arange(len(actions)), actions]
    return float(np.mean(err * err))


def finite_difference_gradient(net, x, actions, targets, h: float = 1e-5) -> np.ndarray:
    """Central differences of the batch loss w.r.t. every flat parameter."""
    grad = np.empty_like(net.params)
    for i in range(net.params.size):
        orig = net.params[i]
        net.params[i] = orig + h
        up = _loss(net, x, actions, targets)
        net.params[i] = orig - h
        down = _loss(net, x, actions, targets)
        net.params[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad


def gradient_check(n_pairs: int = 100, seed: int = 0, h: float = 1e-5, rtol: float = 1e-4,
                   atol: float = 1e-9) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    failures = 0
    for _ in range(n_pairs):
        n_states = int(rng.integers(2, 17))
        hidden = int(rng.integers(1, 13))
        net = init_network(n_states, N_ACTIONS, hidden, seed=rng)
        net.b1[...] = rng.uniform(-0.5, 0.5, hidden)
        net.b2[...] = rng.uniform(-0.5, 0.5, N_ACTIONS)
        batch = int(rng.integers(1, 33))
        states = rng.integers(n_states, size=batch)
        actions = rng.integers(N_ACTIONS, size=batch)
        targets = rng.normal(size=batch)
        x = np.eye(n_states)[states]
        numeric = finite_difference_gradient(net, x, actions, targets, h)
        for analytic in (backward(net, x, actions, targets).flat,
                         backward_indexed(net, states, actions, targets).flat):
            gap = np.abs(analytic - numeric)
            scale = np.maximum(np.abs(analytic), np.abs(numeric))
            if np.any(gap > rtol * scale + atol):
                failures += 1
            worst = max(worst, float(np.max(gap / np.maximum(scale, atol / rtol))))
    return CheckResult("gradient check", failures == 0,
                       f"{n_pairs} networks x 2 backprop paths, worst relative error {worst:.2e} (limit {rtol:g})")


def sampling_chi_square(n_vectors: int = 20, draws: int = 100_000, alpha: float = 1e-3,
                        seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    sizes = [2, 3000] + [int(s) for s in rng.integers(2, 3001, size=max(n_vectors - 2, 0))]
    min_p = 1.0
    for size in sizes[:n_vectors]:
        buf = ReplayBuffer(capacity=size, mode=Mode.WEIGHTED, lam=0.5)
        for d in rng.uniform(-3.0, 3.0, size=size):
            buf.push(Transition(0, 0, 0.0, 0, False), float(d))
        batch = buf.sample(draws, rng)
        observed = np.bincount(batch.indices, minlength=size)
        expected = buf.probabilities() * draws
        p = stats.chisquare(observed, expected).pvalue
        min_p = min(min_p, p)
    passed = min_p > alpha
    return CheckResult("replay chi-square", passed,
                       f"{n_vectors} weight vectors, {draws} draws each, min p-value {min_p:.4f} (alpha {alpha:g})")


def slip_frequencies(n: int = 1_000_000, seed: int = 0) -> tuple[np.ndarray, int]:
    """Relative frequencies of (Up, Left, Down) for action Left from an interior 4x4 cell."""
    env = FrozenLake.from_name("4x4", slippery=True, seed=seed)
    start = 9  # row 2, col 1: Up -> 5, Left -> 8, Down -> 13 are distinct cells
    outcome = {5: 0, 8: 1, 13: 2}
    counts = np.zeros(3, dtype=np.int64)
    for _ in range(n):
        env.position, env.steps_taken, env.terminated = start, 0, False
        counts[outcome[env.step(LEFT).next_state]] += 1
    return counts / n, n


def env_frequency(n: int = 1_000_000, seed: int = 0) -> CheckResult:
    freq, n = slip_frequencies(n, seed)
    sigma = math.sqrt((1 / 3) * (2 / 3) / n)
    dev = np.abs(freq - 1 / 3)
    return CheckResult("slip frequencies", bool(np.all(dev <= 3 * sigma)),
                       f"{n} steps, frequencies {np.round(freq, 5).tolist()}, max |dev| {dev.max():.2e} "
                       f"(3 sigma {3 * sigma:.2e})")


def transition_sums() -> CheckResult:
    worst = 0.0
    for name in ("4x4", "8x8"):
        env = FrozenLake.from_name(name, slippery=True)
        for s in range(env.n_states):
            for a in range(N_ACTIONS):
                worst = max(worst, abs(sum(p for _, p, _, _ in env.transition_model(s, a)) - 1.0))
    return CheckResult("transition model sums", worst <= 1e-12, f"max |sum - 1| = {worst:.1e} on 4x4 and 8x8")


def unit_identities() -> CheckResult:
    checks = [
        math.isclose(weight_of(0.0, 0.5), 1.0, rel_tol=1e-12, abs_tol=0.0),
        math.isclose(weight_of(math.log(2.0), 1.0), 2.0, rel_tol=1e-12, abs_tol=0.0),
        math.isclose(adaptive_lr(3e-4, 2.0, 0.0), 3e-4, rel_tol=1e-12, abs_tol=0.0),
        math.isclose(adaptive_lr(1e-4, 1.0, math.log(10.0)), 1e-5, rel_tol=1e-12, abs_tol=0.0),
        all(adaptive_lr(1e-4, 1.0, d + 0.1) < adaptive_lr(1e-4, 1.0, d) for d in np.linspace(0, 5, 11)),
    ]
    return CheckResult("weight / step-size identities", all(checks), f"{sum(checks)}/{len(checks)} identities hold")


def run_all(quick: bool = False) -> list[CheckResult]:
    if quick:
        return [gradient_check(10), sampling_chi_square(5, 20_000), env_frequency(100_000),
                transition_sums(), unit_identities()]
    return [gradient_check(), sampling_chi_square(), env_frequency(), transition_sums(), unit_identities()]
