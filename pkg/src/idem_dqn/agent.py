"""DQN / IDEM-DQN agent: epsilon-greedy acting, TD errors, weighted replay
and a TD-error-driven learning-rate schedule.

The IDEM variant samples replay by ``exp(lam * |td|)`` weights and scales the
optimizer step size by ``exp(-kappa * mean|td|)`` over a moving window. The
vanilla variant samples uniformly and keeps the base step size.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .env import FrozenLake
from .errors import BufferBelowWarmup, ConfigError
from .qnet import (
    AdamState,
    QNetwork,
    adam_step,
    backward_indexed,
    forward,
    init_network,
    sgd_step,
    state_q_table,
)
from .replay import DEFAULT_EXPONENT_CAP, Mode, ReplayBuffer, Transition

_STREAMS = {"init": 0, "explore": 1, "replay": 2, "env": 3, "eval": 4, "schedule": 5}


def stream(seed: int, role: str) -> np.random.Generator:
    """Independent random generator for one role (``env``, ``replay``, ...) of a replica seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, _STREAMS[role]]))


class Variant(str, enum.Enum):
    VANILLA = "dqn"
    IDEM = "idem"


class OptimizerKind(str, enum.Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    epsilon: float = 0.1
    lr: float = 1e-4
    kappa: float = 1.0
    lam: float = 0.5
    window: int = 100
    batch_size: int = 1000
    buffer_capacity: int = 3000
    warmup: int = 1000
    episodes: int = 3000
    variant: Variant = Variant.IDEM
    optimizer: OptimizerKind = OptimizerKind.ADAM
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    hidden: int = 50
    activation: str = "relu"
    exponent_cap: float = DEFAULT_EXPONENT_CAP
    target_sync_every: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "optimizer", OptimizerKind(self.optimizer))
        checks = [
            (0.0 <= self.gamma < 1.0, "gamma must lie in [0, 1)"),
            (0.0 <= self.epsilon <= 1.0, "epsilon must lie in [0, 1]"),
            (self.lr > 0.0, "lr must be > 0"),
            (self.kappa >= 0.0, "kappa must be >= 0"),
            (self.lam > 0.0, "lam must be > 0"),
            (self.window >= 1, "window must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.buffer_capacity >= 1, "buffer_capacity must be >= 1"),
            (1 <= self.warmup <= self.buffer_capacity, "warmup must lie in [1, buffer_capacity]"),
            (self.episodes >= 0, "episodes must be >= 0"),
            (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0, "Adam betas must lie in [0, 1)"),
            (self.eps_adam > 0.0, "eps_adam must be > 0"),
            (self.hidden >= 1, "hidden must be >= 1"),
            (self.target_sync_every is None or self.target_sync_every >= 1, "target_sync_every must be >= 1"),
            (self.variant is Variant.IDEM or self.kappa == 0.0, "vanilla DQN requires kappa = 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def replay_mode(self) -> Mode:
        return Mode.WEIGHTED if self.variant is Variant.IDEM else Mode.UNIFORM

    def for_variant(self, variant: Variant | str) -> AgentConfig:
        """Same hyperparameters for another variant; vanilla forces ``kappa = 0``."""
        variant = Variant(variant)
        kappa = self.kappa if variant is Variant.IDEM else 0.0
        return dataclasses.replace(self, variant=variant, kappa=kappa)

    def replace(self, **changes) -> AgentConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["variant"] = self.variant.value
        d["optimizer"] = self.optimizer.value
        return d


class TDWindow:
    """Simple moving average over the last ``size`` batch-mean |TD| values."""

    def __init__(self, size: int):
        self.values: deque[float] = deque(maxlen=size)

    def push(self, value: float) -> None:
        self.values.append(float(value))

    @property
    def mean(self) -> float:
        return math.fsum(self.values) / len(self.values) if self.values else 0.0

    def __len__(self) -> int:
        return len(self.values)


def adaptive_lr(lr0: float, kappa: float, td_mean: float) -> float:
    """``lr0 * exp(-kappa * td_mean)``: equals ``lr0`` at zero error, shrinks as errors grow."""
    return lr0 * math.exp(-kappa * td_mean)


def select_action(net: QNetwork, state: int, epsilon: float, rng: np.random.Generator,
                  q: np.ndarray | None = None) -> int:
    """Epsilon-greedy action; greedy ties go to the lowest action index."""
    if rng.random() < epsilon:
        return int(rng.integers(net.n_actions))
    if q is None:
        q = forward(net, _one_hot(state, net.n_states))
    return int(np.argmax(q))


def _one_hot(index: int, n: int) -> np.ndarray:
    x = np.zeros(n)
    x[index] = 1.0
    return x


def td_target(net: QNetwork, reward: float, next_state: int, done: bool, gamma: float) -> float:
    if done:
        return float(reward)
    q_next = forward(net, _one_hot(next_state, net.n_states))
    return float(reward + gamma * np.max(q_next))


def td_error(net: QNetwork, transition: Transition, gamma: float) -> float:
    q = forward(net, _one_hot(transition.state, net.n_states))
    y = td_target(net, transition.reward, transition.next_state, transition.done, gamma)
    return y - float(q[transition.action])


def greedy_policy(net: QNetwork) -> np.ndarray:
    """Greedy action for every state index (lowest index wins ties)."""
    q = forward(net, np.eye(net.n_states))
    return np.argmax(q, axis=1)


@dataclass
class EpisodeResult:
    steps: int
    ret: float
    win: bool
    mean_loss: float | None
    eta_last: float
    td_mean: float
    train_steps: int


@dataclass
class EvalResult:
    steps: np.ndarray
    returns: np.ndarray
    wins: np.ndarray

    @property
    def win_rate(self) -> float:
        return float(np.mean(self.wins))

    @property
    def avg_reward(self) -> float:
        return float(np.mean(self.returns))

    @property
    def avg_winning_steps(self) -> float | None:
        if not self.wins.any():
            return None
        return float(np.mean(self.steps[self.wins]))


def evaluate(net: QNetwork, env: FrozenLake, n_episodes: int, rng: np.random.Generator | int) -> EvalResult:
    """Greedy (epsilon = 0) rollouts on a private copy of ``env``; nothing else is touched."""
    if n_episodes < 1:
        raise ConfigError("n_episodes must be >= 1")
    policy = greedy_policy(net).tolist()
    sim = env.copy()
    sim.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    steps = np.zeros(n_episodes, dtype=np.int64)
    returns = np.zeros(n_episodes)
    wins = np.zeros(n_episodes, dtype=bool)
    for ep in range(n_episodes):
        s = sim.reset()
        total = 0.0
        while True:
            out = sim.step(policy[s])
            total += out.reward
            s = out.next_state
            if out.done or out.truncated:
                break
        steps[ep] = sim.steps_taken
        returns[ep] = total
        wins[ep] = out.done and out.reward > 0.0
    return EvalResult(steps, returns, wins)


class Agent:
    """Network, optimizer state, replay buffer and TD window for one training replica.

    Inputs are one-hot, so every Q-value the agent needs is read from a
    per-state table that is recomputed only after a parameter change.
    """

    def __init__(self, config: AgentConfig, n_states: int, n_actions: int = 4):
        self.config = config
        self.n_states = n_states
        self.net = init_network(n_states, n_actions, config.hidden, seed=stream(config.seed, "init"),
                                activation=config.activation)
        self.adam = AdamState.for_network(self.net, config.beta1, config.beta2, config.eps_adam)
        self.buffer = ReplayBuffer(config.buffer_capacity, config.replay_mode, config.lam, config.exponent_cap)
        self.window = TDWindow(config.window)
        self.explore_rng = stream(config.seed, "explore")
        self.replay_rng = stream(config.seed, "replay")
        self.target_net = self.net.copy() if config.target_sync_every else None
        self.losses: list[float] = []
        self.last_eta = config.lr
        self._q = state_q_table(self.net)
        self._q_target = self._q if self.target_net is None else state_q_table(self.target_net)

    @property
    def train_steps(self) -> int:
        return len(self.losses)

    def q_table(self) -> np.ndarray:
        return self._q

    def current_lr(self) -> float:
        return adaptive_lr(self.config.lr, self.config.kappa, self.window.mean)

    def _targets(self, next_states: np.ndarray, rewards: np.ndarray, dones: np.ndarray) -> np.ndarray:
        best_next = self._q_target.max(axis=1)[next_states]
        return np.where(dones, rewards, rewards + self.config.gamma * best_next)

    def train_step(self) -> tuple[float, float]:
        """Sample, take one optimizer step on the mean squared TD loss, refresh sampled weights.

        Returns ``(loss, step_size_used)``; the loss is measured before the update.
        """
        cfg = self.config
        if len(self.buffer) < cfg.warmup:
            raise BufferBelowWarmup(f"buffer holds {len(self.buffer)} < warmup {cfg.warmup}")
        batch = self.buffer.sample(cfg.batch_size, self.replay_rng)

        y = self._targets(batch.next_states, batch.rewards, batch.dones)
        grads = backward_indexed(self.net, batch.states, batch.actions, y)
        self.window.push(np.mean(np.abs(grads.residuals)))
        eta = self.current_lr()
        if cfg.optimizer is OptimizerKind.ADAM:
            adam_step(self.net, self.adam, grads, eta)
        else:
            sgd_step(self.net, grads, eta)
        self.losses.append(grads.loss)
        self.last_eta = eta

        self._q = state_q_table(self.net)
        if self.target_net is None:
            self._q_target = self._q
        elif self.train_steps % cfg.target_sync_every == 0:
            self.target_net.params[...] = self.net.params
            self._q_target = self._q.copy()

        # TD errors under the updated parameters drive the new replay weights
        y_new = self._targets(batch.next_states, batch.rewards, batch.dones)
        self.buffer.refresh_weights(batch.indices, y_new - self._q[batch.states, batch.actions])
        return grads.loss, eta

    def run_episode(self, env: FrozenLake) -> EpisodeResult:
        """Play one epsilon-greedy episode, storing transitions and training once per step after warmup."""
        cfg = self.config
        s = env.reset()
        total = 0.0
        losses = []
        while True:
            q_s = self._q[s]
            a = select_action(self.net, s, cfg.epsilon, self.explore_rng, q=q_s)
            out = env.step(a)
            if out.done:
                y = out.reward
            else:
                y = out.reward + cfg.gamma * float(self._q_target[out.next_state].max())
            self.buffer.push(Transition(s, a, out.reward, out.next_state, out.done), y - float(q_s[a]))
            if len(self.buffer) >= cfg.warmup:
                loss, _ = self.train_step()
                losses.append(loss)
            total += out.reward
            s = out.next_state
            if out.done or out.truncated:
                break
        return EpisodeResult(
            steps=env.steps_taken,
            ret=total,
            win=out.done and out.reward > 0.0,
            mean_loss=float(np.mean(losses)) if losses else None,
            eta_last=self.last_eta,
            td_mean=self.window.mean,
            train_steps=len(losses),
        )
