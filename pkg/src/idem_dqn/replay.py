"""FIFO replay buffer with TD-error exponential weighting.

Each stored transition carries weight ``exp(lam * |td_error|)`` (exponent
capped) and is drawn with probability proportional to it. ``Mode.UNIFORM``
ignores the weights, which gives the plain DQN buffer.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyBuffer, NonFiniteTDError, UnoccupiedSlot

DEFAULT_EXPONENT_CAP = 50.0
DUMP_COLUMNS = ("slot", "state", "action", "reward", "next_state", "done", "td_error", "weight")


class Mode(str, enum.Enum):
    WEIGHTED = "weighted"
    UNIFORM = "uniform"


def weights_of(deltas: np.ndarray, lam: float, cap: float = DEFAULT_EXPONENT_CAP) -> np.ndarray:
    return np.exp(np.minimum(lam * np.abs(deltas), cap))


def weight_of(delta: float, lam: float, cap: float = DEFAULT_EXPONENT_CAP) -> float:
    """``exp(min(lam * |delta|, cap))``; always >= 1."""
    if not (lam > 0.0 and cap > 0.0):
        raise ConfigError("lam and cap must be > 0")
    if np.isnan(delta):
        raise NonFiniteTDError("TD error is NaN")
    return float(weights_of(np.array([delta], dtype=np.float64), lam, cap)[0])


@dataclass
class Transition:
    state: int
    action: int
    reward: float
    next_state: int
    done: bool
    td_error: float = 0.0
    weight: float = 1.0


@dataclass
class SampleBatch:
    indices: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    td_errors: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def transitions(self) -> list[Transition]:
        return [
            Transition(int(s), int(a), float(r), int(s2), bool(d), float(td), float(w))
            for s, a, r, s2, d, td, w in zip(self.states, self.actions, self.rewards, self.next_states,
                                             self.dones, self.td_errors, self.weights)
        ]


class ReplayBuffer:
    def __init__(self, capacity: int = 3000, mode: Mode | str = Mode.WEIGHTED, lam: float = 0.5,
                 exponent_cap: float = DEFAULT_EXPONENT_CAP):
        if capacity < 1:
            raise ConfigError("capacity must be >= 1")
        if not (lam > 0.0 and exponent_cap > 0.0):
            raise ConfigError("lam and exponent_cap must be > 0")
        self.capacity = capacity
        self.mode = Mode(mode)
        self.lam = lam
        self.exponent_cap = exponent_cap
        self.states = np.zeros(capacity, dtype=np.int64)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros(capacity, dtype=np.int64)
        self.dones = np.zeros(capacity, dtype=bool)
        self.td_errors = np.zeros(capacity)
        self.weights = np.ones(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, transition: Transition, td_error: float) -> int:
        """Store ``transition`` with weight from ``td_error``; overwrite the oldest when full."""
        if not np.isfinite(td_error):
            raise NonFiniteTDError(f"TD error {td_error} is not finite")
        slot = self.cursor
        self.states[slot] = transition.state
        self.actions[slot] = transition.action
        self.rewards[slot] = transition.reward
        self.next_states[slot] = transition.next_state
        self.dones[slot] = transition.done
        self.td_errors[slot] = td_error
        self.weights[slot] = weight_of(td_error, self.lam, self.exponent_cap)
        self.cursor = (slot + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return slot

    def transition(self, slot: int) -> Transition:
        self._check_slots(np.array([slot]))
        return Transition(int(self.states[slot]), int(self.actions[slot]), float(self.rewards[slot]),
                          int(self.next_states[slot]), bool(self.dones[slot]),
                          float(self.td_errors[slot]), float(self.weights[slot]))

    def oldest_first(self) -> np.ndarray:
        """Occupied slot indices ordered from the oldest to the newest entry."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def probabilities(self) -> np.ndarray:
        """Sampling distribution over occupied slots ``0 .. size-1``."""
        if self.size == 0:
            raise EmptyBuffer("buffer is empty")
        if self.mode is Mode.UNIFORM:
            return np.full(self.size, 1.0 / self.size)
        w = self.weights[:self.size]
        return w / w.sum()

    def sample(self, batch_size: int, rng: np.random.Generator) -> SampleBatch:
        """Draw ``batch_size`` slots with replacement by inverse-CDF sampling.

        Both modes consume exactly ``batch_size`` uniforms from ``rng``. The
        uniforms are sorted first (a faster search), so the returned slots come
        in ascending order.
        """
        if self.size == 0:
            raise EmptyBuffer("cannot sample from an empty buffer")
        if batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        u = np.sort(rng.random(batch_size))
        if self.mode is Mode.UNIFORM:
            idx = (u * self.size).astype(np.intp)
        else:
            cdf = np.cumsum(self.weights[:self.size])
            idx = np.searchsorted(cdf, u * cdf[-1], side="right")
        np.minimum(idx, self.size - 1, out=idx)
        return SampleBatch(idx, self.states[idx], self.actions[idx], self.rewards[idx],
                           self.next_states[idx], self.dones[idx], self.td_errors[idx], self.weights[idx])

    def refresh_weights(self, indices, deltas) -> None:
        """Set new TD errors (and weights) for ``indices``; a repeated slot keeps its last delta."""
        idx = np.asarray(indices, dtype=np.intp)
        deltas = np.asarray(deltas, dtype=np.float64)
        if idx.shape != deltas.shape:
            raise ConfigError("indices and deltas must have the same length")
        self._check_slots(idx)
        if not np.all(np.isfinite(deltas)):
            raise NonFiniteTDError("refresh received a non-finite TD error")
        last = np.full(self.size, -1, dtype=np.intp)
        np.maximum.at(last, idx, np.arange(len(idx)))
        slots = np.flatnonzero(last >= 0)
        fresh = deltas[last[slots]]
        self.td_errors[slots] = fresh
        self.weights[slots] = weights_of(fresh, self.lam, self.exponent_cap)

    def _check_slots(self, idx: np.ndarray) -> None:
        if idx.size and (idx.min() < 0 or idx.max() >= self.size):
            raise UnoccupiedSlot(f"slot index outside occupied range 0..{self.size - 1}")

    def dump_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(DUMP_COLUMNS)
            for slot in range(self.size):
                writer.writerow([slot, int(self.states[slot]), int(self.actions[slot]),
                                 f"{self.rewards[slot]:.9g}", int(self.next_states[slot]),
                                 int(self.dones[slot]), f"{self.td_errors[slot]:.9g}",
                                 f"{self.weights[slot]:.9g}"])
