"""Slippery FrozenLake-style gridworld with in-place mutation for dynamic runs.

Actions follow the usual FrozenLake numbering: 0 Left, 1 Down, 2 Right, 3 Up.
A slippery move lands in the intended direction or in one of the two
perpendicular directions; the order of the three outcomes is always
``[(a - 1) % 4, a, (a + 1) % 4]``, so Left slips to Up or Down.
"""
from __future__ import annotations

import copy
import enum
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DuplicateStartOrGoal,
    IndexOutOfRange,
    MissingStartOrGoal,
    NonRectangular,
    NoValidRelocation,
    SteppedAfterTermination,
    Unsolvable,
)

LEFT, DOWN, RIGHT, UP = 0, 1, 2, 3
N_ACTIONS = 4
ACTION_NAMES = ("Left", "Down", "Right", "Up")
_DELTAS = ((0, -1), (1, 0), (0, 1), (-1, 0))

BUILTIN_MAPS = ("4x4", "8x8")
RELOCATION_RETRIES = 100


class Cell(str, enum.Enum):
    START = "S"
    FROZEN = "F"
    HOLE = "H"
    GOAL = "G"


@dataclass
class GridMap:
    rows: int
    cols: int
    cells: list[Cell]

    @property
    def n_states(self) -> int:
        return self.rows * self.cols

    @property
    def start(self) -> int:
        return self.cells.index(Cell.START)

    @property
    def goal(self) -> int:
        return self.cells.index(Cell.GOAL)

    def indices(self, kind: Cell) -> list[int]:
        return [i for i, c in enumerate(self.cells) if c is kind]

    def is_terminal(self, index: int) -> bool:
        return self.cells[index] in (Cell.HOLE, Cell.GOAL)

    def move(self, index: int, direction: int) -> int:
        """Cell reached from ``index`` moving one step; off-grid moves stay put."""
        r, c = divmod(index, self.cols)
        dr, dc = _DELTAS[direction]
        r2, c2 = r + dr, c + dc
        if 0 <= r2 < self.rows and 0 <= c2 < self.cols:
            return r2 * self.cols + c2
        return index

    def shortest_path(self) -> int | None:
        """BFS move count from Start to Goal through non-hole cells, or None."""
        start, goal = self.start, self.goal
        dist = {start: 0}
        queue = deque([start])
        while queue:
            i = queue.popleft()
            if i == goal:
                return dist[i]
            if self.cells[i] is Cell.HOLE:
                continue
            for d in range(N_ACTIONS):
                j = self.move(i, d)
                if j not in dist and self.cells[j] is not Cell.HOLE:
                    dist[j] = dist[i] + 1
                    queue.append(j)
        return None

    def is_solvable(self) -> bool:
        return self.shortest_path() is not None

    def validate(self) -> None:
        n_start = self.cells.count(Cell.START)
        n_goal = self.cells.count(Cell.GOAL)
        if n_start == 0 or n_goal == 0:
            raise MissingStartOrGoal(f"map needs one S and one G (found {n_start} S, {n_goal} G)")
        if n_start > 1 or n_goal > 1:
            raise DuplicateStartOrGoal(f"map needs one S and one G (found {n_start} S, {n_goal} G)")
        if not self.is_solvable():
            raise Unsolvable("no hole-free path connects S to G")

    def to_text(self) -> str:
        chars = "".join(c.value for c in self.cells)
        return "\n".join(chars[r * self.cols:(r + 1) * self.cols] for r in range(self.rows))

    def copy(self) -> GridMap:
        return GridMap(self.rows, self.cols, list(self.cells))


def parse_map(text: str) -> GridMap:
    """Parse rows of ``S/F/H/G`` characters into a validated :class:`GridMap`."""
    lines = [line.strip() for line in text.strip().splitlines()]
    if not lines or not lines[0]:
        raise NonRectangular("empty map")
    cols = len(lines[0])
    if any(len(line) != cols for line in lines):
        raise NonRectangular(f"rows have unequal lengths: {[len(x) for x in lines]}")
    try:
        cells = [Cell(ch) for line in lines for ch in line]
    except ValueError as exc:
        raise NonRectangular(f"unexpected map character: {exc}") from None
    grid = GridMap(len(lines), cols, cells)
    grid.validate()
    return grid


def load_map(name_or_path: str | Path) -> GridMap:
    """Load one of the builtin layouts (``"4x4"``, ``"8x8"``) or a map file."""
    if str(name_or_path) in BUILTIN_MAPS:
        text = resources.files("idem_dqn").joinpath(f"maps/{name_or_path}.txt").read_text("utf-8")
    else:
        text = Path(name_or_path).read_text(encoding="utf-8")
    return parse_map(text)


def default_max_steps(grid: GridMap) -> int:
    return 100 if grid.n_states <= 16 else 200


@dataclass
class SlipModel:
    """Per-tile distribution over ``(side (a-1), intended, side (a+1))``.

    ``lateral`` is the default probability of each perpendicular slip; 1/3
    reproduces the uniform FrozenLake split and 0 disables slipping.
    """

    lateral: float = 1.0 / 3.0
    overrides: dict[int, tuple[float, float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.lateral <= 0.5:
            raise ConfigError(f"lateral slip probability must lie in [0, 1/2], got {self.lateral}")
        for dist in self.overrides.values():
            _check_distribution(dist)

    @staticmethod
    def from_lateral(p_side1: float, p_side2: float) -> tuple[float, float, float]:
        return (p_side1, 1.0 - p_side1 - p_side2, p_side2)

    def distribution(self, index: int) -> tuple[float, float, float]:
        dist = self.overrides.get(index)
        if dist is None:
            return self.from_lateral(self.lateral, self.lateral)
        return dist


def _check_distribution(dist) -> None:
    if len(dist) != 3 or min(dist) < 0.0 or abs(sum(dist) - 1.0) > 1e-12:
        raise ConfigError(f"invalid slip distribution {dist}")


@dataclass
class StepOutcome:
    next_state: int
    reward: float
    done: bool
    truncated: bool


class EventKind(str, enum.Enum):
    GOAL_RELOCATION = "goal_relocation"
    TILE_STABILITY = "tile_stability"


@dataclass
class ChangeEvent:
    episode_index: int
    kind: EventKind
    payload: dict


class FrozenLake:
    """Gridworld instance: map, slip model, episode state and its own RNG."""

    def __init__(self, grid: GridMap, slip: SlipModel | None = None,
                 max_steps: int | None = None, seed=None):
        grid.validate()
        self.grid = grid
        self.slip = slip if slip is not None else SlipModel()
        self.max_steps = max_steps if max_steps is not None else default_max_steps(grid)
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        self.rng = np.random.default_rng(seed)
        self.position = grid.start
        self.steps_taken = 0
        self.terminated = False

    @classmethod
    def from_name(cls, name: str | Path = "4x4", slippery: bool = True,
                  max_steps: int | None = None, seed=None) -> FrozenLake:
        slip = SlipModel(1.0 / 3.0 if slippery else 0.0)
        return cls(load_map(name), slip, max_steps=max_steps, seed=seed)

    @property
    def n_states(self) -> int:
        return self.grid.n_states

    @property
    def n_actions(self) -> int:
        return N_ACTIONS

    @property
    def slippery(self) -> bool:
        return self.slip.lateral > 0.0 or any(d[1] < 1.0 for d in self.slip.overrides.values())

    def reset(self) -> int:
        self.position = self.grid.start
        self.steps_taken = 0
        self.terminated = False
        return self.position

    def step(self, action: int) -> StepOutcome:
        if self.terminated:
            raise SteppedAfterTermination("call reset() before stepping a finished episode")
        if not 0 <= action < N_ACTIONS:
            raise IndexOutOfRange(f"action {action} not in 0..3")
        p_side1, p_int, p_side2 = self.slip.distribution(self.position)
        u = self.rng.random()
        if u < p_side1:
            direction = (action - 1) % N_ACTIONS
        elif u < p_side1 + p_int or p_side2 <= 0.0:
            direction = action
        else:
            direction = (action + 1) % N_ACTIONS
        nxt = self.grid.move(self.position, direction)
        self.position = nxt
        self.steps_taken += 1
        kind = self.grid.cells[nxt]
        reward = 1.0 if kind is Cell.GOAL else 0.0
        done = kind is Cell.GOAL or kind is Cell.HOLE
        truncated = not done and self.steps_taken >= self.max_steps
        self.terminated = done or truncated
        return StepOutcome(nxt, reward, done, truncated)

    def transition_model(self, state: int, action: int) -> list[tuple[int, float, float, bool]]:
        """Exact ``(next_state, probability, reward, done)`` outcomes of one step."""
        if not 0 <= state < self.n_states:
            raise IndexOutOfRange(f"state {state} outside 0..{self.n_states - 1}")
        if self.grid.is_terminal(state):
            return [(state, 1.0, 0.0, True)]
        dist = self.slip.distribution(state)
        merged: dict[int, float] = {}
        for offset, p in zip((-1, 0, 1), dist):
            if p <= 0.0:
                continue
            nxt = self.grid.move(state, (action + offset) % N_ACTIONS)
            merged[nxt] = merged.get(nxt, 0.0) + p
        out = []
        for nxt, p in merged.items():
            kind = self.grid.cells[nxt]
            out.append((nxt, p, 1.0 if kind is Cell.GOAL else 0.0, self.grid.is_terminal(nxt)))
        return out

    def copy(self, seed=None) -> FrozenLake:
        """Independent copy with fresh episode state; ``seed`` reseeds the copy's RNG."""
        other = copy.deepcopy(self)
        if seed is not None:
            other.rng = np.random.default_rng(seed)
        other.reset()
        return other


def encode_state(index: int, n_states: int) -> np.ndarray:
    if not 0 <= index < n_states:
        raise IndexOutOfRange(f"state {index} outside 0..{n_states - 1}")
    vec = np.zeros(n_states)
    vec[index] = 1.0
    return vec


def inject_goal_relocation(env: FrozenLake, rng: np.random.Generator,
                           episode_index: int = 0,
                           max_retries: int = RELOCATION_RETRIES) -> ChangeEvent:
    """Move the goal to a random Frozen cell, keeping the map solvable.

    The old goal becomes Frozen. Raises :class:`NoValidRelocation` when no
    candidate yields a solvable map within ``max_retries`` draws.
    """
    grid = env.grid
    old_goal = grid.goal
    candidates = grid.indices(Cell.FROZEN)
    if not candidates:
        raise NoValidRelocation("no Frozen cell available for the goal")
    for _ in range(max_retries):
        target = candidates[int(rng.integers(len(candidates)))]
        trial = grid.copy()
        trial.cells[old_goal] = Cell.FROZEN
        trial.cells[target] = Cell.GOAL
        if trial.is_solvable():
            env.grid = trial
            return ChangeEvent(episode_index, EventKind.GOAL_RELOCATION,
                               {"old_goal": old_goal, "new_goal": target})
    raise NoValidRelocation(f"no solvable goal position found in {max_retries} draws")


def inject_tile_stability_change(env: FrozenLake, rng: np.random.Generator,
                                 episode_index: int = 0, fraction: float = 0.25,
                                 slip_range: tuple[float, float] = (0.0, 0.5)) -> ChangeEvent:
    """Give a random subset of Frozen tiles new per-tile slip distributions.

    Each affected tile draws both perpendicular slip probabilities
    independently from ``slip_range`` (a sub-interval of ``[0, 1/2]``).
    """
    if not env.slippery:
        raise ConfigError("tile stability changes need the slippery variant")
    lo, hi = slip_range
    if not 0.0 <= lo <= hi <= 0.5:
        raise ConfigError(f"slip_range must satisfy 0 <= lo <= hi <= 0.5, got {slip_range}")
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"fraction must lie in [0, 1], got {fraction}")
    frozen = env.grid.indices(Cell.FROZEN)
    k = int(round(fraction * len(frozen)))
    chosen = sorted(int(i) for i in rng.choice(frozen, size=k, replace=False)) if k else []
    payload = {}
    for cell in chosen:
        p1 = float(rng.uniform(lo, hi))
        p2 = float(rng.uniform(lo, hi))
        dist = SlipModel.from_lateral(p1, p2)
        _check_distribution(dist)
        env.slip.overrides[cell] = dist
        payload[cell] = dist
    return ChangeEvent(episode_index, EventKind.TILE_STABILITY, payload)
