import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idem_dqn.env import (
    DOWN,
    LEFT,
    RIGHT,
    UP,
    Cell,
    EventKind,
    FrozenLake,
    GridMap,
    SlipModel,
    encode_state,
    inject_goal_relocation,
    inject_tile_stability_change,
    load_map,
    parse_map,
)
from idem_dqn.errors import (
    ConfigError,
    DuplicateStartOrGoal,
    IndexOutOfRange,
    MissingStartOrGoal,
    NonRectangular,
    NoValidRelocation,
    SteppedAfterTermination,
    Unsolvable,
)


def deterministic(name="4x4", **kw):
    return FrozenLake.from_name(name, slippery=False, **kw)


# ------------------------------------------------------------------ maps

def test_parse_minimal_map():
    g = parse_map("SG")
    assert (g.rows, g.cols, g.start, g.goal) == (1, 2, 0, 1)


def test_parse_standard_4x4_holes():
    g = parse_map("SFFF\nFHFH\nFFFH\nHFFG")
    assert (g.rows, g.cols) == (4, 4)
    assert g.indices(Cell.HOLE) == [5, 7, 11, 12]
    assert g.goal == 15


def test_builtin_maps_match_reference_layouts():
    assert load_map("4x4").to_text() == "SFFF\nFHFH\nFFFH\nHFFG"
    g8 = load_map("8x8")
    assert (g8.rows, g8.cols, g8.start, g8.goal) == (8, 8, 0, 63)
    assert len(g8.indices(Cell.HOLE)) == 10


@pytest.mark.parametrize("text, error", [
    ("SH\nHG", Unsolvable),
    ("SFF\nFG", NonRectangular),
    ("", NonRectangular),
    ("SX\nFG", NonRectangular),
    ("FF\nFG", MissingStartOrGoal),
    ("SF\nFF", MissingStartOrGoal),
    ("SS\nFG", DuplicateStartOrGoal),
    ("SG\nFG", DuplicateStartOrGoal),
])
def test_parse_errors(text, error):
    with pytest.raises(error):
        parse_map(text)


def test_bfs_shortest_paths():
    assert load_map("4x4").shortest_path() == 6
    assert load_map("8x8").shortest_path() == 14
    assert parse_map("SG").shortest_path() == 1


def test_map_text_round_trip(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("SFH\nFFG\n")
    assert load_map(path).to_text() == "SFH\nFFG"


# ----------------------------------------------------------- reset/step

@pytest.mark.parametrize("name", ["4x4", "8x8"])
def test_reset_returns_start(name):
    env = FrozenLake.from_name(name, seed=0)
    assert env.reset() == 0
    while not env.terminated:
        env.step(RIGHT)
    assert env.reset() == 0
    assert env.steps_taken == 0 and not env.terminated


def test_deterministic_moves():
    env = deterministic()
    out = env.step(RIGHT)
    assert (out.next_state, out.reward, out.done, out.truncated) == (1, 0.0, False, False)
    env.position = 14
    out = env.step(RIGHT)
    assert (out.next_state, out.reward, out.done) == (15, 1.0, True)


def test_off_grid_move_stays_put():
    env = deterministic()
    assert env.step(LEFT).next_state == 0
    assert env.step(UP).next_state == 0


def test_hole_ends_episode_without_reward():
    env = deterministic()
    env.step(DOWN)
    out = env.step(RIGHT)
    assert (out.next_state, out.reward, out.done) == (5, 0.0, True)


def test_step_after_termination_raises():
    env = deterministic()
    env.position = 14
    env.step(RIGHT)
    with pytest.raises(SteppedAfterTermination):
        env.step(LEFT)


def test_truncation_at_max_steps():
    env = deterministic(max_steps=3)
    outs = [env.step(LEFT) for _ in range(3)]
    assert [o.truncated for o in outs] == [False, False, True]
    assert not outs[-1].done and env.terminated
    assert env.steps_taken == 3


def test_default_max_steps():
    assert FrozenLake.from_name("4x4").max_steps == 100
    assert FrozenLake.from_name("8x8").max_steps == 200


def test_invalid_action():
    with pytest.raises(IndexOutOfRange):
        deterministic().step(4)


def test_slip_outcome_order():
    # with all probability on the first perpendicular, Left becomes Up ((a - 1) % 4 == 3)
    env = FrozenLake(load_map("4x4"), SlipModel(overrides={9: (1.0, 0.0, 0.0)}), seed=0)
    env.position = 9
    assert env.step(LEFT).next_state == 5
    env.reset()
    env.slip.overrides[9] = (0.0, 0.0, 1.0)
    env.position = 9
    assert env.step(LEFT).next_state == 13


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), actions=st.lists(st.integers(0, 3), min_size=1, max_size=300))
def test_step_invariants(seed, actions):
    env = FrozenLake.from_name("4x4", seed=seed, max_steps=50)
    for a in actions:
        if env.terminated:
            env.reset()
        out = env.step(a)
        assert 0 <= out.next_state < 16
        assert env.steps_taken <= env.max_steps
        assert out.reward in (0.0, 1.0)
        assert (out.reward == 1.0) == (env.grid.cells[out.next_state] is Cell.GOAL)
        if env.terminated:
            assert env.grid.is_terminal(env.position) or env.steps_taken == env.max_steps


def test_same_seed_same_trajectory():
    a, b = FrozenLake.from_name("8x8", seed=11), FrozenLake.from_name("8x8", seed=11)
    for _ in range(200):
        for env in (a, b):
            if env.terminated:
                env.reset()
        assert a.step(RIGHT) == b.step(RIGHT)


# ------------------------------------------------------ transition model

@pytest.mark.parametrize("name", ["4x4", "8x8"])
@pytest.mark.parametrize("slippery", [True, False])
def test_transition_model_is_a_distribution(name, slippery):
    env = FrozenLake.from_name(name, slippery=slippery)
    for s in range(env.n_states):
        for a in range(4):
            outcomes = env.transition_model(s, a)
            assert math.isclose(sum(p for _, p, _, _ in outcomes), 1.0, abs_tol=1e-12)
            assert len({n for n, _, _, _ in outcomes}) == len(outcomes)
            assert all(p > 0 for _, p, _, _ in outcomes)


def test_transition_model_terminal_self_loop():
    env = FrozenLake.from_name("4x4")
    assert env.transition_model(5, LEFT) == [(5, 1.0, 0.0, True)]
    assert env.transition_model(15, UP) == [(15, 1.0, 0.0, True)]


def test_transition_model_corner_merges_clamped_moves():
    env = FrozenLake.from_name("4x4")
    # Left from 0: Up and Left clamp to 0, Down reaches 4
    model = dict((n, p) for n, p, _, _ in env.transition_model(0, LEFT))
    assert model == pytest.approx({0: 2 / 3, 4: 1 / 3})


def test_transition_model_matches_sampling():
    env = FrozenLake.from_name("4x4", seed=3)
    model = {n: p for n, p, _, _ in env.transition_model(6, DOWN)}
    n = 30_000
    counts = {}
    for _ in range(n):
        env.position, env.steps_taken, env.terminated = 6, 0, False
        s2 = env.step(DOWN).next_state
        counts[s2] = counts.get(s2, 0) + 1
    assert set(counts) == set(model)
    for s2, p in model.items():
        assert abs(counts[s2] / n - p) <= 4 * math.sqrt(p * (1 - p) / n)


# ---------------------------------------------------------- encode_state

def test_encode_state_examples():
    assert encode_state(0, 4).tolist() == [1, 0, 0, 0]
    assert encode_state(3, 4).tolist() == [0, 0, 0, 1]
    v = encode_state(15, 16)
    assert v.sum() == 1.0 and v[15] == 1.0


@pytest.mark.parametrize("index", [-1, 16])
def test_encode_state_out_of_range(index):
    with pytest.raises(IndexOutOfRange):
        encode_state(index, 16)


# ---------------------------------------------------------- change events

def test_goal_relocation_keeps_map_solvable():
    rng = np.random.default_rng(0)
    env = FrozenLake.from_name("4x4", seed=0)
    for _ in range(20):
        old = env.grid.goal
        frozen_before = set(env.grid.indices(Cell.FROZEN))
        ev = inject_goal_relocation(env, rng, episode_index=7)
        assert ev.kind is EventKind.GOAL_RELOCATION and ev.episode_index == 7
        assert ev.payload["old_goal"] == old
        assert ev.payload["new_goal"] in frozen_before
        assert env.grid.goal == ev.payload["new_goal"]
        assert env.grid.cells[old] is Cell.FROZEN
        assert env.grid.cells.count(Cell.GOAL) == 1
        assert env.grid.is_solvable()


def test_goal_relocation_without_legal_target():
    env = FrozenLake(parse_map("SG\nHH\nHF"), seed=0)
    with pytest.raises(NoValidRelocation):
        inject_goal_relocation(env, np.random.default_rng(0))
    assert env.grid.goal == 1


def test_goal_relocation_without_frozen_cells():
    env = FrozenLake(parse_map("SG"), seed=0)
    with pytest.raises(NoValidRelocation):
        inject_goal_relocation(env, np.random.default_rng(0))


def test_tile_change_degenerate_range_leaves_model_unchanged():
    env = FrozenLake.from_name("4x4")
    before = {(s, a): sorted(env.transition_model(s, a)) for s in range(16) for a in range(4)}
    inject_tile_stability_change(env, np.random.default_rng(0), fraction=1.0, slip_range=(1 / 3, 1 / 3))
    for (s, a), outcomes in before.items():
        after = sorted(env.transition_model(s, a))
        assert [n for n, *_ in after] == [n for n, *_ in outcomes]
        assert np.allclose([p for _, p, *_ in after], [p for _, p, *_ in outcomes], atol=1e-15)


def test_tile_change_zero_fraction_is_empty():
    env = FrozenLake.from_name("4x4")
    ev = inject_tile_stability_change(env, np.random.default_rng(0), fraction=0.0)
    assert ev.payload == {} and env.slip.overrides == {}


def test_tile_change_payload():
    env = FrozenLake.from_name("8x8")
    ev = inject_tile_stability_change(env, np.random.default_rng(1), fraction=0.25, slip_range=(0.0, 0.5))
    frozen = env.grid.indices(Cell.FROZEN)
    assert len(ev.payload) == round(0.25 * len(frozen))
    for cell, dist in ev.payload.items():
        assert cell in frozen
        assert min(dist) >= 0 and math.isclose(sum(dist), 1.0, abs_tol=1e-12)
        assert 0.0 <= dist[0] <= 0.5 and 0.0 <= dist[2] <= 0.5
        assert env.slip.distribution(cell) == dist


def test_tile_change_requires_slippery():
    with pytest.raises(ConfigError):
        inject_tile_stability_change(deterministic(), np.random.default_rng(0))


@pytest.mark.parametrize("lateral", [-0.1, 0.6])
def test_slip_model_rejects_bad_lateral(lateral):
    with pytest.raises(ConfigError):
        SlipModel(lateral)


def test_copy_is_independent():
    env = FrozenLake.from_name("4x4", seed=0)
    other = env.copy(seed=1)
    inject_goal_relocation(other, np.random.default_rng(0))
    assert env.grid.goal == 15 and other.grid.goal != 15


def test_gridmap_copy_independent():
    g = load_map("4x4")
    h = g.copy()
    h.cells[1] = Cell.HOLE
    assert g.cells[1] is Cell.FROZEN
    assert isinstance(h, GridMap)
