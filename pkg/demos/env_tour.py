"""A walk through the gridworld: layouts, slipping, exact transitions and change events."""
# %%
import numpy as np

from idem_dqn.env import ACTION_NAMES, LEFT, RIGHT, FrozenLake, inject_goal_relocation, inject_tile_stability_change

env = FrozenLake.from_name("4x4", slippery=True, seed=0)
print(env.grid.to_text())
print("states:", env.n_states, "max steps:", env.max_steps, "shortest path:", env.grid.shortest_path())

# %% Slipping: asking for Left from cell 9 lands Up, Left or Down with equal odds.
counts = {}
for _ in range(30_000):
    env.position, env.steps_taken, env.terminated = 9, 0, False
    nxt = env.step(LEFT).next_state
    counts[nxt] = counts.get(nxt, 0) + 1
print({k: round(v / 30_000, 3) for k, v in sorted(counts.items())})
print("exact:", env.transition_model(9, LEFT))

# %% The deterministic variant always moves where it is told; walls clamp.
det = FrozenLake.from_name("4x4", slippery=False)
print([det.step(a).next_state for a in (LEFT, RIGHT, RIGHT)], "via", [ACTION_NAMES[a] for a in (LEFT, RIGHT, RIGHT)])

# %% Change events mutate the environment in place.
rng = np.random.default_rng(1)
moved = inject_goal_relocation(env, rng, episode_index=250)
print(moved.kind.value, moved.payload)
print(env.grid.to_text())
shaky = inject_tile_stability_change(env, rng, episode_index=500, fraction=0.25)
for cell, dist in shaky.payload.items():
    print(f"cell {cell}: side/intended/side = {np.round(dist, 3).tolist()}")
