"""Train one IDEM-DQN agent on the slip-free 4x4 map and read off its greedy route."""
# %%
from idem_dqn.agent import Agent, AgentConfig, evaluate, greedy_policy
from idem_dqn.env import ACTION_NAMES, FrozenLake

env = FrozenLake.from_name("4x4", slippery=False, seed=0)
config = AgentConfig(lr=1e-3, batch_size=64, buffer_capacity=2000, warmup=100, seed=0)
agent = Agent(config, env.n_states)

# %% Faster settings than the defaults so this finishes in seconds.
for episode in range(400):
    result = agent.run_episode(env)
    if episode % 100 == 99:
        print(f"episode {episode + 1}: steps={result.steps} win={result.win} "
              f"loss={result.mean_loss:.2e} lr={result.eta_last:.2e}")

# %%
policy = greedy_policy(agent.net)
arrows = {"Left": "<", "Down": "v", "Right": ">", "Up": "^"}
rows = env.grid.to_text().splitlines()
for r, row in enumerate(rows):
    print(" ".join(ch if ch in "HG" else arrows[ACTION_NAMES[policy[r * 4 + c]]] for c, ch in enumerate(row)))
ev = evaluate(agent.net, env, 1, 0)
print("greedy steps to goal:", ev.avg_winning_steps, "optimum:", env.grid.shortest_path())
