"""A small learning-rate x beta1 grid for IDEM-DQN."""
# %%
import sys
from pathlib import Path

from idem_dqn.agent import AgentConfig
from idem_dqn.harness import ExperimentSpec, GridSpec, run_ablation

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results/demo-ablation")
base = ExperimentSpec(name="demo-ablation", agent=AgentConfig(episodes=300, batch_size=128), variants=("idem",),
                      seeds=(0,), eval_episodes=200, output_dir=out)
result = run_ablation(GridSpec((1e-4, 1e-3), (0.8, 0.99), base))

# %%
for (lr, beta1), s in result.summaries.items():
    print(f"lr={lr:g} beta1={beta1:g} win rate {s.win_rate:.3f}")
print("best cell:", result.best_cell())
