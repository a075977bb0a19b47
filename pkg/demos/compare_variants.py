"""Paired DQN vs IDEM-DQN comparison on the slippery 4x4 map (shortened)."""
# %%
import sys
from pathlib import Path

from idem_dqn.agent import AgentConfig
from idem_dqn.harness import ExperimentSpec, run_comparison

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results/demo-compare")
# The full experiment uses the AgentConfig defaults (3000 episodes, batch 1000) and 10 seeds.
spec = ExperimentSpec(name="demo-compare", map="4x4", agent=AgentConfig(episodes=500, batch_size=128),
                      seeds=(0, 1, 2), eval_episodes=300, output_dir=out)
result = run_comparison(spec)

# %%
for variant, s in result.summaries.items():
    print(f"{variant:5s} win rate {s.win_rate:.3f}  winning steps {s.avg_winning_steps}  loss {s.avg_loss:.3e}")
print("per-seed win rates:", {v: s.per_seed["win_rate"] for v, s in result.summaries.items()})
print("files written to", out, "- open loss.svg for the training curves")
