"""Goal moves and tile-stability changes during training, with recovery times."""
# %%
import sys
from pathlib import Path

from idem_dqn.agent import AgentConfig
from idem_dqn.harness import DynamicSchedule, ExperimentSpec, run_dynamic

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results/demo-dynamic")
schedule = DynamicSchedule(gap_range=(100, 200))
spec = ExperimentSpec(name="demo-dynamic", map="4x4", agent=AgentConfig(episodes=600, batch_size=128),
                      seeds=(0,), eval_episodes=300, schedule=schedule, output_dir=out)
result = run_dynamic(spec)

# %% Both variants see the same events because they share the seed's schedule stream.
for replica in result.replicas:
    print(replica.variant)
    for event, rec in zip(replica.events, replica.recoveries):
        print(f"  episode {event.episode_index:4d} {event.kind.value:16s} recovered after {rec} episodes")
    print(f"  final greedy win rate {replica.evaluation.win_rate:.3f}")
